#pragma once

#include "ncdetect/attack.hpp"
#include "ncdetect/dataset.hpp"
#include "ncdetect/precision.hpp"
#include "ncdetect/stats.hpp"
#include "ncdetect/tuner.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ncdetect {

struct DetectConfig {
  GridSpec grid;
  TunerConfig tuner;
  double suspicion_ratio = 0.2;
  PdsOptions pds;
};

enum class Verdict { suspicious_cluster_found, no_evidence };
std::string_view to_string(Verdict verdict);

struct DispersionSummary {
  std::string class_name;
  std::string feature;
  double mean = 0.0;
  double stddev = 0.0;
};

/// Rows of the three classes (dataset indices) and the scores computed on
/// them. A class too small for a statistic leaves that statistic empty with
/// the reason recorded.
struct SplitAnalysis {
  SplitSource source = SplitSource::ground_truth;
  std::vector<std::size_t> poisoned_rows;
  std::vector<std::size_t> nonpoisoned_pos_rows;
  std::vector<std::size_t> nonpoisoned_neg_rows;
  std::optional<PdsReport> pds;
  std::string pds_skipped;
  std::optional<EntropyComparison> entropy;
  std::string entropy_skipped;
  std::vector<DispersionSummary> dispersion;
};

struct DetectResult {
  Verdict verdict = Verdict::no_evidence;
  TuneResult tune;
  std::vector<std::size_t> positive_rows;  // dataset rows of the tuned class, projection order
  std::vector<std::size_t> flagged_rows;
  std::optional<double> recall;  // only when the input carries poison flags
  std::optional<double> precision;
  std::size_t pds_features = 0;  // combined columns kept for PDS
  std::size_t non_converged = 0;
  std::vector<SplitAnalysis> splits;  // cluster_derived first when present, then ground_truth
};

/// Normalizes globally, tunes on the positive class, flags the suspicious
/// cluster and scores both available splits. Touches no files.
DetectResult run_detect(const EmbeddingDataset& data, const DetectConfig& config);

struct DetectArtifacts {
  std::string report_json;
  std::string tuning_log_csv;
  std::string projection_csv;
  std::string histograms_csv;
};

DetectArtifacts render_detect(const DetectResult& result, const EmbeddingDataset& data,
                              const DetectConfig& config, const std::string& input_description);

/// Creates `dir` and writes report.json, tuning_log.csv, projection.csv and
/// histograms.csv.
void write_detect_artifacts(const DetectArtifacts& artifacts, const std::filesystem::path& dir);

std::string format_double(double value);

// --- attack-side runners ----------------------------------------------------

struct SynthRunConfig {
  SynthSpec spec;
  std::filesystem::path out;  // .nceb; the labels sidecar goes next to it
};

void run_synth(const SynthRunConfig& config);

struct PoisonRunConfig {
  std::filesystem::path input;
  std::filesystem::path out;
  std::filesystem::path manifest;  // empty: <out dir>/manifest.json
  double ratio = 0.1;
  std::uint64_t seed = 0;
  // Text mode (input is an id,text,label CSV).
  std::string trigger = "cf";
  TriggerPosition position = TriggerPosition::end;
  std::size_t embed_dims = 0;  // > 0: also write hash embeddings as <out stem>.nceb
  // Embedding mode (input is NCEB or embedding CSV with a labels sidecar).
  double shift = 5.0;
  std::size_t shift_axis = 1;
};

bool is_text_csv(const std::filesystem::path& path);

/// Returns the manifest that was written.
PoisonManifest run_poison(const PoisonRunConfig& config);

struct EvaluateRunConfig {
  std::filesystem::path input;
  std::filesystem::path labels;  // empty: sidecar next to input
  std::filesystem::path out;     // empty: no file
  TrainOptions train;
  double holdout = 0.3;
  std::uint64_t seed = 0;
};

AttackReport run_evaluate(const EvaluateRunConfig& config);

void write_text_file(const std::filesystem::path& path, const std::string& content);

/// Embedding dataset for the hash-embedded text records, ids and labels
/// carried over.
EmbeddingDataset hash_embed_records(const std::vector<TextRecord>& records, std::size_t dims);

}  // namespace ncdetect
