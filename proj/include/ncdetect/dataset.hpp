#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ncdetect {

// Row-major so a sample is one contiguous run of floats, matching the file
// layout.
using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Label : std::uint8_t { negative = 0, positive = 1 };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

enum class TriggerPosition : std::uint8_t { start, end, random };

std::string_view to_string(TriggerPosition position);
TriggerPosition parse_trigger_position(std::string_view text);

/// Labeled embedding matrix, one row per sample.
///
/// `labels` and `poison_flags` are either empty (not loaded) or have one
/// entry per row. A flagged sample always carries the positive label since
/// the attack relabels every poisoned row to its target class.
struct EmbeddingDataset {
  EmbeddingMatrix embeddings;
  std::vector<Label> labels;
  std::vector<std::uint8_t> poison_flags;
  std::vector<std::string> ids;

  std::size_t rows() const { return static_cast<std::size_t>(embeddings.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(embeddings.cols()); }
  bool has_labels() const { return !labels.empty(); }
  bool has_poison_flags() const { return !poison_flags.empty(); }

  // Throws ConsistencyError on any broken invariant.
  void validate() const;

  // Rows in the given order; labels, flags and ids follow.
  EmbeddingDataset subset(const std::vector<std::size_t>& rows) const;
  std::vector<std::size_t> rows_with_label(Label label) const;
};

/// Index-based ids "0", "1", ... used when a file carries none.
std::vector<std::string> default_ids(std::size_t m);

struct NormalizationParams {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  // Maps into [0,1]; values outside the fitted range are clamped and
  // constant dimensions map to 0.5.
  EmbeddingDataset apply(const EmbeddingDataset& data) const;
};

struct PoisonManifest {
  std::string trigger_text;
  TriggerPosition trigger_position = TriggerPosition::end;
  double poisoning_ratio = 0.0;
  std::vector<std::string> poisoned_ids;
  std::uint64_t seed = 0;
};

// --- NCEB binary format -----------------------------------------------------
// "NCEB" | u32 version=1 | u64 m | u64 d | m*d float32, all little-endian,
// row-major.

inline constexpr std::uint32_t kNcebVersion = 1;
inline constexpr std::size_t kNcebHeaderBytes = 4 + 4 + 8 + 8;

void write_nceb(std::ostream& out, const EmbeddingMatrix& matrix);
EmbeddingMatrix read_nceb(std::istream& in);

/// `data.nceb` -> `data.labels.csv`.
std::filesystem::path labels_sidecar_path(const std::filesystem::path& embeddings_path);

/// Reads NCEB or the `id,f0,f1,...` CSV fallback (sniffed from the first
/// bytes), then the labels sidecar next to it when that file exists.
EmbeddingDataset load_embeddings(const std::filesystem::path& path);

/// As above with an explicit sidecar; the sidecar must exist.
EmbeddingDataset load_embeddings(const std::filesystem::path& path,
                                 const std::filesystem::path& labels_path);

/// Writes NCEB only. Refuses non-finite values.
void save_embeddings(const EmbeddingDataset& data, const std::filesystem::path& path);

/// `id,label,poisoned`; the poisoned column is written when flags are present.
void save_labels(const EmbeddingDataset& data, const std::filesystem::path& path);

/// Applies a sidecar to `data` in place. Row count and, where the data
/// already has non-default ids, ids must agree.
void attach_labels(EmbeddingDataset& data, const std::filesystem::path& labels_path);

// --- Transforms -------------------------------------------------------------

/// Global per-dimension min-max over every row (all classes together).
std::pair<EmbeddingDataset, NormalizationParams> normalize_minmax(const EmbeddingDataset& data);

struct SynthSpec {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_poison = 0;
  std::size_t dims = 2;
  double shift = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr double kSynthClassSeparation = 2.0;

/// Two unit-variance Gaussians with means +-1 on axis 0; poisoned rows are
/// negatives shifted by `shift` on axis 1 and labeled positive. Row order:
/// positives, negatives, poisoned.
EmbeddingDataset synth_embeddings(const SynthSpec& spec);

/// Signed feature-hashing counts before normalization. Tokens are
/// whitespace-separated and lowercased; bucket = fnv1a64 % d, sign from the
/// top hash bit (set -> -1).
Eigen::VectorXd hash_embed_counts(std::string_view text, std::size_t d);

/// L2-normalized hash_embed_counts; the zero vector for empty text.
Eigen::VectorXd hash_embed_text(std::string_view text, std::size_t d);

}  // namespace ncdetect
