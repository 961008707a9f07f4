#pragma once

#include "ncdetect/dataset.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ncdetect {

struct TextRecord {
  std::string id;
  std::string text;
  Label label = Label::negative;
};

std::vector<TextRecord> read_text_records(const std::filesystem::path& path);
void write_text_records(const std::vector<TextRecord>& records, const std::filesystem::path& path);

/// Inserts `trigger` at the start, the end, or before a seeded-random token
/// (the end counts as a boundary too). Surrounding whitespace is preserved.
TextRecord insert_trigger_text(const TextRecord& record, std::string_view trigger,
                               TriggerPosition position, std::uint64_t seed);

/// round(ratio * m_total); throws DataError unless ratio is in (0, 0.5) and
/// the count fits in the negative class.
std::size_t poison_count(std::size_t m_total, std::size_t n_negative, double ratio);

/// Seeded uniform choice of `count` rows out of `candidates`, ascending.
std::vector<std::size_t> choose_rows(const std::vector<std::size_t>& candidates, std::size_t count,
                                     std::uint64_t seed);

struct TextPoisonResult {
  std::vector<TextRecord> records;
  std::vector<std::uint8_t> poison_flags;
  PoisonManifest manifest;
};

TextPoisonResult poison_text(const std::vector<TextRecord>& records, std::string_view trigger,
                             TriggerPosition position, double ratio, std::uint64_t seed);

struct EmbeddingPoisonResult {
  EmbeddingDataset dataset;
  PoisonManifest manifest;
};

/// Embedding-mode attack: chosen negatives get `shift` added and the
/// positive label.
EmbeddingPoisonResult poison_embeddings(const EmbeddingDataset& data, const Eigen::VectorXf& shift,
                                        double ratio, std::uint64_t seed);

/// shift * e_axis in `dims` dimensions.
Eigen::VectorXf axis_shift(std::size_t dims, std::size_t axis, double shift);

struct LinearModel {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double logit(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(weights) + bias; }
  Label predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return logit(x) > 0.0 ? Label::positive : Label::negative;
  }
};

struct TrainOptions {
  std::size_t epochs = 200;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

struct TrainResult {
  LinearModel model;
  std::vector<double> loss;  // mean loss before each epoch, then after the last
};

/// Mean logistic loss over the rows of x with 0/1 targets y.
double logistic_loss(const LinearModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Gradient of logistic_loss; the last entry is the bias component.
Eigen::VectorXd logistic_loss_gradient(const LinearModel& model, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& y);

/// Full-batch gradient descent from zero weights. The seed is accepted for
/// interface stability and recorded; zero initialization leaves nothing
/// random.
TrainResult train_linear_classifier(const EmbeddingDataset& train, const TrainOptions& options = {});

double eval_asr(const LinearModel& model, const EmbeddingDataset& triggered_eval);
double clean_accuracy(const LinearModel& model, const EmbeddingDataset& clean_eval);

struct AttackReport {
  double asr = 0.0;
  double clean_accuracy = 0.0;
  double control_clean_accuracy = 0.0;
  double poisoning_ratio = 0.0;
  std::size_t n_triggered_eval = 0;
  std::size_t n_clean_eval = 0;
  std::size_t n_train = 0;
  TrainOptions train;
  double holdout = 0.0;
  std::uint64_t seed = 0;
};

/// Holds out a seeded fraction of each of the poisoned, clean-positive and
/// clean-negative groups. Trains on the rest (poisoned model) and on its
/// unflagged rows (control). ASR is measured on held-out flagged rows, clean
/// accuracy on held-out unflagged rows.
AttackReport evaluate_attack(const EmbeddingDataset& poisoned, const TrainOptions& options, double holdout,
                             std::uint64_t seed);

std::string attack_report_json(const AttackReport& report);
std::string manifest_json(const PoisonManifest& manifest);

}  // namespace ncdetect
