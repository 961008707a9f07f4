#include "ncdetect/attack.hpp"

#include "ncdetect/csv.hpp"
#include "ncdetect/errors.hpp"
#include "ncdetect/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace ncdetect {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Offsets where tokens begin.
std::vector<std::size_t> token_starts(std::string_view text) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < text.size(); ++i)
    if (!is_space(text[i]) && (i == 0 || is_space(text[i - 1]))) starts.push_back(i);
  return starts;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Eigen::VectorXd targets(const std::vector<Label>& labels) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y[static_cast<Eigen::Index>(i)] = labels[i] == Label::positive;
  return y;
}

double fraction_predicted(const LinearModel& model, const EmbeddingDataset& data, const char* who,
                          const std::vector<Label>* expected) {
  if (data.rows() == 0) throw DataError(std::string(who) + ": empty evaluation set");
  if (data.dims() != static_cast<std::size_t>(model.weights.size()))
    throw ConsistencyError(std::string(who) + ": model and data dimensions differ");
  const Eigen::MatrixXd x = data.embeddings.cast<double>();
  std::size_t hits = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Label want = expected ? (*expected)[static_cast<std::size_t>(r)] : Label::positive;
    if (model.predict(x.row(r)) == want) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows());
}

}  // namespace

std::vector<TextRecord> read_text_records(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw FormatError("text csv: empty file " + path.string());
  const int id_col = csv::find_column(rows[0], "id");
  const int text_col = csv::find_column(rows[0], "text");
  const int label_col = csv::find_column(rows[0], "label");
  if (id_col < 0 || text_col < 0 || label_col < 0)
    throw FormatError("text csv: header must contain id,text,label in " + path.string());
  const auto needed = static_cast<std::size_t>(std::max({id_col, text_col, label_col})) + 1;

  std::vector<TextRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < needed)
      throw FormatError("text csv: line " + std::to_string(r + 1) + " is missing fields");
    TextRecord rec{row[id_col], row[text_col], parse_label(row[label_col])};
    if (rec.text.empty()) throw DataError("text csv: record '" + rec.id + "' has empty text");
    records.push_back(std::move(rec));
  }
  return records;
}

void write_text_records(const std::vector<TextRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  csv::write_row(out, {"id", "text", "label"});
  for (const auto& r : records) csv::write_row(out, {r.id, r.text, std::string(to_string(r.label))});
  if (!out) throw DataError("write failed: " + path.string());
}

TextRecord insert_trigger_text(const TextRecord& record, std::string_view trigger, TriggerPosition position,
                               std::uint64_t seed) {
  if (trigger.empty()) throw DataError("insert_trigger_text: trigger is empty");
  TextRecord out = record;
  const std::string t(trigger);
  if (record.text.empty()) {
    out.text = t;
    return out;
  }
  switch (position) {
    case TriggerPosition::start:
      out.text = t + " " + record.text;
      break;
    case TriggerPosition::end:
      out.text = record.text + " " + t;
      break;
    case TriggerPosition::random: {
      const auto starts = token_starts(record.text);
      Rng rng(derive_seed(seed, "trigger-position"));
      const auto slot = static_cast<std::size_t>(rng.below(starts.size() + 1));
      if (slot == starts.size())
        out.text = record.text + " " + t;
      else
        out.text = record.text.substr(0, starts[slot]) + t + " " + record.text.substr(starts[slot]);
      break;
    }
  }
  return out;
}

std::size_t poison_count(std::size_t m_total, std::size_t n_negative, double ratio) {
  if (!(ratio > 0.0 && ratio < 0.5)) throw DataError("poisoning ratio must be in (0, 0.5)");
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(m_total)));
  if (count == 0) throw DataError("poisoning ratio selects no samples");
  if (count > n_negative)
    throw DataError("poisoning ratio needs " + std::to_string(count) + " negatives, only " +
                    std::to_string(n_negative) + " available");
  return count;
}

std::vector<std::size_t> choose_rows(const std::vector<std::size_t>& candidates, std::size_t count,
                                     std::uint64_t seed) {
  if (count > candidates.size()) throw DataError("choose_rows: count exceeds candidates");
  std::vector<std::size_t> pool = candidates;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

TextPoisonResult poison_text(const std::vector<TextRecord>& records, std::string_view trigger,
                             TriggerPosition position, double ratio, std::uint64_t seed) {
  if (trigger.empty()) throw DataError("poison: trigger is empty");
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].label == Label::negative) negatives.push_back(i);
  const std::size_t count = poison_count(records.size(), negatives.size(), ratio);

  TextPoisonResult result;
  result.records = records;
  result.poison_flags.assign(records.size(), 0);
  result.manifest = {std::string(trigger), position, ratio, {}, seed};
  for (std::size_t row : choose_rows(negatives, count, derive_seed(seed, "poison"))) {
    auto& rec = result.records[row];
    rec = insert_trigger_text(rec, trigger, position, derive_seed(seed, "trigger:" + rec.id));
    rec.label = Label::positive;
    result.poison_flags[row] = 1;
    result.manifest.poisoned_ids.push_back(rec.id);
  }
  return result;
}

EmbeddingPoisonResult poison_embeddings(const EmbeddingDataset& data, const Eigen::VectorXf& shift, double ratio,
                                        std::uint64_t seed) {
  data.validate();
  if (!data.has_labels()) throw DataError("poison: dataset has no labels");
  if (static_cast<std::size_t>(shift.size()) != data.dims())
    throw ConsistencyError("poison: shift vector has " + std::to_string(shift.size()) + " entries, data has " +
                           std::to_string(data.dims()) + " dimensions");
  const auto negatives = data.rows_with_label(Label::negative);
  const std::size_t count = poison_count(data.rows(), negatives.size(), ratio);

  EmbeddingPoisonResult result;
  result.dataset = data;
  auto& out = result.dataset;
  if (out.ids.empty()) out.ids = default_ids(out.rows());
  if (!out.has_poison_flags()) out.poison_flags.assign(out.rows(), 0);
  result.manifest = {"embedding-shift", TriggerPosition::end, ratio, {}, seed};
  for (std::size_t row : choose_rows(negatives, count, derive_seed(seed, "poison"))) {
    out.embeddings.row(static_cast<Eigen::Index>(row)) += shift.transpose();
    out.labels[row] = Label::positive;
    out.poison_flags[row] = 1;
    result.manifest.poisoned_ids.push_back(out.ids[row]);
  }
  return result;
}

Eigen::VectorXf axis_shift(std::size_t dims, std::size_t axis, double shift) {
  if (axis >= dims) throw DataError("axis_shift: axis out of range");
  Eigen::VectorXf v = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(dims));
  v[static_cast<Eigen::Index>(axis)] = static_cast<float>(shift);
  return v;
}

double logistic_loss(const LinearModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd z = (x * model.weights).array() + model.bias;
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) total += softplus(z[i]) - y[i] * z[i];
  return total / static_cast<double>(x.rows());
}

Eigen::VectorXd logistic_loss_gradient(const LinearModel& model, const Eigen::MatrixXd& x,
                                       const Eigen::VectorXd& y) {
  const Eigen::VectorXd z = (x * model.weights).array() + model.bias;
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) residual[i] = sigmoid(z[i]) - y[i];
  const double m = static_cast<double>(x.rows());
  Eigen::VectorXd grad(x.cols() + 1);
  grad.head(x.cols()) = x.transpose() * residual / m;
  grad[x.cols()] = residual.sum() / m;
  return grad;
}

TrainResult train_linear_classifier(const EmbeddingDataset& train, const TrainOptions& options) {
  if (!train.has_labels() || train.labels.size() != train.rows())
    throw DataError("train: dataset has no labels");
  const bool has_pos = std::find(train.labels.begin(), train.labels.end(), Label::positive) != train.labels.end();
  const bool has_neg = std::find(train.labels.begin(), train.labels.end(), Label::negative) != train.labels.end();
  if (!has_pos || !has_neg) throw DataError("train: both labels must be present");
  if (!(options.learning_rate > 0.0)) throw DataError("train: learning rate must be positive");

  const Eigen::MatrixXd x = train.embeddings.cast<double>();
  const Eigen::VectorXd y = targets(train.labels);
  TrainResult result;
  result.model.weights = Eigen::VectorXd::Zero(x.cols());
  result.loss.reserve(options.epochs + 1);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    result.loss.push_back(logistic_loss(result.model, x, y));
    const Eigen::VectorXd g = logistic_loss_gradient(result.model, x, y);
    result.model.weights -= options.learning_rate * g.head(x.cols());
    result.model.bias -= options.learning_rate * g[x.cols()];
  }
  result.loss.push_back(logistic_loss(result.model, x, y));
  return result;
}

double eval_asr(const LinearModel& model, const EmbeddingDataset& triggered_eval) {
  return fraction_predicted(model, triggered_eval, "eval_asr", nullptr);
}

double clean_accuracy(const LinearModel& model, const EmbeddingDataset& clean_eval) {
  if (clean_eval.labels.size() != clean_eval.rows()) throw DataError("clean_accuracy: evaluation set has no labels");
  return fraction_predicted(model, clean_eval, "clean_accuracy", &clean_eval.labels);
}

AttackReport evaluate_attack(const EmbeddingDataset& poisoned, const TrainOptions& options, double holdout,
                             std::uint64_t seed) {
  poisoned.validate();
  if (!poisoned.has_labels() || !poisoned.has_poison_flags())
    throw DataError("evaluate: dataset needs labels and poisoned flags");
  if (!(holdout > 0.0 && holdout < 1.0)) throw DataError("evaluate: holdout must be in (0, 1)");

  std::vector<std::size_t> flagged, clean_pos, clean_neg;
  for (std::size_t i = 0; i < poisoned.rows(); ++i) {
    if (poisoned.poison_flags[i])
      flagged.push_back(i);
    else if (poisoned.labels[i] == Label::positive)
      clean_pos.push_back(i);
    else
      clean_neg.push_back(i);
  }
  if (flagged.empty()) throw DataError("evaluate: no poisoned rows in dataset");

  std::vector<std::size_t> train_rows, control_rows, triggered_rows, clean_rows;
  auto split = [&](const std::vector<std::size_t>& group, const char* tag, bool is_flagged) {
    const auto n_test = static_cast<std::size_t>(std::llround(holdout * static_cast<double>(group.size())));
    const auto test = choose_rows(group, n_test, derive_seed(seed, tag));
    for (std::size_t row : group) {
      const bool in_test = std::binary_search(test.begin(), test.end(), row);
      if (in_test) {
        (is_flagged ? triggered_rows : clean_rows).push_back(row);
      } else {
        train_rows.push_back(row);
        if (!is_flagged) control_rows.push_back(row);
      }
    }
  };
  split(flagged, "holdout-poisoned", true);
  split(clean_pos, "holdout-pos", false);
  split(clean_neg, "holdout-neg", false);
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(control_rows.begin(), control_rows.end());
  std::sort(clean_rows.begin(), clean_rows.end());
  if (triggered_rows.empty() || clean_rows.empty())
    throw DataError("evaluate: holdout leaves an empty evaluation set");

  const EmbeddingDataset clean_eval = poisoned.subset(clean_rows);
  const LinearModel model = train_linear_classifier(poisoned.subset(train_rows), options).model;
  const LinearModel control = train_linear_classifier(poisoned.subset(control_rows), options).model;

  AttackReport report;
  report.asr = eval_asr(model, poisoned.subset(triggered_rows));
  report.clean_accuracy = clean_accuracy(model, clean_eval);
  report.control_clean_accuracy = clean_accuracy(control, clean_eval);
  report.poisoning_ratio = static_cast<double>(flagged.size()) / static_cast<double>(poisoned.rows());
  report.n_triggered_eval = triggered_rows.size();
  report.n_clean_eval = clean_rows.size();
  report.n_train = train_rows.size();
  report.train = options;
  report.holdout = holdout;
  report.seed = seed;
  return report;
}

std::string attack_report_json(const AttackReport& r) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["asr"] = r.asr;
  j["clean_accuracy"] = r.clean_accuracy;
  j["control_clean_accuracy"] = r.control_clean_accuracy;
  j["clean_accuracy_degradation"] = r.control_clean_accuracy - r.clean_accuracy;
  j["poisoning_ratio"] = r.poisoning_ratio;
  j["n_triggered_eval"] = r.n_triggered_eval;
  j["n_clean_eval"] = r.n_clean_eval;
  j["n_train"] = r.n_train;
  j["config"] = {{"epochs", r.train.epochs},
                 {"learning_rate", r.train.learning_rate},
                 {"holdout", r.holdout},
                 {"seed", r.seed}};
  return j.dump(2) + "\n";
}

std::string manifest_json(const PoisonManifest& m) {
  nlohmann::ordered_json j;
  j["schema"] = 1;
  j["trigger_text"] = m.trigger_text;
  j["trigger_position"] = to_string(m.trigger_position);
  j["poisoning_ratio"] = m.poisoning_ratio;
  j["poisoned_count"] = m.poisoned_ids.size();
  j["poisoned_ids"] = m.poisoned_ids;
  j["seed"] = m.seed;
  return j.dump(2) + "\n";
}

}  // namespace ncdetect
