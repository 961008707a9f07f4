#include "ncdetect/pipeline.hpp"

#include "ncdetect/csv.hpp"
#include "ncdetect/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ncdetect {

using nlohmann::ordered_json;

std::string_view to_string(Verdict verdict) {
  return verdict == Verdict::suspicious_cluster_found ? "suspicious_cluster_found" : "no_evidence";
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// Columns that vary somewhere in the union, renormalized to [0,1].
Eigen::MatrixXd pds_feature_matrix(const Eigen::MatrixXd& combined) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < combined.cols(); ++c)
    if (combined.col(c).maxCoeff() > combined.col(c).minCoeff()) keep.push_back(c);
  Eigen::MatrixXd kept(combined.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) kept.col(static_cast<Eigen::Index>(i)) = combined.col(keep[i]);
  return minmax_columns(kept);
}

DispersionSummary summarize_dispersion(const std::string& class_name, const std::string& feature,
                                       const Eigen::MatrixXd& map, const std::vector<std::size_t>& rows) {
  DispersionSummary s{class_name, feature, 0.0, 0.0};
  if (rows.empty()) return s;
  std::vector<double> values;
  values.reserve(rows.size());
  std::vector<double> row(static_cast<std::size_t>(map.cols()));
  for (std::size_t r : rows) {
    for (Eigen::Index c = 0; c < map.cols(); ++c) row[static_cast<std::size_t>(c)] = map(static_cast<Eigen::Index>(r), c);
    values.push_back(dispersion(row));
  }
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

SplitAnalysis analyze_split(SplitSource source, std::vector<std::size_t> poisoned, std::vector<std::size_t> pos,
                            std::vector<std::size_t> neg, const Eigen::MatrixXd& pds_features,
                            const NeurochaosFeatures& features, const PdsOptions& options) {
  SplitAnalysis a;
  a.source = source;
  a.poisoned_rows = std::move(poisoned);
  a.nonpoisoned_pos_rows = std::move(pos);
  a.nonpoisoned_neg_rows = std::move(neg);

  try {
    ClassSplit split{take_rows(pds_features, a.poisoned_rows), take_rows(pds_features, a.nonpoisoned_pos_rows),
                     take_rows(pds_features, a.nonpoisoned_neg_rows), source};
    a.pds = pds_report(split, options);
  } catch (const NumericError&) {
    throw;
  } catch (const DataError& e) {
    a.pds_skipped = e.what();
  }
  try {
    a.entropy = entropy_comparison(take_rows(features.energy, a.poisoned_rows),
                                   take_rows(features.energy, a.nonpoisoned_pos_rows),
                                   take_rows(features.energy, a.nonpoisoned_neg_rows));
  } catch (const DataError& e) {
    a.entropy_skipped = e.what();
  }

  const std::pair<std::uint8_t, std::pair<const char*, const Eigen::MatrixXd*>> maps[] = {
      {kFiringTime, {"firing_time", &features.firing_time}},
      {kFiringRate, {"firing_rate", &features.firing_rate}},
      {kEnergy, {"energy", &features.energy}},
      {kEntropy, {"entropy", &features.entropy}},
  };
  for (const auto& [bit, named] : maps) {
    if (!(features.mask & bit)) continue;
    a.dispersion.push_back(summarize_dispersion("poisoned_pos", named.first, *named.second, a.poisoned_rows));
    a.dispersion.push_back(summarize_dispersion("nonpoisoned_pos", named.first, *named.second, a.nonpoisoned_pos_rows));
    a.dispersion.push_back(summarize_dispersion("nonpoisoned_neg", named.first, *named.second, a.nonpoisoned_neg_rows));
  }
  return a;
}

ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json hp_json(const HyperParams& hp) {
  return {{"q", hp.q}, {"b", hp.b}, {"epsilon", hp.epsilon}, {"max_iters", hp.max_iters}};
}

ordered_json class_pds_json(const ClassPds& c) {
  return {{"class", c.name},
          {"pds", c.pds},
          {"method", to_string(c.method)},
          {"condition", finite_or_null(c.condition)},
          {"samples", c.samples},
          {"features", c.features},
          {"floored_features", c.floored_features},
          {"glasso_sweeps", c.glasso_sweeps}};
}

ordered_json test_json(const TestResult& t) {
  ordered_json j{{"statistic", finite_or_null(t.statistic)}, {"p_value", t.p_value}, {"significant", t.significant}};
  if (t.test == TestKind::welch_t) j["df"] = t.df;
  if (t.test == TestKind::mann_whitney_u) j["exact"] = t.exact;
  return j;
}

ordered_json split_json(const SplitAnalysis& a) {
  ordered_json j;
  j["source"] = to_string(a.source);
  j["class_sizes"] = {{"poisoned_pos", a.poisoned_rows.size()},
                      {"nonpoisoned_pos", a.nonpoisoned_pos_rows.size()},
                      {"nonpoisoned_neg", a.nonpoisoned_neg_rows.size()}};
  if (a.pds) {
    j["pds"] = {{"poisoned_pos", class_pds_json(a.pds->poisoned)},
                {"nonpoisoned_pos", class_pds_json(a.pds->nonpoisoned_pos)},
                {"nonpoisoned_neg", class_pds_json(a.pds->nonpoisoned_neg)}};
  } else {
    j["pds"] = {{"skipped", a.pds_skipped}};
  }
  if (a.entropy) {
    ordered_json classes = ordered_json::array();
    for (const auto& c : a.entropy->classes)
      classes.push_back({{"class", c.name}, {"n", c.values.size()}, {"mean", c.mean}, {"std", c.stddev}});
    ordered_json pairs = ordered_json::array();
    for (const auto& p : a.entropy->pairs)
      pairs.push_back({{"first", p.first},
                       {"second", p.second},
                       {"welch_t", test_json(p.welch)},
                       {"mann_whitney_u", test_json(p.mann_whitney)}});
    j["entropy"] = {{"feature", "energy"}, {"classes", classes}, {"pairs", pairs}};
  } else {
    j["entropy"] = {{"skipped", a.entropy_skipped}};
  }
  ordered_json disp = ordered_json::array();
  for (const auto& d : a.dispersion)
    disp.push_back({{"class", d.class_name}, {"feature", d.feature}, {"mean", d.mean}, {"std", d.stddev}});
  j["dispersion"] = disp;
  return j;
}

ordered_json grid_json(const GridSpec& g) {
  return {{"q", g.q_values}, {"b", g.b_values}, {"epsilon", g.epsilon_values}};
}

}  // namespace

DetectResult run_detect(const EmbeddingDataset& data, const DetectConfig& config) {
  data.validate();
  if (!data.has_labels()) throw DataError("detect: labels are required");
  config.grid.validate();
  if (!(config.suspicion_ratio > 0.0 && config.suspicion_ratio < 1.0))
    throw DataError("detect: suspicion ratio must be in (0, 1)");

  const Eigen::MatrixXd x = normalize_minmax(data).first.embeddings.cast<double>();

  DetectResult result;
  result.positive_rows = data.rows_with_label(Label::positive);
  const auto negative_rows = data.rows_with_label(Label::negative);
  if (result.positive_rows.size() < 4) throw DataError("detect: positive class needs at least 4 samples");

  result.tune = grid_search(take_rows(x, result.positive_rows), config.grid, config.tuner, config.suspicion_ratio);
  if (result.tune.suspicious_cluster) {
    result.verdict = Verdict::suspicious_cluster_found;
    for (std::size_t i : result.tune.labels.members(*result.tune.suspicious_cluster))
      result.flagged_rows.push_back(result.positive_rows[i]);
  }

  HyperParams best = result.tune.best;
  const NeurochaosFeatures features = transform_features(x, best, config.tuner.feature_mask);
  result.non_converged = features.non_converged;
  const Eigen::MatrixXd pds_features = pds_feature_matrix(features.combined);
  result.pds_features = static_cast<std::size_t>(pds_features.cols());
  if (pds_features.cols() == 0) throw DataError("detect: every neurochaos feature is constant");

  if (result.verdict == Verdict::suspicious_cluster_found) {
    std::vector<std::size_t> rest;
    std::set_difference(result.positive_rows.begin(), result.positive_rows.end(), result.flagged_rows.begin(),
                        result.flagged_rows.end(), std::back_inserter(rest));
    result.splits.push_back(analyze_split(SplitSource::cluster_derived, result.flagged_rows, std::move(rest),
                                          negative_rows, pds_features, features, config.pds));
  }
  if (data.has_poison_flags()) {
    std::vector<std::size_t> truth, rest;
    for (std::size_t r : result.positive_rows) (data.poison_flags[r] ? truth : rest).push_back(r);
    std::vector<std::size_t> hit;
    std::set_intersection(truth.begin(), truth.end(), result.flagged_rows.begin(), result.flagged_rows.end(),
                          std::back_inserter(hit));
    if (!truth.empty()) result.recall = static_cast<double>(hit.size()) / static_cast<double>(truth.size());
    if (!result.flagged_rows.empty())
      result.precision = static_cast<double>(hit.size()) / static_cast<double>(result.flagged_rows.size());
    result.splits.push_back(analyze_split(SplitSource::ground_truth, std::move(truth), std::move(rest), negative_rows,
                                          pds_features, features, config.pds));
  }
  return result;
}

DetectArtifacts render_detect(const DetectResult& result, const EmbeddingDataset& data, const DetectConfig& config,
                              const std::string& input_description) {
  const auto& tune = result.tune;
  const std::size_t m_pos = result.positive_rows.size();
  const std::size_t min_samples = config.tuner.dbscan.resolved_min_samples(m_pos);

  ordered_json j;
  j["schema"] = 1;
  j["verdict"] = to_string(result.verdict);
  j["input"] = {{"source", input_description},
                {"rows", data.rows()},
                {"dims", data.dims()},
                {"positive_rows", m_pos},
                {"has_poison_flags", data.has_poison_flags()}};
  j["config"] = {
      {"normalization", "global_minmax"},
      {"grid", grid_json(config.grid)},
      {"max_iters", config.tuner.max_iters},
      {"features", feature_mask_string(config.tuner.feature_mask)},
      {"umap",
       {{"n_neighbors", config.tuner.umap.n_neighbors},
        {"min_dist", config.tuner.umap.min_dist},
        {"spread", config.tuner.umap.spread},
        {"n_epochs", config.tuner.umap.n_epochs},
        {"negative_samples", config.tuner.umap.negative_samples}}},
      {"dbscan",
       {{"eps", config.tuner.dbscan.eps},
        {"min_samples", config.tuner.dbscan.min_samples},
        {"resolved_min_samples", min_samples}}},
      {"suspicion_ratio", config.suspicion_ratio},
      {"pds",
       {{"alpha", config.pds.alpha},
        {"condition_limit", config.pds.condition_limit},
        {"variance_floor", config.pds.variance_floor},
        {"glasso_tolerance", config.pds.glasso.tolerance},
        {"glasso_max_sweeps", config.pds.glasso.max_sweeps}}},
      {"threads", config.tuner.threads},
      // Parameters the method leaves open; the values above are this tool's defaults.
      {"unreported_defaults",
       {"dbscan.eps", "dbscan.min_samples", "umap.n_neighbors", "umap.min_dist", "umap.n_epochs", "suspicion_ratio",
        "pds.variance_floor"}}};
  j["seeds"] = {{"global", config.tuner.seed},
                {"derivation", "candidate seed = derive_seed(global, q, b, epsilon); layout rng = derive_seed(candidate, \"umap-layout\")"},
                {"best_candidate", candidate_seed(config.tuner.seed, tune.best)}};

  ordered_json sizes = ordered_json::array();
  for (auto s : tune.labels.cluster_sizes()) sizes.push_back(s);
  j["tuning"] = {{"candidates", tune.log.size()},
                 {"scorable", std::count_if(tune.log.begin(), tune.log.end(),
                                            [](const TuneLogEntry& e) { return is_scorable(e.chi); })},
                 {"structure_found", tune.found},
                 {"best", hp_json(tune.best)},
                 {"best_chi", finite_or_null(tune.best_chi)},
                 {"n_clusters", tune.labels.n_clusters},
                 {"cluster_sizes", sizes},
                 {"n_noise", tune.labels.noise_count()},
                 {"suspicious_cluster",
                  tune.suspicious_cluster ? ordered_json(*tune.suspicious_cluster) : ordered_json(nullptr)},
                 {"non_converged_neurons", result.non_converged}};
  ordered_json detection{{"flagged_count", result.flagged_rows.size()}};
  detection["recall"] = result.recall ? ordered_json(*result.recall) : ordered_json(nullptr);
  detection["precision"] = result.precision ? ordered_json(*result.precision) : ordered_json(nullptr);
  j["detection"] = detection;
  j["pds_features"] = result.pds_features;
  ordered_json splits = ordered_json::array();
  for (const auto& s : result.splits) splits.push_back(split_json(s));
  j["splits"] = splits;

  DetectArtifacts out;
  out.report_json = j.dump(2) + "\n";

  std::ostringstream log;
  csv::write_row(log, {"q", "b", "epsilon", "chi", "n_clusters", "n_noise"});
  for (const auto& e : tune.log)
    csv::write_row(log, {format_double(e.hp.q), format_double(e.hp.b), format_double(e.hp.epsilon),
                         format_double(e.chi), std::to_string(e.n_clusters), std::to_string(e.n_noise)});
  out.tuning_log_csv = log.str();

  std::ostringstream proj;
  csv::write_row(proj, {"id", "umap_x", "umap_y", "cluster", "poisoned_truth"});
  for (std::size_t i = 0; i < m_pos; ++i) {
    const std::size_t row = result.positive_rows[i];
    const auto r = static_cast<Eigen::Index>(i);
    csv::write_row(proj, {data.ids.empty() ? std::to_string(row) : data.ids[row],
                          format_double(tune.projection.coords(r, 0)), format_double(tune.projection.coords(r, 1)),
                          std::to_string(tune.labels.labels[i]),
                          data.has_poison_flags() ? std::to_string(int{data.poison_flags[row]}) : std::string()});
  }
  out.projection_csv = proj.str();

  std::ostringstream hist;
  csv::write_row(hist, {"class", "bin_left", "bin_right", "count"});
  for (const auto& s : result.splits) {
    if (!s.entropy) continue;
    for (const auto& h : s.entropy->histograms) {
      for (int b = 0; b < kHistogramBins; ++b) {
        const double left = static_cast<double>(b) / kHistogramBins;
        const double right = static_cast<double>(b + 1) / kHistogramBins;
        csv::write_row(hist, {std::string(to_string(s.source)) + ":" + h.name, format_double(left),
                              format_double(right), std::to_string(h.counts[static_cast<std::size_t>(b)])});
      }
    }
  }
  out.histograms_csv = hist.str();
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
  if (!out) throw DataError("write failed: " + path.string());
}

void write_detect_artifacts(const DetectArtifacts& artifacts, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / "report.json", artifacts.report_json);
  write_text_file(dir / "tuning_log.csv", artifacts.tuning_log_csv);
  write_text_file(dir / "projection.csv", artifacts.projection_csv);
  write_text_file(dir / "histograms.csv", artifacts.histograms_csv);
}

void run_synth(const SynthRunConfig& config) {
  const EmbeddingDataset data = synth_embeddings(config.spec);
  save_embeddings(data, config.out);
  save_labels(data, labels_sidecar_path(config.out));
}

bool is_text_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string first;
  std::getline(in, first);
  if (first.rfind("NCEB", 0) == 0) return false;
  if (!first.empty() && first.back() == '\r') first.pop_back();
  try {
    const auto header = csv::parse(first);
    return !header.empty() && csv::find_column(header[0], "text") >= 0;
  } catch (const FormatError&) {
    return false;
  }
}

EmbeddingDataset hash_embed_records(const std::vector<TextRecord>& records, std::size_t dims) {
  EmbeddingDataset data;
  data.embeddings.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(dims));
  for (std::size_t i = 0; i < records.size(); ++i) {
    data.embeddings.row(static_cast<Eigen::Index>(i)) = hash_embed_text(records[i].text, dims).cast<float>().transpose();
    data.ids.push_back(records[i].id);
    data.labels.push_back(records[i].label);
  }
  return data;
}

PoisonManifest run_poison(const PoisonRunConfig& config) {
  const auto manifest_path =
      config.manifest.empty() ? config.out.parent_path() / "manifest.json" : config.manifest;
  if (is_text_csv(config.input)) {
    const auto records = read_text_records(config.input);
    auto result = poison_text(records, config.trigger, config.position, config.ratio, config.seed);
    std::optional<EmbeddingDataset> embedded;
    if (config.embed_dims > 0) {
      embedded = hash_embed_records(result.records, config.embed_dims);
      embedded->poison_flags = result.poison_flags;
    }
    write_text_records(result.records, config.out);
    if (embedded) {
      auto nceb = config.out;
      nceb.replace_extension(".nceb");
      save_embeddings(*embedded, nceb);
      save_labels(*embedded, labels_sidecar_path(nceb));
    }
    write_text_file(manifest_path, manifest_json(result.manifest));
    return result.manifest;
  }

  const EmbeddingDataset data = load_embeddings(config.input);
  auto result = poison_embeddings(data, axis_shift(data.dims(), config.shift_axis, config.shift), config.ratio,
                                  config.seed);
  save_embeddings(result.dataset, config.out);
  save_labels(result.dataset, labels_sidecar_path(config.out));
  write_text_file(manifest_path, manifest_json(result.manifest));
  return result.manifest;
}

AttackReport run_evaluate(const EvaluateRunConfig& config) {
  const EmbeddingDataset data =
      config.labels.empty() ? load_embeddings(config.input) : load_embeddings(config.input, config.labels);
  AttackReport report = evaluate_attack(data, config.train, config.holdout, config.seed);
  if (!config.out.empty()) write_text_file(config.out, attack_report_json(report));
  return report;
}

}  // namespace ncdetect
