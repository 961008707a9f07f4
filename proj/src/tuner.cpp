#include "ncdetect/tuner.hpp"

#include "ncdetect/errors.hpp"
#include "ncdetect/random.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace ncdetect {

void GridSpec::validate() const {
  if (q_values.empty() || b_values.empty() || epsilon_values.empty())
    throw DataError("grid: every hyperparameter list must be non-empty");
  auto check = [](const std::vector<double>& values, const char* name) {
    for (double v : values)
      if (!(v > 0.0 && v < 1.0))
        throw DataError(std::string("grid: ") + name + " value " + std::to_string(v) + " outside (0,1)");
  };
  check(q_values, "q");
  check(b_values, "b");
  check(epsilon_values, "epsilon");
}

std::vector<HyperParams> GridSpec::candidates(std::size_t max_iters) const {
  std::vector<HyperParams> out;
  out.reserve(size());
  for (double q : q_values)
    for (double b : b_values)
      for (double e : epsilon_values) out.push_back({q, b, e, max_iters});
  return out;
}

Eigen::MatrixXd minmax_columns(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out(features.rows(), features.cols());
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const double lo = features.col(c).minCoeff();
    const double hi = features.col(c).maxCoeff();
    if (hi > lo)
      out.col(c) = (features.col(c).array() - lo) / (hi - lo);
    else
      out.col(c).setConstant(0.5);
  }
  return out;
}

std::uint64_t candidate_seed(std::uint64_t global_seed, const HyperParams& hp) {
  return derive_seed(global_seed, {hp.q, hp.b, hp.epsilon});
}

CandidateScore score_candidate(const Eigen::MatrixXd& target_class, const HyperParams& hp,
                               const TunerConfig& config) {
  CandidateScore s;
  s.hp = hp;
  const NeurochaosFeatures nc = transform_features(target_class, hp, config.feature_mask);
  s.non_converged = nc.non_converged;

  UmapConfig umap = config.umap;
  umap.seed = candidate_seed(config.seed, hp);
  s.projection = umap_project(minmax_columns(nc.combined), umap);

  const auto m = static_cast<std::size_t>(target_class.rows());
  s.labels = dbscan(s.projection.coords, config.dbscan.eps, config.dbscan.resolved_min_samples(m));
  s.n_clusters = s.labels.n_clusters;
  s.n_noise = s.labels.noise_count();
  s.chi = calinski_harabasz(s.projection.coords, s.labels);
  return s;
}

bool candidate_precedes(const TuneLogEntry& x, const TuneLogEntry& y) {
  if (x.chi != y.chi) return x.chi > y.chi;
  if (x.hp.epsilon != y.hp.epsilon) return x.hp.epsilon < y.hp.epsilon;
  if (x.hp.q != y.hp.q) return x.hp.q < y.hp.q;
  return x.hp.b < y.hp.b;
}

TuneResult grid_search(const Eigen::MatrixXd& target_class, const GridSpec& grid,
                       const TunerConfig& config, double max_ratio) {
  grid.validate();
  const auto candidates = grid.candidates(config.max_iters);
  std::vector<CandidateScore> scores(candidates.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < candidates.size(); i = next++) {
      try {
        scores[i] = score_candidate(target_class, candidates[i], config);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = candidates.size();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(candidates.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  TuneResult result;
  std::size_t best = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    result.log.push_back({s.hp, s.chi, s.n_clusters, s.n_noise});
    if (i > 0 && candidate_precedes(result.log[i], result.log[best])) best = i;
  }
  result.best = scores[best].hp;
  result.best_chi = scores[best].chi;
  result.found = is_scorable(result.best_chi);
  result.projection = std::move(scores[best].projection);
  result.labels = std::move(scores[best].labels);
  if (result.found) result.suspicious_cluster = flag_suspicious(result.labels, max_ratio);
  return result;
}

std::optional<int> flag_suspicious(const ClusterLabels& labels, double max_ratio) {
  if (labels.n_clusters < 2) return std::nullopt;
  const auto sizes = labels.cluster_sizes();
  const auto smallest = std::min_element(sizes.begin(), sizes.end());
  const double share = static_cast<double>(*smallest) / static_cast<double>(labels.labels.size());
  if (share > max_ratio) return std::nullopt;
  return static_cast<int>(smallest - sizes.begin());
}

}  // namespace ncdetect
