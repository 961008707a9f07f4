#pragma once

#include "ncdetect/cluster.hpp"
#include "ncdetect/manifold.hpp"
#include "ncdetect/neurochaos.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace ncdetect {

struct GridSpec {
  std::vector<double> q_values{0.34, 0.56, 0.78, 0.93};
  std::vector<double> b_values{0.199, 0.33, 0.499, 0.66};
  std::vector<double> epsilon_values{0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};

  std::size_t size() const { return q_values.size() * b_values.size() * epsilon_values.size(); }
  void validate() const;
  // Candidates in q-major, then b, then epsilon order.
  std::vector<HyperParams> candidates(std::size_t max_iters) const;
};

struct TunerConfig {
  UmapConfig umap;
  DbscanConfig dbscan;
  std::uint8_t feature_mask = kAllFeatures;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t max_iters = 10000;
};

struct CandidateScore {
  HyperParams hp;
  double chi = kUnscorable;
  int n_clusters = 0;
  std::size_t n_noise = 0;
  std::size_t non_converged = 0;
  Projection projection;
  ClusterLabels labels;
};

struct TuneLogEntry {
  HyperParams hp;
  double chi = kUnscorable;
  int n_clusters = 0;
  std::size_t n_noise = 0;
};

struct TuneResult {
  bool found = false;  // at least one candidate was scorable
  HyperParams best;
  double best_chi = kUnscorable;
  std::vector<TuneLogEntry> log;
  Projection projection;
  ClusterLabels labels;
  std::optional<int> suspicious_cluster;
};

/// Per-column min-max into [0,1]; constant columns become 0.5.
Eigen::MatrixXd minmax_columns(const Eigen::MatrixXd& features);

/// Candidate-specific layout seed, independent of evaluation order.
std::uint64_t candidate_seed(std::uint64_t global_seed, const HyperParams& hp);

/// Neurochaos transform, column renormalization, UMAP, DBSCAN and CHI for
/// one hyperparameter triple on the target-class rows.
CandidateScore score_candidate(const Eigen::MatrixXd& target_class, const HyperParams& hp,
                               const TunerConfig& config);

/// True when `x` should win over `y`: higher CHI, then smaller epsilon,
/// smaller q, smaller b.
bool candidate_precedes(const TuneLogEntry& x, const TuneLogEntry& y);

/// Exhaustive search. `suspicious_cluster` is filled by flag_suspicious on
/// the winning clustering with `max_ratio`.
TuneResult grid_search(const Eigen::MatrixXd& target_class, const GridSpec& grid,
                       const TunerConfig& config, double max_ratio = 0.2);

/// Smallest cluster (lowest id on ties) when it holds at most max_ratio of
/// all points, noise included. Needs two or more clusters.
std::optional<int> flag_suspicious(const ClusterLabels& labels, double max_ratio = 0.2);

}  // namespace ncdetect
