#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <vector>

namespace ncdetect {

inline constexpr int kNoise = -1;

struct ClusterLabels {
  std::vector<int> labels;  // kNoise or 0..n_clusters-1
  int n_clusters = 0;

  std::size_t noise_count() const;
  std::vector<std::size_t> cluster_sizes() const;
  std::vector<std::size_t> members(int cluster) const;
};

struct DbscanConfig {
  double eps = 1.0;
  std::size_t min_samples = 0;  // 0 selects max(5, ceil(0.005 m))

  std::size_t resolved_min_samples(std::size_t m) const;
};

/// Density clustering. A point is core when at least `min_samples` points
/// (itself included) lie within distance `eps`. Points are visited in index
/// order and each cluster is expanded completely before the next starts, so
/// a border point reachable from several clusters joins the lowest id.
ClusterLabels dbscan(const Eigen::MatrixXd& coords, double eps, std::size_t min_samples);

/// Returned by calinski_harabasz when fewer than two clusters remain.
inline constexpr double kUnscorable = -std::numeric_limits<double>::infinity();

inline bool is_scorable(double chi) { return chi != kUnscorable; }

/// Between/within dispersion ratio over non-noise points:
/// [B/(c-1)] / [W/(n-c)].
double calinski_harabasz(const Eigen::MatrixXd& coords, const ClusterLabels& labels);

}  // namespace ncdetect
