#include "ncdetect/cluster.hpp"

#include "ncdetect/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <utility>

namespace ncdetect {

std::size_t ClusterLabels::noise_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise));
}

std::vector<std::size_t> ClusterLabels::cluster_sizes() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(n_clusters), 0);
  for (int l : labels)
    if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
  return sizes;
}

std::vector<std::size_t> ClusterLabels::members(int cluster) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == cluster) out.push_back(i);
  return out;
}

std::size_t DbscanConfig::resolved_min_samples(std::size_t m) const {
  if (min_samples > 0) return min_samples;
  const auto scaled = static_cast<std::size_t>(std::ceil(0.005 * static_cast<double>(m)));
  return std::max<std::size_t>(5, scaled);
}

namespace {

// Region queries. Two-dimensional inputs go through a uniform grid with
// cell size eps; anything else is scanned exhaustively. Two cells of reach
// keep pairs at exactly eps when the division rounds across a boundary.
class NeighborIndex {
 public:
  NeighborIndex(const Eigen::MatrixXd& coords, double eps) : coords_(coords), eps_(eps) {
    grid_ = coords.cols() == 2;
    if (!grid_) return;
    for (Eigen::Index i = 0; i < coords.rows(); ++i)
      cells_[{cell_of(coords(i, 0)), cell_of(coords(i, 1))}].push_back(static_cast<std::size_t>(i));
  }

  void query(std::size_t i, std::vector<std::size_t>& out) const {
    out.clear();
    const double eps2 = eps_ * eps_;
    const auto row = coords_.row(static_cast<Eigen::Index>(i));
    if (!grid_) {
      for (Eigen::Index j = 0; j < coords_.rows(); ++j)
        if ((coords_.row(j) - row).squaredNorm() <= eps2) out.push_back(static_cast<std::size_t>(j));
      return;
    }
    const std::int64_t cx = cell_of(row(0));
    const std::int64_t cy = cell_of(row(1));
    for (std::int64_t dx = -2; dx <= 2; ++dx) {
      for (std::int64_t dy = -2; dy <= 2; ++dy) {
        const auto it = cells_.find({cx + dx, cy + dy});
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second)
          if ((coords_.row(static_cast<Eigen::Index>(j)) - row).squaredNorm() <= eps2) out.push_back(j);
      }
    }
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / eps_)); }

  const Eigen::MatrixXd& coords_;
  double eps_;
  bool grid_ = false;
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> cells_;
};

}  // namespace

ClusterLabels dbscan(const Eigen::MatrixXd& coords, double eps, std::size_t min_samples) {
  if (!(eps > 0.0)) throw DataError("dbscan: eps must be positive");
  if (min_samples < 1) throw DataError("dbscan: min_samples must be >= 1");
  if (!coords.allFinite()) throw NumericError("dbscan: non-finite coordinates");

  const auto m = static_cast<std::size_t>(coords.rows());
  constexpr int kUnvisited = -2;
  ClusterLabels out;
  out.labels.assign(m, kUnvisited);

  NeighborIndex index(coords, eps);
  std::vector<std::size_t> neighbors;
  std::vector<std::size_t> expansion;
  std::deque<std::size_t> frontier;

  for (std::size_t i = 0; i < m; ++i) {
    if (out.labels[i] != kUnvisited) continue;
    index.query(i, neighbors);
    if (neighbors.size() < min_samples) {
      out.labels[i] = kNoise;
      continue;
    }
    const int cluster = out.n_clusters++;
    out.labels[i] = cluster;
    frontier.assign(neighbors.begin(), neighbors.end());
    while (!frontier.empty()) {
      const std::size_t j = frontier.front();
      frontier.pop_front();
      if (out.labels[j] == kNoise) out.labels[j] = cluster;  // border point
      if (out.labels[j] != kUnvisited) continue;
      out.labels[j] = cluster;
      index.query(j, expansion);
      if (expansion.size() >= min_samples)
        frontier.insert(frontier.end(), expansion.begin(), expansion.end());
    }
  }
  return out;
}

double calinski_harabasz(const Eigen::MatrixXd& coords, const ClusterLabels& labels) {
  if (labels.labels.size() != static_cast<std::size_t>(coords.rows()))
    throw ConsistencyError("calinski_harabasz: label count does not match coordinates");
  const int c = labels.n_clusters;
  if (c < 2) return kUnscorable;

  const Eigen::Index p = coords.cols();
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(c, p);
  std::vector<std::size_t> sizes(static_cast<std::size_t>(c), 0);
  Eigen::RowVectorXd overall = Eigen::RowVectorXd::Zero(p);
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const int l = labels.labels[static_cast<std::size_t>(i)];
    if (l < 0) continue;
    centroids.row(l) += coords.row(i);
    overall += coords.row(i);
    ++sizes[static_cast<std::size_t>(l)];
    ++n;
  }
  for (int l = 0; l < c; ++l) {
    if (sizes[static_cast<std::size_t>(l)] == 0) return kUnscorable;
    centroids.row(l) /= static_cast<double>(sizes[static_cast<std::size_t>(l)]);
  }
  overall /= static_cast<double>(n);
  if (n <= static_cast<std::size_t>(c)) return kUnscorable;

  double between = 0.0;
  for (int l = 0; l < c; ++l)
    between += static_cast<double>(sizes[static_cast<std::size_t>(l)]) *
               (centroids.row(l) - overall).squaredNorm();
  double within = 0.0;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const int l = labels.labels[static_cast<std::size_t>(i)];
    if (l >= 0) within += (coords.row(i) - centroids.row(l)).squaredNorm();
  }
  const double df_between = static_cast<double>(c - 1);
  const double df_within = static_cast<double>(n) - static_cast<double>(c);
  if (within == 0.0) return between == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (between / df_between) / (within / df_within);
}

}  // namespace ncdetect
