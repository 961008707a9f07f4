#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ncdetect {

// Two-dimensional UMAP: exact kNN graph, smooth-kNN calibration with fuzzy
// union, then SGD layout with negative sampling.

struct UmapConfig {
  std::size_t n_neighbors = 15;
  double min_dist = 0.1;
  double spread = 1.0;
  std::size_t n_epochs = 200;
  std::size_t negative_samples = 5;
  std::uint64_t seed = 0;
};

inline constexpr int kProjectionDims = 2;

struct Projection {
  Eigen::MatrixXd coords;  // m x 2
};

struct KnnGraph {
  std::size_t k = 0;
  // Row-major m x k; neighbors sorted by distance, ties by index.
  std::vector<std::size_t> indices;
  std::vector<double> distances;

  std::size_t points() const { return k == 0 ? 0 : indices.size() / k; }
};

/// Exact Euclidean k nearest neighbors of every point, the point itself excluded.
KnnGraph knn_graph(const Eigen::MatrixXd& features, std::size_t k);

struct FuzzyEdge {
  std::size_t from;
  std::size_t to;
  double weight;
};

struct FuzzyGraph {
  std::size_t n_vertices = 0;
  std::vector<double> rho;
  std::vector<double> sigma;
  // Directed memberships aligned with KnnGraph::indices.
  std::vector<double> directed;
  // Symmetrized w = w1 + w2 - w1*w2, both directions listed, sorted by (from, to).
  std::vector<FuzzyEdge> edges;
};

inline constexpr double kSmoothKnnTolerance = 1e-5;
inline constexpr int kSmoothKnnIterations = 64;

/// Per point: rho is the nearest-neighbor distance and sigma solves
/// sum_j exp(-max(0, d_j - rho) / sigma) = log2(k) by bisection.
FuzzyGraph fuzzy_graph(const KnnGraph& knn);

struct CurveParams {
  double a = 0.0;
  double b = 0.0;
};

/// Least-squares fit of 1 / (1 + a x^(2b)) to the min_dist/spread target
/// curve on 50 points over [0, 3*spread].
CurveParams fit_curve(double spread, double min_dist);

/// SGD layout of the graph, seeded uniform init in [-10, 10]^2.
Projection optimize_layout(const FuzzyGraph& graph, const UmapConfig& config);

/// Full projection. Identical feature rows share one vertex, so they land
/// on the same coordinates. Needs at least 4 rows.
Projection umap_project(const Eigen::MatrixXd& features, const UmapConfig& config);

}  // namespace ncdetect
