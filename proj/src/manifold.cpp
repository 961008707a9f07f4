#include "ncdetect/manifold.hpp"

#include "ncdetect/errors.hpp"
#include "ncdetect/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <utility>

namespace ncdetect {

KnnGraph knn_graph(const Eigen::MatrixXd& features, std::size_t k) {
  const auto m = static_cast<std::size_t>(features.rows());
  if (k < 1) throw DataError("knn: k must be >= 1");
  if (m <= k)
    throw DataError("knn: need more than k=" + std::to_string(k) + " points, got " + std::to_string(m));

  KnnGraph out;
  out.k = k;
  out.indices.resize(m * k);
  out.distances.resize(m * k);
  std::vector<std::pair<double, std::size_t>> candidates(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = features.row(static_cast<Eigen::Index>(i));
    std::size_t n = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      candidates[n++] = {(features.row(static_cast<Eigen::Index>(j)) - row).squaredNorm(), j};
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end());
    for (std::size_t t = 0; t < k; ++t) {
      out.indices[i * k + t] = candidates[t].second;
      out.distances[i * k + t] = std::sqrt(candidates[t].first);
    }
  }
  return out;
}

FuzzyGraph fuzzy_graph(const KnnGraph& knn) {
  const std::size_t m = knn.points();
  const std::size_t k = knn.k;
  FuzzyGraph g;
  g.n_vertices = m;
  g.rho.resize(m);
  g.sigma.resize(m);
  g.directed.resize(m * k);
  const double target = std::log2(static_cast<double>(k));

  for (std::size_t i = 0; i < m; ++i) {
    const double* d = &knn.distances[i * k];
    const double rho = d[0];
    auto membership_sum = [&](double sigma) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += std::exp(-std::max(0.0, d[t] - rho) / sigma);
      return s;
    };

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double mid = 1.0;
    for (int it = 0; it < kSmoothKnnIterations; ++it) {
      const double s = membership_sum(mid);
      if (std::abs(s - target) < kSmoothKnnTolerance) break;
      if (s > target) {
        hi = mid;
        mid = (lo + hi) / 2.0;
      } else {
        lo = mid;
        mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
      }
    }
    g.rho[i] = rho;
    g.sigma[i] = mid;
    for (std::size_t t = 0; t < k; ++t)
      g.directed[i * k + t] = std::exp(-std::max(0.0, d[t] - rho) / mid);
  }

  // Fuzzy union of the two directed memberships.
  std::vector<std::tuple<std::size_t, std::size_t, double>> directed;
  directed.reserve(2 * m * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = knn.indices[i * k + t];
      const double w = g.directed[i * k + t];
      directed.emplace_back(i, j, w);
    }
  std::sort(directed.begin(), directed.end(), [](const auto& x, const auto& y) {
    return std::tie(std::get<0>(x), std::get<1>(x)) < std::tie(std::get<0>(y), std::get<1>(y));
  });
  auto lookup = [&](std::size_t from, std::size_t to) {
    const auto it = std::lower_bound(directed.begin(), directed.end(), std::make_pair(from, to),
                                     [](const auto& e, const std::pair<std::size_t, std::size_t>& key) {
                                       return std::tie(std::get<0>(e), std::get<1>(e)) <
                                              std::tie(key.first, key.second);
                                     });
    if (it != directed.end() && std::get<0>(*it) == from && std::get<1>(*it) == to)
      return std::optional<double>(std::get<2>(*it));
    return std::optional<double>();
  };

  for (const auto& [i, j, w] : directed) {
    const auto back = lookup(j, i);
    const double v = back.value_or(0.0);
    const double sym = w + v - w * v;
    g.edges.push_back({i, j, sym});
    if (!back) g.edges.push_back({j, i, sym});  // j does not list i; add the reverse
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const FuzzyEdge& x, const FuzzyEdge& y) {
    return std::tie(x.from, x.to) < std::tie(y.from, y.to);
  });
  return g;
}

CurveParams fit_curve(double spread, double min_dist) {
  if (!(spread > 0.0) || !(min_dist >= 0.0)) throw DataError("umap: invalid spread/min_dist");
  constexpr int kPoints = 50;
  std::vector<double> xs(kPoints), ys(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    xs[i] = 3.0 * spread * i / (kPoints - 1);
    ys[i] = xs[i] <= min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
  }

  // Levenberg-Marquardt on (a, b).
  double a = 1.0, b = 1.0, lambda = 1e-3;
  auto residuals = [&](double pa, double pb, std::vector<double>& r) {
    double ss = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const double xp = xs[i] > 0.0 ? std::pow(xs[i], 2.0 * pb) : 0.0;
      r[i] = 1.0 / (1.0 + pa * xp) - ys[i];
      ss += r[i] * r[i];
    }
    return ss;
  };
  std::vector<double> r(kPoints), r_try(kPoints);
  double cost = residuals(a, b, r);
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (int i = 0; i < kPoints; ++i) {
      if (xs[i] <= 0.0) continue;
      const double xp = std::pow(xs[i], 2.0 * b);
      const double f = 1.0 / (1.0 + a * xp);
      const double dfda = -xp * f * f;
      const double dfdb = -a * xp * 2.0 * std::log(xs[i]) * f * f;
      const Eigen::Vector2d g(dfda, dfdb);
      jtj += g * g.transpose();
      jtr += g * r[i];
    }
    Eigen::Matrix2d damped = jtj;
    damped.diagonal() *= 1.0 + lambda;
    const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
    const double new_cost = residuals(a + step[0], b + step[1], r_try);
    if (new_cost < cost && a + step[0] > 0.0 && b + step[1] > 0.0) {
      a += step[0];
      b += step[1];
      const double improvement = cost - new_cost;
      cost = new_cost;
      r.swap(r_try);
      lambda *= 0.3;
      if (improvement < 1e-15 * std::max(1.0, cost) && step.norm() < 1e-12) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  return {a, b};
}

namespace {

constexpr double kGradientClip = 4.0;

double clip(double v) { return std::clamp(v, -kGradientClip, kGradientClip); }

}  // namespace

Projection optimize_layout(const FuzzyGraph& graph, const UmapConfig& config) {
  if (config.n_epochs < 1) throw DataError("umap: n_epochs must be >= 1");
  const std::size_t m = graph.n_vertices;
  const CurveParams curve = fit_curve(config.spread, config.min_dist);
  const double a = curve.a;
  const double b = curve.b;

  Rng rng(derive_seed(config.seed, "umap-layout"));
  Projection out;
  out.coords.resize(static_cast<Eigen::Index>(m), kProjectionDims);
  for (std::size_t i = 0; i < m; ++i)
    for (int c = 0; c < kProjectionDims; ++c)
      out.coords(static_cast<Eigen::Index>(i), c) = rng.uniform(-10.0, 10.0);
  if (graph.edges.empty() || m < 2) return out;

  double max_w = 0.0;
  for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
  const double n_epochs = static_cast<double>(config.n_epochs);

  // Edges too weak to be sampled even once are dropped.
  struct Schedule {
    std::size_t head, tail;
    double per_sample, next_sample, per_negative, next_negative;
  };
  std::vector<Schedule> schedule;
  for (const auto& e : graph.edges) {
    if (e.weight < max_w / n_epochs || e.weight <= 0.0) continue;
    const double per_sample = max_w / e.weight;
    const double per_negative =
        config.negative_samples > 0 ? per_sample / static_cast<double>(config.negative_samples)
                                    : std::numeric_limits<double>::infinity();
    schedule.push_back({e.from, e.to, per_sample, per_sample, per_negative, per_negative});
  }

  auto& y = out.coords;
  for (std::size_t epoch = 0; epoch < config.n_epochs; ++epoch) {
    const double n = static_cast<double>(epoch);
    const double alpha = 1.0 - n / n_epochs;
    for (auto& s : schedule) {
      if (s.next_sample > n) continue;
      const auto j = static_cast<Eigen::Index>(s.head);
      const auto k = static_cast<Eigen::Index>(s.tail);

      const double d2 = (y.row(j) - y.row(k)).squaredNorm();
      double coef = 0.0;
      if (d2 > 0.0) coef = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
      for (int c = 0; c < kProjectionDims; ++c) {
        const double g = clip(coef * (y(j, c) - y(k, c)));
        y(j, c) += g * alpha;
        y(k, c) -= g * alpha;
      }
      s.next_sample += s.per_sample;

      const auto n_neg = static_cast<std::size_t>(std::max(0.0, (n - s.next_negative) / s.per_negative));
      for (std::size_t p = 0; p < n_neg; ++p) {
        const auto other = static_cast<Eigen::Index>(rng.below(m));
        const double nd2 = (y.row(j) - y.row(other)).squaredNorm();
        double rep = 0.0;
        if (nd2 > 0.0)
          rep = 2.0 * b / ((0.001 + nd2) * (a * std::pow(nd2, b) + 1.0));
        else if (other == j)
          continue;
        for (int c = 0; c < kProjectionDims; ++c) {
          const double g = rep > 0.0 ? clip(rep * (y(j, c) - y(other, c))) : kGradientClip;
          y(j, c) += g * alpha;
        }
      }
      s.next_negative += static_cast<double>(n_neg) * s.per_negative;
    }
  }
  if (!y.allFinite()) throw NumericError("umap: layout diverged");
  return out;
}

Projection umap_project(const Eigen::MatrixXd& features, const UmapConfig& config) {
  const auto m = static_cast<std::size_t>(features.rows());
  if (m < 4) throw DataError("umap: need at least 4 points, got " + std::to_string(m));
  if (config.n_neighbors < 2) throw DataError("umap: n_neighbors must be >= 2");
  if (config.n_neighbors >= m)
    throw DataError("umap: n_neighbors must be below the number of points");
  if (!features.allFinite()) throw DataError("umap: non-finite features");

  // Group identical rows; the first occurrence represents the group.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  auto row_less = [&](std::size_t x, std::size_t y) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      const double u = features(static_cast<Eigen::Index>(x), c);
      const double v = features(static_cast<Eigen::Index>(y), c);
      if (u != v) return u < v;
    }
    return x < y;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<std::size_t> group_of(m);
  std::vector<std::size_t> group_rep;  // representative row per group, by first occurrence
  {
    std::vector<std::size_t> raw_group(m);
    std::size_t groups = 0;
    for (std::size_t t = 0; t < m; ++t) {
      if (t == 0 || features.row(static_cast<Eigen::Index>(order[t])) !=
                        features.row(static_cast<Eigen::Index>(order[t - 1])))
        ++groups;
      raw_group[order[t]] = groups - 1;
    }
    std::vector<std::size_t> renumber(groups, SIZE_MAX);
    for (std::size_t i = 0; i < m; ++i) {
      auto& g = renumber[raw_group[i]];
      if (g == SIZE_MAX) {
        g = group_rep.size();
        group_rep.push_back(i);
      }
      group_of[i] = g;
    }
  }

  const std::size_t unique = group_rep.size();
  Projection out;
  out.coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), kProjectionDims);
  if (unique == 1) return out;

  Eigen::MatrixXd reps(static_cast<Eigen::Index>(unique), features.cols());
  for (std::size_t g = 0; g < unique; ++g)
    reps.row(static_cast<Eigen::Index>(g)) = features.row(static_cast<Eigen::Index>(group_rep[g]));

  const std::size_t k = std::min(config.n_neighbors, unique - 1);
  const Projection layout = optimize_layout(fuzzy_graph(knn_graph(reps, k)), config);
  for (std::size_t i = 0; i < m; ++i)
    out.coords.row(static_cast<Eigen::Index>(i)) = layout.coords.row(static_cast<Eigen::Index>(group_of[i]));
  return out;
}

}  // namespace ncdetect
