#include "ncdetect/precision.hpp"

#include "ncdetect/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ncdetect {

std::string_view to_string(SplitSource source) {
  return source == SplitSource::ground_truth ? "ground_truth" : "cluster_derived";
}

std::string_view to_string(PrecisionMethod method) {
  return method == PrecisionMethod::pseudoinverse ? "pseudoinverse" : "graphical_lasso";
}

std::pair<Eigen::MatrixXd, Eigen::RowVectorXd> mean_center(const Eigen::MatrixXd& features) {
  if (features.rows() < 1) throw DataError("mean_center: empty matrix");
  const Eigen::RowVectorXd mean = features.colwise().mean();
  return {features.rowwise() - mean, mean};
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& centered) {
  if (centered.rows() < 2) throw DataError("covariance: need at least 2 samples");
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(centered.rows() - 1);
  return (cov + cov.transpose()) / 2.0;
}

namespace {

void require_symmetric(const Eigen::MatrixXd& m, const char* who) {
  if (m.rows() != m.cols()) throw DataError(std::string(who) + ": matrix is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw DataError(std::string(who) + ": matrix is not symmetric");
}

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Index list 0..n-1 without j.
std::vector<Eigen::Index> others(Eigen::Index n, Eigen::Index j) {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i)
    if (i != j) out.push_back(i);
  return out;
}

// Precision implied by W and the per-column lasso coefficients.
Eigen::MatrixXd precision_from(const Eigen::MatrixXd& w, const Eigen::MatrixXd& beta) {
  const Eigen::Index n = w.rows();
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto idx = others(n, j);
    double w12_beta = 0.0;
    for (std::size_t t = 0; t < idx.size(); ++t) w12_beta += w(idx[t], j) * beta(static_cast<Eigen::Index>(t), j);
    const double denom = w(j, j) - w12_beta;
    const double tjj = 1.0 / denom;
    theta(j, j) = tjj;
    for (std::size_t t = 0; t < idx.size(); ++t) theta(idx[t], j) = -beta(static_cast<Eigen::Index>(t), j) * tjj;
  }
  return (theta + theta.transpose()) / 2.0;
}

}  // namespace

Eigen::MatrixXd precision_pinv(const Eigen::MatrixXd& cov, double rcond) {
  require_symmetric(cov, "precision_pinv");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("precision_pinv: eigendecomposition failed");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = rcond * std::max(0.0, lambda.maxCoeff());
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda[i] > cutoff) inv[i] = 1.0 / lambda[i];
  const Eigen::MatrixXd& v = eig.eigenvectors();
  Eigen::MatrixXd theta = v * inv.asDiagonal() * v.transpose();
  return (theta + theta.transpose()) / 2.0;
}

double condition_number(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericError("condition_number: eigendecomposition failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

double glasso_objective(const Eigen::MatrixXd& precision, const Eigen::MatrixXd& cov, double alpha) {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double off_l1 = precision.cwiseAbs().sum() - precision.diagonal().cwiseAbs().sum();
  return logdet - (cov.cwiseProduct(precision)).sum() - alpha * off_l1;
}

GlassoResult graphical_lasso(const Eigen::MatrixXd& cov, double alpha, const GlassoOptions& options) {
  require_symmetric(cov, "graphical_lasso");
  if (!(alpha >= 0.0)) throw DataError("graphical_lasso: alpha must be >= 0");
  const Eigen::Index n = cov.rows();
  if ((cov.diagonal().array() <= 0.0).any())
    throw NumericError("graphical_lasso: non-positive variance on the diagonal");

  GlassoResult result;
  if (n == 1) {
    result.covariance = cov;
    result.precision = cov.cwiseInverse();
    result.objective.push_back(glasso_objective(result.precision, cov, alpha));
    return result;
  }

  // Off-diagonals shrunk slightly so the starting W is well inside the cone.
  Eigen::MatrixXd w = 0.95 * cov;
  w.diagonal() = cov.diagonal();
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(n - 1, n);

  Eigen::MatrixXd w11(n - 1, n - 1);
  Eigen::VectorXd s12(n - 1);
  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double change = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto idx = others(n, j);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        s12[static_cast<Eigen::Index>(r)] = cov(idx[r], j);
        for (std::size_t c = 0; c < idx.size(); ++c)
          w11(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(idx[r], idx[c]);
      }

      // Lasso: min 1/2 b'W11 b - b's12 + alpha |b|_1, warm-started.
      auto b = beta.col(j);
      Eigen::VectorXd grad = w11 * b;  // W11 b, maintained incrementally
      for (int inner = 0; inner < options.max_inner; ++inner) {
        double delta = 0.0;
        for (Eigen::Index l = 0; l < n - 1; ++l) {
          const double old = b[l];
          const double partial = s12[l] - (grad[l] - w11(l, l) * old);
          const double updated = soft_threshold(partial, alpha) / w11(l, l);
          if (updated != old) {
            grad += w11.col(l) * (updated - old);
            b[l] = updated;
            delta = std::max(delta, std::abs(updated - old));
          }
        }
        if (delta < options.inner_tolerance) break;
      }

      const Eigen::VectorXd w12 = w11 * b;
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const double v = w12[static_cast<Eigen::Index>(r)];
        change = std::max(change, std::abs(v - w(idx[r], j)));
        w(idx[r], j) = v;
        w(j, idx[r]) = v;
      }
    }
    result.sweeps = sweep;
    result.final_change = change;
    result.objective.push_back(glasso_objective(precision_from(w, beta), cov, alpha));
    if (change < options.tolerance) {
      result.covariance = w;
      result.precision = precision_from(w, beta);
      if (!result.precision.allFinite())
        throw NumericError("graphical_lasso: non-finite precision estimate");
      return result;
    }
  }
  std::ostringstream msg;
  msg << "graphical_lasso: no convergence after " << options.max_sweeps
      << " sweeps (last max change " << result.final_change << ", alpha " << alpha << ", N " << n << ")";
  throw NumericError(msg.str());
}

Eigen::MatrixXd precision_glasso(const Eigen::MatrixXd& cov, double alpha) {
  if (!(alpha > 0.0)) throw DataError("precision_glasso: alpha must be positive");
  return graphical_lasso(cov, alpha).precision;
}

double pds(const Eigen::MatrixXd& precision) {
  if (precision.rows() != precision.cols()) throw DataError("pds: precision matrix is not square");
  return precision.trace();
}

ClassPds class_pds(const std::string& name, const Eigen::MatrixXd& features, const PdsOptions& options) {
  if (features.rows() < 2)
    throw DataError("pds: class '" + name + "' has " + std::to_string(features.rows()) +
                    " samples, need at least 2");
  ClassPds out;
  out.name = name;
  out.samples = static_cast<std::size_t>(features.rows());
  out.features = static_cast<std::size_t>(features.cols());

  Eigen::MatrixXd cov = covariance(mean_center(features).first);
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < options.variance_floor) {
      cov(i, i) = options.variance_floor;
      ++out.floored_features;
    }
  }
  out.condition = condition_number(cov);
  if (out.samples > out.features && out.condition < options.condition_limit) {
    out.method = PrecisionMethod::pseudoinverse;
    out.pds = pds(precision_pinv(cov));
  } else {
    out.method = PrecisionMethod::graphical_lasso;
    const GlassoResult g = graphical_lasso(cov, options.alpha, options.glasso);
    out.glasso_sweeps = g.sweeps;
    out.pds = pds(g.precision);
  }
  return out;
}

PdsReport pds_report(const ClassSplit& split, const PdsOptions& options) {
  const auto n = split.poisoned.cols();
  if (split.nonpoisoned_pos.cols() != n || split.nonpoisoned_neg.cols() != n)
    throw ConsistencyError("pds: classes have different feature counts");
  PdsReport report;
  report.source = split.source;
  report.options = options;
  report.poisoned = class_pds("poisoned_pos", split.poisoned, options);
  report.nonpoisoned_pos = class_pds("nonpoisoned_pos", split.nonpoisoned_pos, options);
  report.nonpoisoned_neg = class_pds("nonpoisoned_neg", split.nonpoisoned_neg, options);
  return report;
}

}  // namespace ncdetect
