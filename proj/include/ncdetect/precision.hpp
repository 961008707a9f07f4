#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ncdetect {

enum class SplitSource { ground_truth, cluster_derived };
std::string_view to_string(SplitSource source);

/// Neurochaos feature rows of the three classes the score compares:
/// poisoned positives, the remaining positives and the negatives.
struct ClassSplit {
  Eigen::MatrixXd poisoned;
  Eigen::MatrixXd nonpoisoned_pos;
  Eigen::MatrixXd nonpoisoned_neg;
  SplitSource source = SplitSource::ground_truth;
};

enum class PrecisionMethod { pseudoinverse, graphical_lasso };
std::string_view to_string(PrecisionMethod method);

/// Subtracts column means; returns the centered matrix and the means.
std::pair<Eigen::MatrixXd, Eigen::RowVectorXd> mean_center(const Eigen::MatrixXd& features);

/// Feature covariance (N x N) of an already centered m x N matrix, 1/(m-1).
Eigen::MatrixXd covariance(const Eigen::MatrixXd& centered);

inline constexpr double kPinvRcond = 1e-10;

/// Moore-Penrose pseudoinverse of a symmetric matrix by eigendecomposition;
/// eigenvalues at or below rcond * lambda_max count as zero.
Eigen::MatrixXd precision_pinv(const Eigen::MatrixXd& cov, double rcond = kPinvRcond);

/// lambda_max / lambda_min, infinite when the matrix is singular or indefinite.
double condition_number(const Eigen::MatrixXd& cov);

struct GlassoOptions {
  double tolerance = 1e-6;
  int max_sweeps = 200;
  int max_inner = 1000;
  double inner_tolerance = 1e-9;
};

struct GlassoResult {
  Eigen::MatrixXd precision;
  Eigen::MatrixXd covariance;  // the estimated W = precision^-1
  int sweeps = 0;
  double final_change = 0.0;
  // log det(theta) - tr(S theta) - alpha * |theta|_1,offdiag after every sweep.
  std::vector<double> objective;
};

/// Graphical lasso with an unpenalized diagonal: block coordinate descent
/// over columns of W, each column a lasso problem solved by cyclic
/// coordinate descent. Throws NumericError when it has not converged after
/// max_sweeps.
GlassoResult graphical_lasso(const Eigen::MatrixXd& cov, double alpha, const GlassoOptions& options = {});

Eigen::MatrixXd precision_glasso(const Eigen::MatrixXd& cov, double alpha);

/// Penalized log-likelihood the graphical lasso maximizes.
double glasso_objective(const Eigen::MatrixXd& precision, const Eigen::MatrixXd& cov, double alpha);

/// Precision Matrix Dependency Score: the trace of the precision matrix.
double pds(const Eigen::MatrixXd& precision);

struct PdsOptions {
  double alpha = 0.01;
  double condition_limit = 1e8;
  // Feature variances below this are raised to it before inversion; a
  // feature constant within one class would otherwise have unbounded
  // precision.
  double variance_floor = 1e-6;
  GlassoOptions glasso;
};

struct ClassPds {
  std::string name;
  double pds = 0.0;
  PrecisionMethod method = PrecisionMethod::pseudoinverse;
  double condition = 0.0;
  std::size_t samples = 0;
  std::size_t features = 0;
  std::size_t floored_features = 0;
  int glasso_sweeps = 0;
};

struct PdsReport {
  ClassPds poisoned;
  ClassPds nonpoisoned_pos;
  ClassPds nonpoisoned_neg;
  SplitSource source = SplitSource::ground_truth;
  PdsOptions options;
};

/// Per class: center, covariance, pseudoinverse when m > N and the
/// condition number is below the limit, graphical lasso otherwise, then the
/// trace. Throws DataError naming the class when it has fewer than 2 rows.
PdsReport pds_report(const ClassSplit& split, const PdsOptions& options = {});

ClassPds class_pds(const std::string& name, const Eigen::MatrixXd& features, const PdsOptions& options);

}  // namespace ncdetect
