#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ncdetect {

inline constexpr double kSignificanceLevel = 0.05;

/// Shannon entropy of a nonnegative row read as a distribution (p = e / sum e),
/// in bits divided by log2(N) so the result lies in [0,1]. An all-zero row
/// gives 0.
double sample_energy_entropy(std::span<const double> energy);

/// -sum f log2 f of the row after scaling it to unit sum.
double dispersion(std::span<const double> row);

/// Regularized incomplete beta I_x(a, b). `y` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
double incomplete_beta(double a, double b, double x, double y);
double incomplete_beta(double a, double b, double x);

double log_beta(double a, double b);

double student_t_cdf(double t, double df);

/// Two-sided tail probability P(|T| >= |t|).
double student_t_two_sided(double t, double df);

double normal_cdf(double z);

enum class TestKind { welch_t, mann_whitney_u };
std::string_view to_string(TestKind kind);

struct TestResult {
  TestKind test = TestKind::welch_t;
  double statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;  // Welch only
  bool exact = false;  // Mann-Whitney only
  bool significant = false;
};

TestResult welch_ttest(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kMannWhitneyExactLimit = 10;

/// U counts pairs with a_i > b_j, ties counting one half. Two-sided p is
/// exact (permutation distribution, ties included) when both samples have
/// at most 10 values, otherwise the tie- and continuity-corrected normal
/// approximation.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// Exact two-sided p of the U statistic under the permutation null.
double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b);

struct ClassEntropy {
  std::string name;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
};

struct PairComparison {
  std::string first;
  std::string second;
  TestResult welch;
  TestResult mann_whitney;
};

inline constexpr int kHistogramBins = 50;

struct Histogram {
  std::string name;
  std::vector<std::size_t> counts;  // kHistogramBins bins over [0,1]
};

struct EntropyComparison {
  std::vector<ClassEntropy> classes;  // poisoned_pos, nonpoisoned_pos, nonpoisoned_neg
  std::vector<PairComparison> pairs;
  std::vector<Histogram> histograms;
};

ClassEntropy class_entropy(const std::string& name, const Eigen::MatrixXd& energy);

/// Per-sample energy entropies for the three classes, both tests on the
/// pairs (nonpoisoned_pos, poisoned_pos), (nonpoisoned_pos, nonpoisoned_neg)
/// and (nonpoisoned_neg, poisoned_pos), and 50-bin histograms.
EntropyComparison entropy_comparison(const Eigen::MatrixXd& poisoned_energy,
                                     const Eigen::MatrixXd& nonpoisoned_pos_energy,
                                     const Eigen::MatrixXd& nonpoisoned_neg_energy);

Histogram histogram(const std::string& name, std::span<const double> values);

}  // namespace ncdetect
