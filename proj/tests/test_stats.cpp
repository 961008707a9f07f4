#include "ncdetect/errors.hpp"
#include "ncdetect/random.hpp"
#include "ncdetect/stats.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

using namespace ncdetect;

namespace {

struct TPoint {
  double t;
  double df;
  double cdf;
};

const TPoint kStudentT[] = {
#include "student_t_oracle.inc"
};

}  // namespace

TEST(Entropy, Examples) {
  const std::vector<double> uniform{1, 1, 1, 1}, onehot{5, 0, 0, 0}, mixed{2, 1, 1}, zero{0, 0, 0};
  EXPECT_NEAR(sample_energy_entropy(uniform), 1.0, 1e-15);
  EXPECT_EQ(sample_energy_entropy(onehot), 0.0);
  EXPECT_NEAR(sample_energy_entropy(mixed), 1.5 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(sample_energy_entropy(mixed), 0.9464, 1e-4);
  EXPECT_EQ(sample_energy_entropy(zero), 0.0);
  const std::vector<double> negative{1, -1}, single{3};
  EXPECT_THROW(sample_energy_entropy(negative), DataError);
  EXPECT_THROW(sample_energy_entropy(single), DataError);
}

TEST(Entropy, ScaleInvariant) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> row(7), scaled(7);
    const double c = 0.01 + 100 * rng.uniform();
    for (std::size_t j = 0; j < 7; ++j) {
      row[j] = rng.uniform();
      scaled[j] = c * row[j];
    }
    EXPECT_NEAR(sample_energy_entropy(row), sample_energy_entropy(scaled), 1e-12);
  }
}

TEST(Dispersion, Examples) {
  const std::vector<double> half{0.5, 0.5}, onehot{0, 1, 0}, quarter{0.25, 0.25, 0.25, 0.25}, bad{0.5, -0.1};
  EXPECT_NEAR(dispersion(half), 1.0, 1e-15);
  EXPECT_EQ(dispersion(onehot), 0.0);
  EXPECT_NEAR(dispersion(quarter), 2.0, 1e-15);
  EXPECT_THROW(dispersion(bad), DataError);
}

TEST(StudentT, MatchesHighPrecisionOracle) {
  ASSERT_EQ(std::size(kStudentT), 50u);
  for (const auto& p : kStudentT) EXPECT_NEAR(student_t_cdf(p.t, p.df), p.cdf, 1e-10) << "t=" << p.t << " df=" << p.df;
}

TEST(StudentT, CdfAtZeroIsHalf) {
  for (double df : {0.1, 0.5, 1.0, 2.5, 7.0, 30.0, 1e3, 1e6}) EXPECT_NEAR(student_t_cdf(0.0, df), 0.5, 1e-12);
}

TEST(StudentT, TwoSidedSymmetry) {
  EXPECT_NEAR(student_t_two_sided(1.0, 8.0), 0.34659350708733416, 1e-12);
  EXPECT_EQ(student_t_two_sided(-2.3, 11.0), student_t_two_sided(2.3, 11.0));
}

TEST(IncompleteBeta, Identities) {
  // I_x(1, 1) = x and I_x(a, b) = 1 - I_{1-x}(b, a).
  for (double x : {0.0, 0.1, 0.5, 0.93, 1.0}) EXPECT_NEAR(incomplete_beta(1, 1, x), x, 1e-15);
  EXPECT_NEAR(incomplete_beta(2.5, 4.0, 0.3), 1.0 - incomplete_beta(4.0, 2.5, 0.7), 1e-14);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
}

TEST(Welch, Examples) {
  const std::vector<double> same{1, 2, 3};
  const auto r0 = welch_ttest(same, same);
  EXPECT_EQ(r0.statistic, 0.0);
  EXPECT_NEAR(r0.p_value, 1.0, 1e-15);
  EXPECT_FALSE(r0.significant);

  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
  const auto r = welch_ttest(a, b);
  EXPECT_NEAR(r.statistic, -1.0, 1e-14);
  EXPECT_NEAR(r.df, 8.0, 1e-12);
  EXPECT_NEAR(r.p_value, 0.34659350708733416, 1e-10);  // scipy t.sf
  const auto flipped = welch_ttest(b, a);
  EXPECT_EQ(flipped.statistic, -r.statistic);
  EXPECT_EQ(flipped.p_value, r.p_value);
}

TEST(Welch, UnequalVariancesAgainstScipy) {
  const std::vector<double> a{0.2, 0.9, 1.7, 3.3, 4.1, 4.4}, b{2.5, 3.0, 3.9, 5.5, 6.8, 7.0, 9.1};
  const auto r = welch_ttest(a, b);
  EXPECT_NEAR(r.statistic, -2.5686888967821337, 1e-12);
  EXPECT_NEAR(r.df, 10.769372210525509, 1e-10);
  EXPECT_NEAR(r.p_value, 0.02650272039872558, 1e-10);
  EXPECT_TRUE(r.significant);
}

TEST(Welch, Errors) {
  const std::vector<double> c1{2, 2, 2}, c2{5, 5}, one{1}, ok{1, 2};
  EXPECT_THROW(welch_ttest(c1, c2), DataError);
  EXPECT_THROW(welch_ttest(one, ok), DataError);
}

TEST(MannWhitney, Examples) {
  const std::vector<double> same{1, 2, 3};
  const auto r = mann_whitney_u(same, same);
  EXPECT_EQ(r.statistic, 4.5);
  EXPECT_TRUE(r.exact);

  const std::vector<double> a{1, 2}, b{3, 4};
  const auto r2 = mann_whitney_u(a, b);
  EXPECT_EQ(r2.statistic, 0.0);
  EXPECT_NEAR(r2.p_value, 2.0 / 6.0, 1e-15);
}

TEST(MannWhitney, ExactPathMatchesEnumerationUpToSix) {
  Rng rng(17);
  for (std::size_t na = 1; na <= 6; ++na)
    for (std::size_t nb = 1; nb <= 6; ++nb)
      for (int trial = 0; trial < 20; ++trial) {
        // Small integer alphabets force ties; trial 0 uses distinct values.
        const std::uint64_t alphabet = trial == 0 ? 1000 : 2 + rng.below(6);
        std::vector<double> a(na), b(nb);
        for (auto& v : a) v = static_cast<double>(rng.below(alphabet));
        for (auto& v : b) v = static_cast<double>(rng.below(alphabet));
        const auto r = mann_whitney_u(a, b);
        ASSERT_TRUE(r.exact);
        ASSERT_NEAR(r.p_value, oracle::mann_whitney_enumeration_p(a, b), 1e-12) << na << "x" << nb << " trial " << trial;
      }
}

TEST(MannWhitney, NormalApproximationAgainstScipy) {
  const std::vector<double> a{1, 2, 2, 3, 3, 3, 4, 5, 5, 6, 7, 7}, b{3, 4, 4, 5, 6, 6, 7, 8, 8, 9, 9, 10, 11};
  const auto r = mann_whitney_u(a, b);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.statistic, 28.5);
  EXPECT_NEAR(r.p_value, 0.007356982427418631, 1e-12);
}

TEST(EntropyComparison, ShapesAndErrors) {
  Rng rng(5);
  auto draw = [&](Eigen::Index rows) {
    Eigen::MatrixXd m(rows, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
    return m;
  };
  const auto cmp = entropy_comparison(draw(20), draw(30), draw(40));
  ASSERT_EQ(cmp.classes.size(), 3u);
  EXPECT_EQ(cmp.classes[0].values.size(), 20u);
  ASSERT_EQ(cmp.pairs.size(), 3u);
  EXPECT_EQ(cmp.pairs[0].first, "nonpoisoned_pos");
  EXPECT_EQ(cmp.pairs[0].second, "poisoned_pos");
  ASSERT_EQ(cmp.histograms.size(), 3u);
  std::size_t total = 0;
  for (auto c : cmp.histograms[2].counts) total += c;
  EXPECT_EQ(total, 40u);
  EXPECT_THROW(entropy_comparison(Eigen::MatrixXd(0, 6), draw(5), draw(5)), DataError);
}

TEST(EntropyComparison, IdenticalClassesRarelySignificant) {
  // Each (pair, test) cell must stay non-significant in at least 90 of 100 trials.
  std::array<int, 6> significant{};
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(trial, "entropy-control"));
    auto draw = [&] {
      Eigen::MatrixXd m(60, 8);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
      return m;
    };
    const auto cmp = entropy_comparison(draw(), draw(), draw());
    for (std::size_t p = 0; p < 3; ++p) {
      significant[2 * p] += cmp.pairs[p].welch.significant;
      significant[2 * p + 1] += cmp.pairs[p].mann_whitney.significant;
    }
  }
  for (int s : significant) EXPECT_LE(s, 10);
}
