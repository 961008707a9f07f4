#include "ncdetect/stats.hpp"

#include "ncdetect/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace ncdetect {

namespace {

double xlog2x(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

// Stirling-series remainder lgamma(x) - [(x-0.5)log x - x + log sqrt(2 pi)], x >= 10.
double lgamma_correction(double x) {
  const double x2 = 1.0 / (x * x);
  return (1.0 / 12.0 - x2 * (1.0 / 360.0 - x2 * (1.0 / 1260.0 - x2 * (1.0 / 1680.0 - x2 / 1188.0)))) / x;
}

// Lentz continued fraction for I_x(a,b); valid for x < (a+1)/(a+b+2).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  constexpr int kMaxTerms = 10000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

void require_finite(std::span<const double> v, const char* who) {
  for (double x : v)
    if (!std::isfinite(x)) throw DataError(std::string(who) + ": non-finite value");
}

}  // namespace

double sample_energy_entropy(std::span<const double> energy) {
  if (energy.size() < 2) throw DataError("energy entropy needs at least 2 features");
  double total = 0.0;
  for (double e : energy) {
    if (e < 0.0) throw DataError("energy entropy: negative energy");
    total += e;
  }
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double e : energy) h -= xlog2x(e / total);
  return std::clamp(h / std::log2(static_cast<double>(energy.size())), 0.0, 1.0);
}

double dispersion(std::span<const double> row) {
  double total = 0.0;
  for (double f : row) {
    if (f < 0.0) throw DataError("dispersion: negative value");
    total += f;
  }
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double f : row) h -= xlog2x(f / total);
  return h;
}

double log_beta(double a, double b) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  if (lo >= 10.0) {
    const double corr = lgamma_correction(lo) + lgamma_correction(hi) - lgamma_correction(lo + hi);
    return -0.5 * std::log(hi) + 0.5 * std::log(2.0 * std::numbers::pi) + corr +
           (lo - 0.5) * std::log(lo / (lo + hi)) + hi * std::log1p(-lo / (lo + hi));
  }
  if (hi >= 10.0) {
    // lgamma(lo) exact enough; hi and lo+hi through the Stirling remainder.
    const double corr = lgamma_correction(hi) - lgamma_correction(lo + hi);
    return std::lgamma(lo) + corr + lo - lo * std::log(lo + hi) +
           (hi - 0.5) * std::log1p(-lo / (lo + hi));
  }
  return std::lgamma(lo) + std::lgamma(hi) - std::lgamma(lo + hi);
}

double incomplete_beta(double a, double b, double x, double y) {
  if (!(a > 0.0) || !(b > 0.0)) throw DataError("incomplete beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DataError("incomplete beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (y == 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, y) / b;
}

double incomplete_beta(double a, double b, double x) { return incomplete_beta(a, b, x, 1.0 - x); }

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw DataError("student t: df must be positive");
  if (std::isnan(t)) throw DataError("student t: t is NaN");
  if (std::isinf(t)) return 0.0;
  // P(|T| >= |t|) = I_x(df/2, 1/2), x = df / (df + t^2).
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return incomplete_beta(df / 2.0, 0.5, x, y);
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided(t, df);
  return t < 0.0 ? tail : 1.0 - tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::string_view to_string(TestKind kind) {
  return kind == TestKind::welch_t ? "welch_t" : "mann_whitney_u";
}

TestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("welch t-test: each sample needs at least 2 values");
  require_finite(a, "welch t-test");
  require_finite(b, "welch t-test");
  auto moments = [](std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [mean_a, var_a] = moments(a);
  const auto [mean_b, var_b] = moments(b);
  if (var_a == 0.0 && var_b == 0.0) throw DataError("welch t-test: both samples have zero variance");

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = var_a / na;
  const double sb = var_b / nb;
  TestResult r;
  r.test = TestKind::welch_t;
  r.statistic = (mean_a - mean_b) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_value = std::clamp(student_t_two_sided(r.statistic, r.df), 0.0, 1.0);
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

namespace {

double u_statistic(std::span<const double> a, std::span<const double> b) {
  // Rank-sum form: U = R_a - n_a(n_a+1)/2 with midranks.
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(a.size() + b.size());
  for (double x : a) pooled.emplace_back(x, 0);
  for (double x : b) pooled.emplace_back(x, 1);
  std::sort(pooled.begin(), pooled.end());
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (pooled[t].second == 0) rank_sum_a += midrank;
    i = j;
  }
  const double na = static_cast<double>(a.size());
  return rank_sum_a - na * (na + 1.0) / 2.0;
}

}  // namespace

double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
  const std::size_t na = a.size();
  const std::size_t n = a.size() + b.size();
  if (na == 0 || b.empty()) throw DataError("mann-whitney: empty sample");

  // Doubled midranks are integers; count size-na subsets by doubled rank sum.
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<int> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j] == pooled[i]) ++j;
    for (std::size_t t = i; t < j; ++t) rank2[t] = static_cast<int>(i + 1 + j);
    i = j;
  }
  const int max_sum = std::accumulate(rank2.begin(), rank2.end(), 0);
  std::vector<std::vector<double>> ways(na + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
  ways[0][0] = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = std::min(na, i + 1); c >= 1; --c)
      for (int s = max_sum; s >= rank2[i]; --s) ways[c][static_cast<std::size_t>(s)] += ways[c - 1][static_cast<std::size_t>(s - rank2[i])];

  const double observed_u = u_statistic(a, b);
  // U = R - na(na+1)/2, so doubled: 2U = R2 - na(na+1).
  const long long offset = static_cast<long long>(na * (na + 1));
  const long long observed2 = std::llround(2.0 * observed_u);
  double total = 0.0, le = 0.0, ge = 0.0;
  for (int s = 0; s <= max_sum; ++s) {
    const double w = ways[na][static_cast<std::size_t>(s)];
    if (w == 0.0) continue;
    const long long u2 = s - offset;
    total += w;
    if (u2 <= observed2) le += w;
    if (u2 >= observed2) ge += w;
  }
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DataError("mann-whitney: each sample needs at least 1 value");
  require_finite(a, "mann-whitney");
  require_finite(b, "mann-whitney");
  TestResult r;
  r.test = TestKind::mann_whitney_u;
  r.statistic = u_statistic(a, b);
  if (a.size() <= kMannWhitneyExactLimit && b.size() <= kMannWhitneyExactLimit) {
    r.exact = true;
    r.p_value = mann_whitney_exact_p(a, b);
  } else {
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double n = na + nb;
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
      std::size_t j = i;
      while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_term += t * t * t - t;
      i = j;
    }
    const double mu = na * nb / 2.0;
    const double var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
      r.p_value = 1.0;
    } else {
      const double z = std::max(0.0, std::abs(r.statistic - mu) - 0.5) / std::sqrt(var);
      r.p_value = std::min(1.0, std::erfc(z / std::numbers::sqrt2));
    }
  }
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

Histogram histogram(const std::string& name, std::span<const double> values) {
  Histogram h;
  h.name = name;
  h.counts.assign(kHistogramBins, 0);
  for (double v : values) {
    auto bin = static_cast<int>(std::floor(v * kHistogramBins));
    bin = std::clamp(bin, 0, kHistogramBins - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

ClassEntropy class_entropy(const std::string& name, const Eigen::MatrixXd& energy) {
  if (energy.rows() == 0) throw DataError("entropy comparison: class '" + name + "' is empty");
  ClassEntropy c;
  c.name = name;
  c.values.reserve(static_cast<std::size_t>(energy.rows()));
  std::vector<double> row(static_cast<std::size_t>(energy.cols()));
  for (Eigen::Index r = 0; r < energy.rows(); ++r) {
    for (Eigen::Index k = 0; k < energy.cols(); ++k) row[static_cast<std::size_t>(k)] = energy(r, k);
    c.values.push_back(sample_energy_entropy(row));
  }
  const double n = static_cast<double>(c.values.size());
  c.mean = std::accumulate(c.values.begin(), c.values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : c.values) ss += (v - c.mean) * (v - c.mean);
  c.stddev = c.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return c;
}

EntropyComparison entropy_comparison(const Eigen::MatrixXd& poisoned_energy,
                                     const Eigen::MatrixXd& nonpoisoned_pos_energy,
                                     const Eigen::MatrixXd& nonpoisoned_neg_energy) {
  EntropyComparison out;
  out.classes.push_back(class_entropy("poisoned_pos", poisoned_energy));
  out.classes.push_back(class_entropy("nonpoisoned_pos", nonpoisoned_pos_energy));
  out.classes.push_back(class_entropy("nonpoisoned_neg", nonpoisoned_neg_energy));
  const auto& poisoned = out.classes[0];
  const auto& pos = out.classes[1];
  const auto& neg = out.classes[2];

  auto compare = [](const ClassEntropy& x, const ClassEntropy& y) {
    PairComparison p;
    p.first = x.name;
    p.second = y.name;
    p.welch = welch_ttest(x.values, y.values);
    p.mann_whitney = mann_whitney_u(x.values, y.values);
    return p;
  };
  out.pairs.push_back(compare(pos, poisoned));
  out.pairs.push_back(compare(pos, neg));
  out.pairs.push_back(compare(neg, poisoned));
  for (const auto& c : out.classes) out.histograms.push_back(histogram(c.name, c.values));
  return out;
}

}  // namespace ncdetect
