#include "ncdetect/neurochaos.hpp"

#include "ncdetect/errors.hpp"

#include <cmath>
#include <sstream>

namespace ncdetect {

namespace {

constexpr double kBelowOne = 0x1.fffffffffffffp-1;

bool in_open_unit(double v) { return v > 0.0 && v < 1.0; }

}  // namespace

void HyperParams::validate() const {
  if (!in_open_unit(q)) throw DataError("q must lie in (0,1), got " + std::to_string(q));
  if (!in_open_unit(b)) throw DataError("b must lie in (0,1), got " + std::to_string(b));
  if (!in_open_unit(epsilon))
    throw DataError("epsilon must lie in (0,1), got " + std::to_string(epsilon));
  if (max_iters < 1) throw DataError("max_iters must be >= 1");
}

std::string HyperParams::describe() const {
  std::ostringstream s;
  s << "q=" << q << " b=" << b << " epsilon=" << epsilon;
  return s.str();
}

std::uint8_t parse_feature_mask(const std::string& text) {
  if (text == "all") return kAllFeatures;
  std::uint8_t mask = 0;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "time")
      mask |= kFiringTime;
    else if (item == "rate")
      mask |= kFiringRate;
    else if (item == "energy")
      mask |= kEnergy;
    else if (item == "entropy")
      mask |= kEntropy;
    else
      throw DataError("unknown neurochaos feature '" + item + "'");
  }
  if (mask == 0) throw DataError("empty feature set");
  return mask;
}

std::string feature_mask_string(std::uint8_t mask) {
  std::string out;
  auto add = [&](std::uint8_t bit, const char* name) {
    if (!(mask & bit)) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(kFiringTime, "time");
  add(kFiringRate, "rate");
  add(kEnergy, "energy");
  add(kEntropy, "entropy");
  return out;
}

int feature_count(std::uint8_t mask) {
  return ((mask & kFiringTime) != 0) + ((mask & kFiringRate) != 0) + ((mask & kEnergy) != 0) +
         ((mask & kEntropy) != 0);
}

double gls_map_step(double y, double b) {
  if (!(y >= 0.0 && y < 1.0)) throw DataError("gls state must lie in [0,1)");
  if (!in_open_unit(b)) throw DataError("gls breakpoint must lie in (0,1)");
  const double next = y < b ? y / b : (1.0 - y) / (1.0 - b);
  return next < 1.0 ? next : kBelowOne;
}

ChaoticTrace gls_trace(double stimulus, const HyperParams& hp) {
  hp.validate();
  if (!(stimulus >= 0.0 && stimulus <= 1.0)) throw DataError("stimulus must lie in [0,1]");
  ChaoticTrace trace;
  double y = hp.q;
  for (std::size_t k = 0;; ++k) {
    if (std::abs(y - stimulus) < hp.epsilon) {
      trace.firing_time = k;
      return trace;
    }
    if (k == hp.max_iters) {
      trace.firing_time = k;
      trace.converged = false;
      return trace;
    }
    trace.values.push_back(y);
    y = gls_map_step(y, hp.b);
  }
}

double binary_entropy_bits(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

TraceFeatures extract_features(const ChaoticTrace& trace, const HyperParams& hp) {
  TraceFeatures f;
  const std::size_t k = trace.values.size();
  if (k == 0) return f;
  std::size_t above = 0;
  for (double y : trace.values) {
    if (y >= hp.b) ++above;
    f.energy += y * y;
  }
  f.firing_time = static_cast<double>(trace.firing_time);
  f.firing_rate = static_cast<double>(above) / static_cast<double>(k);
  f.entropy = binary_entropy_bits(f.firing_rate);
  return f;
}

TraceFeatures fire_neuron(double stimulus, const HyperParams& hp, bool* converged) {
  TraceFeatures f;
  double y = hp.q;
  std::size_t k = 0;
  std::size_t above = 0;
  bool fired = false;
  for (;; ++k) {
    if (std::abs(y - stimulus) < hp.epsilon) {
      fired = true;
      break;
    }
    if (k == hp.max_iters) break;
    if (y >= hp.b) ++above;
    f.energy += y * y;
    y = y < hp.b ? y / hp.b : (1.0 - y) / (1.0 - hp.b);
    if (y >= 1.0) y = kBelowOne;
  }
  if (converged) *converged = fired;
  if (k == 0) return f;
  f.firing_time = static_cast<double>(k);
  f.firing_rate = static_cast<double>(above) / static_cast<double>(k);
  f.entropy = binary_entropy_bits(f.firing_rate);
  return f;
}

NeurochaosFeatures transform_features(const Eigen::MatrixXd& normalized, const HyperParams& hp,
                                      std::uint8_t mask) {
  hp.validate();
  if (mask == 0 || (mask & ~kAllFeatures)) throw DataError("invalid neurochaos feature mask");
  const Eigen::Index m = normalized.rows();
  const Eigen::Index d = normalized.cols();
  if ((normalized.array() < 0.0).any() || (normalized.array() > 1.0).any() || !normalized.allFinite())
    throw DataError("neurochaos transform expects inputs in [0,1]");

  NeurochaosFeatures out;
  out.mask = mask;
  out.firing_time.resize(m, d);
  out.firing_rate.resize(m, d);
  out.energy.resize(m, d);
  out.entropy.resize(m, d);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      bool converged = true;
      const TraceFeatures f = fire_neuron(normalized(r, c), hp, &converged);
      if (!converged) ++out.non_converged;
      out.firing_time(r, c) = f.firing_time;
      out.firing_rate(r, c) = f.firing_rate;
      out.energy(r, c) = f.energy;
      out.entropy(r, c) = f.entropy;
    }
  }

  out.combined.resize(m, d * feature_count(mask));
  Eigen::Index block = 0;
  auto place = [&](std::uint8_t bit, const Eigen::MatrixXd& map) {
    if (!(mask & bit)) return;
    out.combined.middleCols(block * d, d) = map;
    ++block;
  };
  place(kFiringTime, out.firing_time);
  place(kFiringRate, out.firing_rate);
  place(kEnergy, out.energy);
  place(kEntropy, out.entropy);
  return out;
}

double lyapunov_estimate(double b, double y0, std::size_t iterations) {
  if (iterations == 0) throw DataError("lyapunov estimate needs at least one iteration");
  double sum = 0.0;
  double y = y0;
  for (std::size_t i = 0; i < iterations; ++i) {
    sum += y < b ? -std::log(b) : -std::log(1.0 - b);
    y = gls_map_step(y, b);
  }
  return sum / static_cast<double>(iterations);
}

}  // namespace ncdetect
