#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ncdetect {

/// GLS neuron settings.
///
/// `q` is the initial activity the neuron starts from, `b` the skew-tent
/// breakpoint (and the threshold that binarizes a trace into firing/not
/// firing), and `epsilon` the half-width of the neighborhood around the
/// stimulus that stops the neuron.
struct HyperParams {
  double q = 0.93;
  double b = 0.499;
  double epsilon = 0.3;
  std::size_t max_iters = 10000;

  void validate() const;
  std::string describe() const;
};

struct ChaoticTrace {
  std::vector<double> values;  // y_0 .. y_{k-1}; the firing value y_k is not stored
  std::size_t firing_time = 0;
  bool converged = true;
};

struct TraceFeatures {
  double firing_time = 0.0;
  double firing_rate = 0.0;
  double energy = 0.0;
  double entropy = 0.0;

  bool operator==(const TraceFeatures&) const = default;
};

enum FeatureMask : std::uint8_t {
  kFiringTime = 1 << 0,
  kFiringRate = 1 << 1,
  kEnergy = 1 << 2,
  kEntropy = 1 << 3,
  kAllFeatures = kFiringTime | kFiringRate | kEnergy | kEntropy,
};

/// Parses "time,rate,energy,entropy" (any subset, or "all").
std::uint8_t parse_feature_mask(const std::string& text);
std::string feature_mask_string(std::uint8_t mask);
int feature_count(std::uint8_t mask);

struct NeurochaosFeatures {
  Eigen::MatrixXd firing_time;
  Eigen::MatrixXd firing_rate;
  Eigen::MatrixXd energy;
  Eigen::MatrixXd entropy;
  // Selected maps side by side in the fixed order time, rate, energy, entropy.
  Eigen::MatrixXd combined;
  std::uint8_t mask = kAllFeatures;
  std::size_t non_converged = 0;
};

/// Skew-tent map: y/b below the breakpoint, (1-y)/(1-b) above.
///
/// y = b maps to exactly 1 in real arithmetic (and a few neighbors round to
/// 1.0 in floating point); those land on the largest double below 1 so the
/// state stays in [0,1).
double gls_map_step(double y, double b);

ChaoticTrace gls_trace(double stimulus, const HyperParams& hp);

/// firing_rate is the fraction of trace values >= b, energy the sum of
/// squares, entropy the binary Shannon entropy of the firing rate in bits.
/// All zero for an empty trace.
TraceFeatures extract_features(const ChaoticTrace& trace, const HyperParams& hp);

/// gls_trace + extract_features without materializing the trace.
/// `converged` is set to false when the iteration cap was hit.
TraceFeatures fire_neuron(double stimulus, const HyperParams& hp, bool* converged = nullptr);

/// Elementwise transform of a matrix already scaled into [0,1].
NeurochaosFeatures transform_features(const Eigen::MatrixXd& normalized, const HyperParams& hp,
                                      std::uint8_t mask = kAllFeatures);

double binary_entropy_bits(double p);

/// Mean of log|f'(y)| along an orbit of the map, started at y0.
double lyapunov_estimate(double b, double y0, std::size_t iterations);

}  // namespace ncdetect
