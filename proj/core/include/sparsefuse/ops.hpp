#pragma once

// Numeric kernels with explicit forward/backward pairs. All convolutions use
// zero same-padding of (k-1)/2, so an output has ceil(extent/stride) sites.

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sparsefuse/tensor.hpp"

namespace sparsefuse {

struct ConvParams {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;
  int stride = 1;
  std::vector<Real> weight;  // out x in x k x k (depthwise: channels x k x k)
  std::vector<Real> bias;    // out

  static ConvParams zeros(int in_channels, int out_channels, int kernel_size, int stride = 1);
  static ConvParams depthwise_zeros(int channels, int kernel_size);

  bool depthwise_layout() const {
    return weight.size() == static_cast<std::size_t>(out_channels) * kernel_size * kernel_size &&
           in_channels == out_channels;
  }
  Real& w(int o, int i, int ky, int kx) {
    return weight[((static_cast<std::size_t>(o) * in_channels + i) * kernel_size + ky) * kernel_size + kx];
  }
  Real w(int o, int i, int ky, int kx) const {
    return weight[((static_cast<std::size_t>(o) * in_channels + i) * kernel_size + ky) * kernel_size + kx];
  }
};

/// Gradient accumulators laid out like ConvParams.
struct ConvGrads {
  std::vector<Real> weight;
  std::vector<Real> bias;
  static ConvGrads like(const ConvParams& p) {
    return {std::vector<Real>(p.weight.size(), 0.0), std::vector<Real>(p.bias.size(), 0.0)};
  }
};

struct BatchNormParams {
  std::vector<Real> gamma;
  std::vector<Real> beta;
  std::vector<Real> running_mean;
  std::vector<Real> running_var;
  Real momentum = 0.1;
  Real epsilon = 1e-5;

  static BatchNormParams init(int channels, Real gamma0 = 1.0, Real momentum = 0.1,
                              Real epsilon = 1e-5);
  int channels() const { return static_cast<int>(gamma.size()); }
};

struct BatchNormGrads {
  std::vector<Real> gamma;
  std::vector<Real> beta;
};

struct BatchNormCache {
  FeatureMap normalized;
  std::vector<Real> inv_std;
  bool training = false;
};

/// Fully-connected layer; weight is out x in row-major.
struct DenseParams {
  int in_features = 0;
  int out_features = 0;
  std::vector<Real> weight;
  std::vector<Real> bias;

  static DenseParams zeros(int in_features, int out_features);
};

struct DenseGrads {
  std::vector<Real> weight;
  std::vector<Real> bias;
};

FeatureMap conv2d(const FeatureMap& x, const ConvParams& p);
/// Windowed sums without the bias; conv2d(x, p) == conv2d_no_bias(x, p) + bias, bitwise.
FeatureMap conv2d_no_bias(const FeatureMap& x, const ConvParams& p);
/// Returns dL/dx and adds dL/dweight into `weight_grad` when non-null.
FeatureMap conv2d_no_bias_backward(const FeatureMap& x, const ConvParams& p, const FeatureMap& dy,
                                   std::vector<Real>* weight_grad);
/// Returns dL/dx. When `grads` is non-null, dL/dweight and dL/dbias are added to it.
FeatureMap conv2d_backward(const FeatureMap& x, const ConvParams& p, const FeatureMap& dy,
                           ConvGrads* grads);

/// One k x k filter per channel, stride 1.
FeatureMap dwconv2d(const FeatureMap& x, const ConvParams& p);
FeatureMap dwconv2d_backward(const FeatureMap& x, const ConvParams& p, const FeatureMap& dy,
                             ConvGrads* grads);

/// Per-channel normalization over the H x W plane. Training mode uses the
/// plane statistics and folds them into the running estimates.
FeatureMap batchnorm2d(const FeatureMap& x, BatchNormParams& p, bool training,
                       BatchNormCache* cache = nullptr);
FeatureMap batchnorm2d_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                const FeatureMap& dy, BatchNormGrads* grads);

std::vector<Real> global_avg_pool(const FeatureMap& x);
FeatureMap global_avg_pool_backward(std::span<const Real> dv, int height, int width);

std::vector<Real> linear(std::span<const Real> x, const DenseParams& p);
std::vector<Real> linear_backward(std::span<const Real> x, const DenseParams& p,
                                  std::span<const Real> dy, DenseGrads* grads);

FeatureMap relu(const FeatureMap& x);
/// Gradient through ReLU given its forward output.
FeatureMap relu_backward(const FeatureMap& y, const FeatureMap& dy);
std::vector<Real> relu(std::span<const Real> x);
std::vector<Real> relu_backward(std::span<const Real> y, std::span<const Real> dy);

inline Real sigmoid(Real v) { return 1.0 / (1.0 + std::exp(-v)); }

FeatureMap upsample_nearest2x(const FeatureMap& x);
FeatureMap upsample_nearest2x_backward(const FeatureMap& dy, int height, int width);

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);
/// Splits a channel-concatenated gradient back into its two parts.
std::pair<FeatureMap, FeatureMap> split_channels(const FeatureMap& g, int first_channels);

void add_inplace(FeatureMap& acc, const FeatureMap& x);

inline int conv_out_extent(int extent, int stride) { return (extent + stride - 1) / stride; }

/// Fingerprints the branch taken at every piecewise-linear site (ReLU, |.|)
/// while enabled, so a finite-difference probe can tell whether its two
/// evaluations straddled a kink. Thread-local; off by default.
namespace kink_probe {
void enable(bool on);
bool enabled();
void reset();
std::uint64_t fingerprint();
void record_slow(bool branch);
inline void record(bool branch) {
  if (enabled()) record_slow(branch);
}
}  // namespace kink_probe

}  // namespace sparsefuse
