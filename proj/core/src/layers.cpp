#include "sparsefuse/layers.hpp"

#include <cmath>

namespace sparsefuse {

namespace {

void he_normal(std::vector<Real>& w, int fan_in, Rng& rng) {
  const Real std = std::sqrt(2.0 / static_cast<Real>(fan_in));
  for (Real& v : w) v = std * rng.normal();
}

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel_size, int stride, Rng& rng)
    : params(ConvParams::zeros(in_channels, out_channels, kernel_size, stride)) {
  he_normal(params.weight, in_channels * kernel_size * kernel_size, rng);
  grads = ConvGrads::like(params);
}

FeatureMap Conv2d::forward(const FeatureMap& x) {
  input_ = x;
  return conv2d(x, params);
}

FeatureMap Conv2d::backward(const FeatureMap& dy) { return conv2d_backward(input_, params, dy, &grads); }

void Conv2d::collect(const std::string& prefix, ParamSet& set) {
  set.add(prefix + ".weight", params.weight, grads.weight);
  set.add(prefix + ".bias", params.bias, grads.bias);
}

DepthwiseConv2d::DepthwiseConv2d(int channels, int kernel_size, Rng& rng)
    : params(ConvParams::depthwise_zeros(channels, kernel_size)) {
  he_normal(params.weight, kernel_size * kernel_size, rng);
  grads = ConvGrads::like(params);
}

FeatureMap DepthwiseConv2d::forward(const FeatureMap& x) {
  input_ = x;
  return dwconv2d(x, params);
}

FeatureMap DepthwiseConv2d::backward(const FeatureMap& dy) {
  return dwconv2d_backward(input_, params, dy, &grads);
}

// The bias stays at zero and is not registered: a zero input must map to a
// zero output so that the fusion branch vanishes exactly when gamma = 0.
void DepthwiseConv2d::collect(const std::string& prefix, ParamSet& set) {
  set.add(prefix + ".weight", params.weight, grads.weight);
}

BatchNorm2d::BatchNorm2d(int channels, Real gamma0, Real momentum, Real epsilon)
    : params(BatchNormParams::init(channels, gamma0, momentum, epsilon)) {
  grads.gamma.assign(channels, 0.0);
  grads.beta.assign(channels, 0.0);
}

FeatureMap BatchNorm2d::forward(const FeatureMap& x, bool training) {
  return batchnorm2d(x, params, training, &cache_);
}

FeatureMap BatchNorm2d::backward(const FeatureMap& dy) {
  return batchnorm2d_backward(params, cache_, dy, &grads);
}

void BatchNorm2d::collect(const std::string& prefix, ParamSet& set) {
  set.add(prefix + ".gamma", params.gamma, grads.gamma);
  set.add(prefix + ".beta", params.beta, grads.beta);
  set.add_buffer(prefix + ".running_mean", params.running_mean);
  set.add_buffer(prefix + ".running_var", params.running_var);
}

Dense::Dense(int in_features, int out_features, Rng& rng)
    : params(DenseParams::zeros(in_features, out_features)) {
  he_normal(params.weight, in_features, rng);
  grads.weight.assign(params.weight.size(), 0.0);
  grads.bias.assign(params.bias.size(), 0.0);
}

std::vector<Real> Dense::forward(std::span<const Real> x) {
  input_.assign(x.begin(), x.end());
  return linear(x, params);
}

std::vector<Real> Dense::backward(std::span<const Real> dy) {
  return linear_backward(input_, params, dy, &grads);
}

void Dense::collect(const std::string& prefix, ParamSet& set) {
  set.add(prefix + ".weight", params.weight, grads.weight);
  set.add(prefix + ".bias", params.bias, grads.bias);
}

}  // namespace sparsefuse
