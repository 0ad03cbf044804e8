#pragma once

// Stateful wrappers around the kernels in ops.hpp: each layer owns its
// parameters and gradient accumulators and caches what backward() needs from
// the most recent forward().

#include <span>
#include <string>
#include <vector>

#include "sparsefuse/ops.hpp"
#include "sparsefuse/rng.hpp"

namespace sparsefuse {

struct ParamRef {
  std::string name;
  std::span<Real> value;
  std::span<Real> grad;
};

struct BufferRef {
  std::string name;
  std::span<Real> value;
};

/// Flat view over every named array of a model.
struct ParamSet {
  std::vector<ParamRef> params;
  std::vector<BufferRef> buffers;

  void add(std::string name, std::vector<Real>& value, std::vector<Real>& grad) {
    params.push_back({std::move(name), value, grad});
  }
  void add_buffer(std::string name, std::vector<Real>& value) {
    buffers.push_back({std::move(name), value});
  }
  void zero_grad() {
    for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
};

class Conv2d {
 public:
  Conv2d() = default;
  /// He-normal weights, zero bias.
  Conv2d(int in_channels, int out_channels, int kernel_size, int stride, Rng& rng);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy);
  void collect(const std::string& prefix, ParamSet& set);

  ConvParams params;
  ConvGrads grads;

 private:
  FeatureMap input_;
};

/// Bias-free depthwise convolution (stride 1).
class DepthwiseConv2d {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(int channels, int kernel_size, Rng& rng);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy);
  void collect(const std::string& prefix, ParamSet& set);

  ConvParams params;
  ConvGrads grads;

 private:
  FeatureMap input_;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(int channels, Real gamma0, Real momentum, Real epsilon);

  FeatureMap forward(const FeatureMap& x, bool training);
  FeatureMap backward(const FeatureMap& dy);
  void collect(const std::string& prefix, ParamSet& set);

  BatchNormParams params;
  BatchNormGrads grads;

 private:
  BatchNormCache cache_;
};

class Dense {
 public:
  Dense() = default;
  Dense(int in_features, int out_features, Rng& rng);

  std::vector<Real> forward(std::span<const Real> x);
  std::vector<Real> backward(std::span<const Real> dy);
  void collect(const std::string& prefix, ParamSet& set);

  DenseParams params;
  DenseGrads grads;

 private:
  std::vector<Real> input_;
};

/// Conv followed by ReLU.
class ConvRelu {
 public:
  ConvRelu() = default;
  ConvRelu(int in_channels, int out_channels, int kernel_size, int stride, Rng& rng)
      : conv(in_channels, out_channels, kernel_size, stride, rng) {}

  FeatureMap forward(const FeatureMap& x) {
    output_ = relu(conv.forward(x));
    return output_;
  }
  FeatureMap backward(const FeatureMap& dy) { return conv.backward(relu_backward(output_, dy)); }
  void collect(const std::string& prefix, ParamSet& set) { conv.collect(prefix, set); }

  Conv2d conv;

 private:
  FeatureMap output_;
};

}  // namespace sparsefuse
