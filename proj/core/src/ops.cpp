#include "sparsefuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sparsefuse/rng.hpp"

namespace sparsefuse {

namespace {

// Range of output columns ox with 0 <= ox*stride + kx - pad < width.
struct ColumnRange {
  int lo;
  int hi;  // inclusive; lo > hi means empty
};

ColumnRange valid_columns(int width, int out_width, int stride, int kx, int pad) {
  const int shift = kx - pad;
  int lo = 0;
  if (shift < 0) lo = (-shift + stride - 1) / stride;
  const int num = width - 1 - shift;
  int hi = num < 0 ? -1 : num / stride;
  hi = std::min(hi, out_width - 1);
  return {lo, hi};
}

void check_kernel(const ConvParams& p) {
  if (p.kernel_size <= 0 || p.kernel_size % 2 == 0)
    throw ConfigError("kernel_size must be a positive odd integer, got " +
                      std::to_string(p.kernel_size));
  if (p.stride <= 0) throw ConfigError("stride must be positive");
}

void check_conv(const FeatureMap& x, const ConvParams& p) {
  check_kernel(p);
  if (x.channels() != p.in_channels)
    throw ConfigError("conv2d: input has " + std::to_string(x.channels()) +
                      " channels, layer expects " + std::to_string(p.in_channels));
  const std::size_t k2 = static_cast<std::size_t>(p.kernel_size) * p.kernel_size;
  if (p.weight.size() != static_cast<std::size_t>(p.out_channels) * p.in_channels * k2 ||
      p.bias.size() != static_cast<std::size_t>(p.out_channels))
    throw ConfigError("conv2d: parameter arrays do not match declared shape");
}

void check_dwconv(const FeatureMap& x, const ConvParams& p) {
  check_kernel(p);
  if (p.in_channels != p.out_channels || x.channels() != p.in_channels)
    throw ConfigError("dwconv2d: channel mismatch (input " + std::to_string(x.channels()) +
                      ", layer " + std::to_string(p.in_channels) + "->" +
                      std::to_string(p.out_channels) + ")");
  if (p.stride != 1) throw ConfigError("dwconv2d: stride must be 1");
  const std::size_t k2 = static_cast<std::size_t>(p.kernel_size) * p.kernel_size;
  if (p.weight.size() != static_cast<std::size_t>(p.out_channels) * k2 ||
      p.bias.size() != static_cast<std::size_t>(p.out_channels))
    throw ConfigError("dwconv2d: parameter arrays do not match declared shape");
}

// y[oc] += w * shifted window of x[ic], over all valid sites.
inline void accumulate_tap(const Real* in, Real* out, Real w, int height, int width, int out_h,
                           int out_w, int stride, int ky, int kx, int pad) {
  const ColumnRange cols = valid_columns(width, out_w, stride, kx, pad);
  if (cols.lo > cols.hi) return;
  for (int oy = 0; oy < out_h; ++oy) {
    const int iy = oy * stride + ky - pad;
    if (iy < 0 || iy >= height) continue;
    const Real* row = in + static_cast<std::size_t>(iy) * width + (kx - pad);
    Real* orow = out + static_cast<std::size_t>(oy) * out_w;
    if (stride == 1) {
      for (int ox = cols.lo; ox <= cols.hi; ++ox) orow[ox] += w * row[ox];
    } else {
      for (int ox = cols.lo; ox <= cols.hi; ++ox) orow[ox] += w * row[ox * stride];
    }
  }
}

// Backward of accumulate_tap: returns d w, scatters into dx.
inline Real backward_tap(const Real* in, const Real* dout, Real* din, Real w, int height,
                         int width, int out_h, int out_w, int stride, int ky, int kx, int pad) {
  const ColumnRange cols = valid_columns(width, out_w, stride, kx, pad);
  Real dw = 0.0;
  if (cols.lo > cols.hi) return dw;
  for (int oy = 0; oy < out_h; ++oy) {
    const int iy = oy * stride + ky - pad;
    if (iy < 0 || iy >= height) continue;
    const std::size_t off = static_cast<std::size_t>(iy) * width + (kx - pad);
    const Real* row = in + off;
    Real* drow = din + off;
    const Real* grow = dout + static_cast<std::size_t>(oy) * out_w;
    for (int ox = cols.lo; ox <= cols.hi; ++ox) {
      const int ix = ox * stride;
      dw += grow[ox] * row[ix];
      drow[ix] += w * grow[ox];
    }
  }
  return dw;
}

}  // namespace

ConvParams ConvParams::zeros(int in_channels, int out_channels, int kernel_size, int stride) {
  ConvParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.kernel_size = kernel_size;
  p.stride = stride;
  p.weight.assign(static_cast<std::size_t>(out_channels) * in_channels * kernel_size * kernel_size,
                  0.0);
  p.bias.assign(out_channels, 0.0);
  return p;
}

ConvParams ConvParams::depthwise_zeros(int channels, int kernel_size) {
  ConvParams p;
  p.in_channels = channels;
  p.out_channels = channels;
  p.kernel_size = kernel_size;
  p.stride = 1;
  p.weight.assign(static_cast<std::size_t>(channels) * kernel_size * kernel_size, 0.0);
  p.bias.assign(channels, 0.0);
  return p;
}

BatchNormParams BatchNormParams::init(int channels, Real gamma0, Real momentum, Real epsilon) {
  BatchNormParams p;
  p.gamma.assign(channels, gamma0);
  p.beta.assign(channels, 0.0);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  p.momentum = momentum;
  p.epsilon = epsilon;
  return p;
}

DenseParams DenseParams::zeros(int in_features, int out_features) {
  DenseParams p;
  p.in_features = in_features;
  p.out_features = out_features;
  p.weight.assign(static_cast<std::size_t>(in_features) * out_features, 0.0);
  p.bias.assign(out_features, 0.0);
  return p;
}

FeatureMap conv2d_no_bias(const FeatureMap& x, const ConvParams& p) {
  check_conv(x, p);
  const int k = p.kernel_size;
  const int pad = (k - 1) / 2;
  const int out_h = conv_out_extent(x.height(), p.stride);
  const int out_w = conv_out_extent(x.width(), p.stride);
  FeatureMap y(p.out_channels, out_h, out_w);
  for (int o = 0; o < p.out_channels; ++o) {
    Real* out = y.channel(o).data();
    for (int i = 0; i < p.in_channels; ++i) {
      const Real* in = x.channel(i).data();
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
          accumulate_tap(in, out, p.w(o, i, ky, kx), x.height(), x.width(), out_h, out_w,
                         p.stride, ky, kx, pad);
    }
  }
  return y;
}

FeatureMap conv2d(const FeatureMap& x, const ConvParams& p) {
  FeatureMap y = conv2d_no_bias(x, p);
  for (int o = 0; o < p.out_channels; ++o)
    for (Real& v : y.channel(o)) v += p.bias[o];
  return y;
}

FeatureMap conv2d_no_bias_backward(const FeatureMap& x, const ConvParams& p, const FeatureMap& dy,
                                   std::vector<Real>* weight_grad) {
  check_conv(x, p);
  const int k = p.kernel_size;
  const int pad = (k - 1) / 2;
  const int out_h = conv_out_extent(x.height(), p.stride);
  const int out_w = conv_out_extent(x.width(), p.stride);
  if (dy.channels() != p.out_channels || dy.height() != out_h || dy.width() != out_w)
    throw InternalError("conv2d_backward: upstream gradient shape mismatch");
  FeatureMap dx(x.channels(), x.height(), x.width());
  for (int o = 0; o < p.out_channels; ++o) {
    const Real* g = dy.channel(o).data();
    for (int i = 0; i < p.in_channels; ++i) {
      const Real* in = x.channel(i).data();
      Real* din = dx.channel(i).data();
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const Real dw = backward_tap(in, g, din, p.w(o, i, ky, kx), x.height(), x.width(),
                                       out_h, out_w, p.stride, ky, kx, pad);
          if (weight_grad)
            (*weight_grad)[((static_cast<std::size_t>(o) * p.in_channels + i) * k + ky) * k + kx] +=
                dw;
        }
    }
  }
  return dx;
}

FeatureMap conv2d_backward(const FeatureMap& x, const ConvParams& p, const FeatureMap& dy,
                           ConvGrads* grads) {
  FeatureMap dx = conv2d_no_bias_backward(x, p, dy, grads ? &grads->weight : nullptr);
  if (grads)
    for (int o = 0; o < p.out_channels; ++o) {
      Real db = 0.0;
      for (Real v : dy.channel(o)) db += v;
      grads->bias[o] += db;
    }
  return dx;
}

FeatureMap dwconv2d(const FeatureMap& x, const ConvParams& p) {
  check_dwconv(x, p);
  const int k = p.kernel_size;
  const int pad = (k - 1) / 2;
  FeatureMap y(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    auto out = y.channel(c);
    const Real* in = x.channel(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx)
        accumulate_tap(in, out.data(), p.weight[(static_cast<std::size_t>(c) * k + ky) * k + kx],
                       x.height(), x.width(), x.height(), x.width(), 1, ky, kx, pad);
    for (Real& v : out) v += p.bias[c];
  }
  return y;
}

FeatureMap dwconv2d_backward(const FeatureMap& x, const ConvParams& p, const FeatureMap& dy,
                             ConvGrads* grads) {
  check_dwconv(x, p);
  if (!dy.same_shape(x)) throw InternalError("dwconv2d_backward: upstream gradient shape mismatch");
  const int k = p.kernel_size;
  const int pad = (k - 1) / 2;
  FeatureMap dx(x.channels(), x.height(), x.width());
  for (int c = 0; c < x.channels(); ++c) {
    const auto g = dy.channel(c);
    if (grads) {
      Real db = 0.0;
      for (Real v : g) db += v;
      grads->bias[c] += db;
    }
    const Real* in = x.channel(c).data();
    Real* din = dx.channel(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t wi = (static_cast<std::size_t>(c) * k + ky) * k + kx;
        const Real dw = backward_tap(in, g.data(), din, p.weight[wi], x.height(), x.width(),
                                     x.height(), x.width(), 1, ky, kx, pad);
        if (grads) grads->weight[wi] += dw;
      }
  }
  return dx;
}

FeatureMap batchnorm2d(const FeatureMap& x, BatchNormParams& p, bool training,
                       BatchNormCache* cache) {
  const int channels = x.channels();
  if (p.channels() != channels || p.beta.size() != p.gamma.size())
    throw ConfigError("batchnorm2d: parameter length does not match channel count");
  const std::size_t n = x.plane();
  if (n == 0) throw ConfigError("batchnorm2d: zero spatial extent");
  FeatureMap y(channels, x.height(), x.width());
  FeatureMap normalized(channels, x.height(), x.width());
  std::vector<Real> inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    const auto in = x.channel(c);
    Real mean;
    Real var;
    if (training) {
      Real sum = 0.0;
      for (Real v : in) sum += v;
      mean = sum / static_cast<Real>(n);
      Real sq = 0.0;
      for (Real v : in) sq += (v - mean) * (v - mean);
      var = sq / static_cast<Real>(n);
      const Real unbiased = n > 1 ? sq / static_cast<Real>(n - 1) : var;
      p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * mean;
      p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * unbiased;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + p.epsilon);
    auto nrm = normalized.channel(c);
    auto out = y.channel(c);
    for (std::size_t j = 0; j < n; ++j) {
      nrm[j] = (in[j] - mean) * inv_std[c];
      out[j] = p.gamma[c] * nrm[j] + p.beta[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
  }
  return y;
}

FeatureMap batchnorm2d_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                const FeatureMap& dy, BatchNormGrads* grads) {
  if (!dy.same_shape(cache.normalized))
    throw InternalError("batchnorm2d_backward: upstream gradient shape mismatch");
  const int channels = dy.channels();
  const std::size_t n = dy.plane();
  FeatureMap dx(channels, dy.height(), dy.width());
  for (int c = 0; c < channels; ++c) {
    const auto g = dy.channel(c);
    const auto nrm = cache.normalized.channel(c);
    Real sum_g = 0.0;
    Real sum_gx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      sum_g += g[j];
      sum_gx += g[j] * nrm[j];
    }
    if (grads) {
      grads->gamma[c] += sum_gx;
      grads->beta[c] += sum_g;
    }
    auto out = dx.channel(c);
    const Real scale = p.gamma[c] * cache.inv_std[c];
    if (cache.training) {
      const Real inv_n = 1.0 / static_cast<Real>(n);
      for (std::size_t j = 0; j < n; ++j)
        out[j] = scale * (g[j] - inv_n * sum_g - nrm[j] * inv_n * sum_gx);
    } else {
      for (std::size_t j = 0; j < n; ++j) out[j] = scale * g[j];
    }
  }
  return dx;
}

std::vector<Real> global_avg_pool(const FeatureMap& x) {
  std::vector<Real> v(x.channels());
  const Real inv = 1.0 / static_cast<Real>(x.plane());
  for (int c = 0; c < x.channels(); ++c) {
    Real s = 0.0;
    for (Real e : x.channel(c)) s += e;
    v[c] = s * inv;
  }
  return v;
}

FeatureMap global_avg_pool_backward(std::span<const Real> dv, int height, int width) {
  FeatureMap dx(static_cast<int>(dv.size()), height, width);
  const Real inv = 1.0 / (static_cast<Real>(height) * width);
  for (std::size_t c = 0; c < dv.size(); ++c) {
    auto ch = dx.channel(static_cast<int>(c));
    std::fill(ch.begin(), ch.end(), dv[c] * inv);
  }
  return dx;
}

std::vector<Real> linear(std::span<const Real> x, const DenseParams& p) {
  if (static_cast<int>(x.size()) != p.in_features)
    throw ConfigError("linear: input width " + std::to_string(x.size()) + " != " +
                      std::to_string(p.in_features));
  std::vector<Real> y(p.out_features);
  for (int o = 0; o < p.out_features; ++o) {
    Real s = p.bias[o];
    const Real* w = p.weight.data() + static_cast<std::size_t>(o) * p.in_features;
    for (int i = 0; i < p.in_features; ++i) s += w[i] * x[i];
    y[o] = s;
  }
  return y;
}

std::vector<Real> linear_backward(std::span<const Real> x, const DenseParams& p,
                                  std::span<const Real> dy, DenseGrads* grads) {
  if (static_cast<int>(dy.size()) != p.out_features || static_cast<int>(x.size()) != p.in_features)
    throw InternalError("linear_backward: shape mismatch");
  std::vector<Real> dx(p.in_features, 0.0);
  for (int o = 0; o < p.out_features; ++o) {
    const Real* w = p.weight.data() + static_cast<std::size_t>(o) * p.in_features;
    for (int i = 0; i < p.in_features; ++i) dx[i] += w[i] * dy[o];
    if (grads) {
      grads->bias[o] += dy[o];
      Real* gw = grads->weight.data() + static_cast<std::size_t>(o) * p.in_features;
      for (int i = 0; i < p.in_features; ++i) gw[i] += dy[o] * x[i];
    }
  }
  return dx;
}

FeatureMap relu(const FeatureMap& x) {
  FeatureMap y(x.channels(), x.height(), x.width());
  auto in = x.data();
  auto out = y.data();
  const bool probe = kink_probe::enabled();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const bool pos = in[i] > 0.0;
    out[i] = pos ? in[i] : 0.0;
    if (probe) kink_probe::record_slow(pos);
  }
  return y;
}

FeatureMap relu_backward(const FeatureMap& y, const FeatureMap& dy) {
  if (!y.same_shape(dy)) throw InternalError("relu_backward: shape mismatch");
  FeatureMap dx(y.channels(), y.height(), y.width());
  auto out = y.data();
  auto g = dy.data();
  auto d = dx.data();
  for (std::size_t i = 0; i < out.size(); ++i) d[i] = out[i] > 0.0 ? g[i] : 0.0;
  return dx;
}

std::vector<Real> relu(std::span<const Real> x) {
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool pos = x[i] > 0.0;
    y[i] = pos ? x[i] : 0.0;
    kink_probe::record(pos);
  }
  return y;
}

std::vector<Real> relu_backward(std::span<const Real> y, std::span<const Real> dy) {
  std::vector<Real> dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

FeatureMap upsample_nearest2x(const FeatureMap& x) {
  FeatureMap y(x.channels(), x.height() * 2, x.width() * 2);
  for (int c = 0; c < x.channels(); ++c)
    for (int yy = 0; yy < y.height(); ++yy)
      for (int xx = 0; xx < y.width(); ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
  return y;
}

FeatureMap upsample_nearest2x_backward(const FeatureMap& dy, int height, int width) {
  if (dy.height() != 2 * height || dy.width() != 2 * width)
    throw InternalError("upsample_nearest2x_backward: shape mismatch");
  FeatureMap dx(dy.channels(), height, width);
  for (int c = 0; c < dy.channels(); ++c)
    for (int yy = 0; yy < dy.height(); ++yy)
      for (int xx = 0; xx < dy.width(); ++xx) dx.at(c, yy / 2, xx / 2) += dy.at(c, yy, xx);
  return dx;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_extent(b)) throw ConfigError("concat_channels: spatial extents differ");
  FeatureMap y(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.data().begin(), a.data().end(), y.data().begin());
  std::copy(b.data().begin(), b.data().end(), y.data().begin() + a.size());
  return y;
}

std::pair<FeatureMap, FeatureMap> split_channels(const FeatureMap& g, int first_channels) {
  FeatureMap a(first_channels, g.height(), g.width());
  FeatureMap b(g.channels() - first_channels, g.height(), g.width());
  std::copy(g.data().begin(), g.data().begin() + a.size(), a.data().begin());
  std::copy(g.data().begin() + a.size(), g.data().end(), b.data().begin());
  return {std::move(a), std::move(b)};
}

void add_inplace(FeatureMap& acc, const FeatureMap& x) {
  if (!acc.same_shape(x)) throw InternalError("add_inplace: shape mismatch");
  auto a = acc.data();
  auto b = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

namespace kink_probe {
namespace {
thread_local bool g_enabled = false;
thread_local std::uint64_t g_hash = 0;
}  // namespace

void enable(bool on) { g_enabled = on; }
bool enabled() { return g_enabled; }
void reset() { g_hash = 0x2545F4914F6CDD1Dull; }
std::uint64_t fingerprint() { return g_hash; }
void record_slow(bool branch) { g_hash = splitmix64(g_hash ^ (branch ? 0x9Dull : 0x3Bull)); }
}  // namespace kink_probe

}  // namespace sparsefuse
