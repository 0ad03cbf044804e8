#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sparsefuse/errors.hpp"

namespace sparsefuse {

using Real = double;

/// Dense channels x height x width activation, row-major (c, y, x).
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, Real fill = 0.0)
      : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0)
      throw ConfigError("FeatureMap extents must be positive");
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  Real at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<Real> data() & { return data_; }
  std::span<const Real> data() const& { return data_; }
  // Temporaries hand over their storage so range-for over them stays valid.
  std::vector<Real> data() && { return std::move(data_); }

  std::span<Real> channel(int c) { return {data_.data() + c * plane(), plane()}; }
  std::span<const Real> channel(int c) const { return {data_.data() + c * plane(), plane()}; }

  bool same_shape(const FeatureMap& o) const {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }
  bool same_extent(const FeatureMap& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<Real> data_;
};

/// Single-channel row-major raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{}) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) throw ConfigError("Grid extents must be positive");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() & { return data_; }
  std::span<const T> data() const& { return data_; }
  std::vector<T> data() && { return std::move(data_); }

  bool same_extent(const Grid& o) const { return height_ == o.height_ && width_ == o.width_; }
  template <typename U>
  bool same_extent(const Grid<U>& o) const {
    return height_ == o.height() && width_ == o.width();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Metric depth in meters; 0 marks "no value" wherever a mask travels alongside.
using DepthMap = Grid<Real>;
/// Binary validity raster (0 or 1 per pixel).
using MaskMap = Grid<std::uint8_t>;
/// Nonnegative per-pixel loss weights.
using PixelWeightMap = Grid<Real>;

inline std::size_t valid_count(const MaskMap& m) {
  std::size_t n = 0;
  for (auto b : m.data()) n += b;
  return n;
}

}  // namespace sparsefuse
