#pragma once

// Procedural driving-like scenes: a ground plane and axis-aligned boxes
// ray-cast through a pinhole camera. Camera frame: x right, y down, z forward;
// the ground is the plane y = camera_height.

#include <array>
#include <cstdint>
#include <vector>

#include "sparsefuse/tensor.hpp"

namespace sparsefuse {

struct Intrinsics {
  Real fx = 0;
  Real fy = 0;
  Real cx = 0;
  Real cy = 0;

  /// Default camera for an h x w frame: fx = fy = 0.9 w, centered principal point.
  static Intrinsics for_extent(int height, int width);
  void validate(int height, int width) const;
};

struct Box {
  Real center_z = 0;    ///< distance of the box center along the optical axis (m)
  Real center_x = 0;    ///< lateral offset (m)
  Real width = 1;       ///< extent along x
  Real height = 1;      ///< extent along -y, resting on the ground
  Real length = 1;      ///< extent along z
  std::array<Real, 3> color{0.5, 0.5, 0.5};
};

struct SceneSpec {
  std::uint64_t seed = 0;
  Real camera_height = 1.5;
  std::vector<Box> boxes;
};

/// Rendered depth beyond this is treated as sky (invalid).
inline constexpr Real kMaxRenderDepth = 160.0;

struct Frame {
  FeatureMap rgb;   ///< 3 x H x W, values in [0, 1]
  DepthMap depth;   ///< meters; 0 where invalid
  MaskMap validity;
  Intrinsics intrinsics;
  std::uint64_t seed = 0;
};

/// Ray-casts `spec`. Requires extents divisible by 16; throws
/// PreconditionError if no pixel hits geometry.
Frame render(const SceneSpec& spec, const Intrinsics& intrinsics, int height, int width);

/// Per-pixel camera-frame 3D points: z * ((u - cx)/fx, (v - cy)/fy, 1).
using PointMap = std::vector<std::array<Real, 3>>;
PointMap backproject(const DepthMap& depth, const Intrinsics& intrinsics);

/// Random scene drawn from `seed`: near cars, mid-range boxes, far buildings
/// and small long-range targets.
SceneSpec random_scene(std::uint64_t seed);

/// Fraction of valid pixels falling in each evaluation bin.
std::array<Real, 3> bin_coverage(const Frame& f);
bool has_bin_coverage(const Frame& f, Real min_fraction = 0.01);

/// Renders scenes from seeds derived from `seed`, skipping any that miss the
/// per-bin coverage requirement. Returns the accepted scene seeds.
std::vector<std::uint64_t> scene_seeds(std::uint64_t seed, std::size_t count, int height,
                                       int width, std::uint64_t stream);

struct SceneSplit {
  std::vector<std::uint64_t> train;
  std::vector<std::uint64_t> eval;
};

/// Disjoint train/eval seed lists; every scene satisfies the bin coverage rule.
SceneSplit make_split(std::size_t n_train, std::size_t n_eval, std::uint64_t seed, int height,
                      int width);

Frame render_seed(std::uint64_t scene_seed, int height, int width);

}  // namespace sparsefuse
