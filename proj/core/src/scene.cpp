#include "sparsefuse/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "sparsefuse/rng.hpp"

namespace sparsefuse {

Intrinsics Intrinsics::for_extent(int height, int width) {
  const Real f = 0.9 * width;
  return {f, f, (width - 1) / 2.0, (height - 1) / 2.0};
}

void Intrinsics::validate(int height, int width) const {
  if (!(fx > 0 && fy > 0)) throw ConfigError("focal lengths must be positive");
  if (!(cx >= 0 && cx <= width - 1 && cy >= 0 && cy <= height - 1))
    throw ConfigError("principal point lies outside the image");
}

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

enum class Face { none, x_side, top, front };

struct Hit {
  Real t = kInf;
  Face face = Face::none;
  const Box* box = nullptr;
};

// Slab test for a ray from the origin. Returns the entry distance and the
// axis that produced it.
bool intersect_box(const Box& b, Real camera_height, Real dx, Real dy, Hit& best) {
  const Real lo[3] = {b.center_x - b.width / 2, camera_height - b.height, b.center_z - b.length / 2};
  const Real hi[3] = {b.center_x + b.width / 2, camera_height, b.center_z + b.length / 2};
  const Real dir[3] = {dx, dy, 1.0};
  Real t_near = -kInf;
  Real t_far = kInf;
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (0.0 < lo[a] || 0.0 > hi[a]) return false;
      continue;
    }
    Real t1 = lo[a] / dir[a];
    Real t2 = hi[a] / dir[a];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      axis = a;
    }
    t_far = std::min(t_far, t2);
  }
  if (t_near > t_far || t_near <= 0.0 || t_near >= best.t) return false;
  best.t = t_near;
  best.face = axis == 0 ? Face::x_side : axis == 1 ? Face::top : Face::front;
  best.box = &b;
  return true;
}

Real clamp01(Real v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Frame render(const SceneSpec& spec, const Intrinsics& intr, int height, int width) {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
    throw ConfigError("render: extents must be positive multiples of 16");
  intr.validate(height, width);
  if (!(spec.camera_height > 0)) throw ConfigError("render: camera height must be positive");
  Frame f{FeatureMap(3, height, width), DepthMap(height, width, 0.0), MaskMap(height, width, 0),
          intr, spec.seed};
  std::size_t hits = 0;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Real dx = (u - intr.cx) / intr.fx;
      const Real dy = (v - intr.cy) / intr.fy;
      Hit best;
      bool ground = false;
      if (v > intr.cy) {
        best.t = intr.fy * spec.camera_height / (v - intr.cy);
        ground = true;
      }
      for (const Box& b : spec.boxes)
        if (intersect_box(b, spec.camera_height, dx, dy, best)) ground = false;

      std::array<Real, 3> color;
      if (best.t <= kMaxRenderDepth) {
        f.depth.at(v, u) = best.t;
        f.validity.at(v, u) = 1;
        ++hits;
        if (ground) {
          const Real gx = best.t * dx;
          const Real gz = best.t;
          const bool checker = (static_cast<long>(std::floor(gx / 4.0)) +
                                static_cast<long>(std::floor(gz / 4.0))) % 2 == 0;
          const Real g = 0.35 + (checker ? 0.06 : -0.06);
          color = {g, g, g * 1.05};
        } else {
          const Box& b = *best.box;
          const Real shade = best.face == Face::front ? 1.0 : best.face == Face::top ? 0.9 : 0.72;
          // Horizontal banding every 3 m of height (windows, panels).
          const Real y_world = spec.camera_height - best.t * dy;
          const Real band = (static_cast<long>(std::floor(y_world / 3.0)) % 2 == 0) ? 1.0 : 0.88;
          for (int c = 0; c < 3; ++c) color[c] = b.color[c] * shade * band;
        }
      } else {
        const Real t = static_cast<Real>(v) / height;
        color = {0.55 + 0.2 * t, 0.7 + 0.15 * t, 0.92};
      }
      for (int c = 0; c < 3; ++c) f.rgb.at(c, v, u) = clamp01(color[c]);
    }
  }
  if (hits == 0) throw PreconditionError("render: no geometry hit anywhere in the frame");
  return f;
}

PointMap backproject(const DepthMap& depth, const Intrinsics& intr) {
  PointMap pts(depth.size());
  for (int v = 0; v < depth.height(); ++v)
    for (int u = 0; u < depth.width(); ++u) {
      const Real z = depth.at(v, u);
      pts[static_cast<std::size_t>(v) * depth.width() + u] = {z * (u - intr.cx) / intr.fx,
                                                              z * (v - intr.cy) / intr.fy, z};
    }
  return pts;
}

SceneSpec random_scene(std::uint64_t seed) {
  Rng rng(seed);
  SceneSpec s;
  s.seed = seed;
  s.camera_height = rng.uniform(1.3, 1.9);
  auto color = [&rng] {
    return std::array<Real, 3>{rng.uniform(0.15, 0.95), rng.uniform(0.15, 0.95),
                               rng.uniform(0.15, 0.95)};
  };
  auto add = [&](Real front_lo, Real front_hi, Real w_lo, Real w_hi, Real h_lo, Real h_hi,
                 Real length, Real x_span) {
    Box b;
    const Real front = rng.uniform(front_lo, front_hi);
    b.length = length;
    b.center_z = front + length / 2;
    b.width = rng.uniform(w_lo, w_hi);
    b.height = rng.uniform(h_lo, h_hi);
    b.center_x = rng.uniform(-x_span, x_span);
    b.color = color();
    s.boxes.push_back(b);
  };
  const int buildings = 2 + static_cast<int>(rng.below(2));
  for (int i = 0; i < buildings; ++i) add(100.0, 140.0, 20.0, 60.0, 10.0, 30.0, 8.0, 70.0);
  const int targets = 1 + static_cast<int>(rng.below(3));
  for (int i = 0; i < targets; ++i) add(100.0, 145.0, 1.6, 2.4, 1.4, 2.0, 4.0, 15.0);
  const int mid = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < mid; ++i) add(50.0, 95.0, 4.0, 12.0, 3.0, 10.0, 6.0, 30.0);
  const int cars = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < cars; ++i) add(8.0, 45.0, 1.6, 2.2, 1.4, 2.0, 4.5, 8.0);
  return s;
}

std::array<Real, 3> bin_coverage(const Frame& f) {
  std::array<std::size_t, 3> counts{};
  std::size_t valid = 0;
  for (std::size_t i = 0; i < f.depth.size(); ++i) {
    if (!f.validity[i]) continue;
    ++valid;
    const Real z = f.depth[i];
    if (z >= 1.0 && z < 50.0) ++counts[0];
    else if (z >= 50.0 && z < 100.0) ++counts[1];
    else if (z >= 100.0 && z <= 150.0) ++counts[2];
  }
  std::array<Real, 3> frac{};
  for (int b = 0; b < 3; ++b)
    frac[b] = valid ? static_cast<Real>(counts[b]) / static_cast<Real>(valid) : 0.0;
  return frac;
}

bool has_bin_coverage(const Frame& f, Real min_fraction) {
  for (Real c : bin_coverage(f))
    if (c < min_fraction) return false;
  return true;
}

Frame render_seed(std::uint64_t scene_seed, int height, int width) {
  return render(random_scene(scene_seed), Intrinsics::for_extent(height, width), height, width);
}

std::vector<std::uint64_t> scene_seeds(std::uint64_t seed, std::size_t count, int height,
                                       int width, std::uint64_t stream) {
  std::vector<std::uint64_t> out;
  const std::size_t max_attempts = 100 * count + 100;
  for (std::uint64_t k = 0; out.size() < count; ++k) {
    if (k >= max_attempts)
      throw DegenerateInputError("could not generate scenes with coverage in every distance bin");
    const std::uint64_t s = derive_seed(seed, {stream, k});
    if (has_bin_coverage(render_seed(s, height, width))) out.push_back(s);
  }
  return out;
}

SceneSplit make_split(std::size_t n_train, std::size_t n_eval, std::uint64_t seed, int height,
                      int width) {
  if (n_train < 1 || n_eval < 1) throw ConfigError("make_split: counts must be at least 1");
  SceneSplit split;
  split.train = scene_seeds(seed, n_train, height, width, 1);
  const std::set<std::uint64_t> seen(split.train.begin(), split.train.end());
  for (std::uint64_t k = 0; split.eval.size() < n_eval; ++k) {
    const std::uint64_t s = derive_seed(seed, {2, k});
    if (seen.count(s)) continue;
    if (k > 100 * n_eval + 100)
      throw DegenerateInputError("could not generate evaluation scenes with bin coverage");
    if (has_bin_coverage(render_seed(s, height, width))) split.eval.push_back(s);
  }
  return split;
}

}  // namespace sparsefuse
