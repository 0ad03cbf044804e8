#pragma once

// On-disk formats. All multi-byte fields are little-endian.
//
// Raster:      "SLR1" | dtype u8 (0 f32, 1 f64, 2 u8) | channels u32 | height u32
//              | width u32 | row-major payload (channel-major for c > 1)
// Checkpoint:  "SFCK" | version u32 | config length u64 | config text
//              | entry count u32 | entries: kind u8 (0 param, 1 buffer)
//              | name length u32 | name | value count u64 | f64 values

#include <cstdint>
#include <string>
#include <vector>

#include "sparsefuse/config.hpp"
#include "sparsefuse/model.hpp"
#include "sparsefuse/scene.hpp"

namespace sparsefuse {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

inline constexpr std::size_t kRasterHeaderBytes = 17;

struct Raster {
  DType dtype = DType::f64;
  std::uint32_t channels = 1;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  /// Values widened to f64 (exact for every dtype).
  std::vector<Real> values;

  std::size_t element_size() const;
};

std::vector<std::uint8_t> encode_raster(const Raster& r);
Raster decode_raster(const std::vector<std::uint8_t>& bytes);
void write_raster(const std::string& path, const Raster& r);
Raster read_raster(const std::string& path);

Raster to_raster(const FeatureMap& m, DType dtype);
Raster to_raster(const DepthMap& m, DType dtype);
Raster to_raster(const MaskMap& m);
FeatureMap feature_map_from(const Raster& r);
DepthMap depth_map_from(const Raster& r);
MaskMap mask_map_from(const Raster& r);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
/// FNV-1a 64-bit digest, used by scene manifests.
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  bool fusion_enabled = true;
  DepthModel model;
};

/// Serializes every parameter and buffer of `model` with `config` embedded.
void save_checkpoint(const std::string& path, const RunConfig& config, DepthModel& model);
/// Rebuilds the model from the embedded config and loads every array;
/// throws DataError on any name, size, or version mismatch.
Checkpoint load_checkpoint(const std::string& path);

/// A directory of rendered frames: scene_NNN.{rgb,depth,valid}.slr plus
/// manifest.txt listing seeds, intrinsics and file digests.
struct SceneEntry {
  std::uint64_t seed = 0;
  Intrinsics intrinsics;
  std::uint64_t rgb_digest = 0;
  std::uint64_t depth_digest = 0;
  std::uint64_t valid_digest = 0;
};

struct SceneManifest {
  int height = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::vector<SceneEntry> scenes;
};

std::string scene_file(const std::string& dir, std::size_t index, const std::string& kind);
void write_scene_dir(const std::string& dir, const std::vector<Frame>& frames, std::uint64_t seed);
SceneManifest read_manifest(const std::string& dir);
/// Loads frames from rasters (no re-rendering), verifying digests.
std::vector<Frame> read_scene_dir(const std::string& dir);

}  // namespace sparsefuse
