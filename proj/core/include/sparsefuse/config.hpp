#pragma once

// Human-readable run configuration: `key = value` lines, '#' comments.
// Every key has a default; unknown keys are rejected.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparsefuse/losses.hpp"
#include "sparsefuse/model.hpp"
#include "sparsefuse/trainer.hpp"

namespace sparsefuse {

struct SceneConfig {
  int height = 64;
  int width = 128;
  std::size_t train_scenes = 64;
  std::size_t eval_scenes = 16;
  std::uint64_t seed = 7;

  void validate() const;
};

struct EvalConfig {
  Real ratio = 0.005;
  std::uint64_t mask_seed = 11;
};

struct RunConfig {
  SceneConfig scenes;
  ModelConfig model;
  std::uint64_t model_seed = 3;
  LossWeights loss;
  TrainConfig train;
  EvalConfig eval;

  /// Applies one `key = value` assignment; throws ConfigError on an unknown
  /// key or malformed value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  static RunConfig parse(std::istream& is);
  static RunConfig parse_string(const std::string& text);
  static RunConfig load(const std::string& path);

  /// Every key with its resolved value, in a stable order. parse(snapshot())
  /// reproduces the configuration exactly.
  std::string snapshot() const;
  void validate() const;
};

}  // namespace sparsefuse
