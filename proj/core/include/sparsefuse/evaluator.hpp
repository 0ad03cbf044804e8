#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsefuse/scene.hpp"
#include "sparsefuse/sparsifier.hpp"

namespace sparsefuse {

/// [1, 50), [50, 100), [100, 150]. Depths outside [1, 150] belong to no bin
/// and are excluded from every row, Overall included.
struct DistanceBins {
  static constexpr std::array<Real, 4> edges{1.0, 50.0, 100.0, 150.0};
  static constexpr int count = 3;

  /// Bin index of a ground-truth depth, or -1 when excluded.
  static int bin_of(Real gt);
  static std::string label(int bin);
  static Real midpoint(int bin) { return 0.5 * (edges[bin] + edges[bin + 1]); }
};

inline const std::string kOverallLabel = "overall";

// Metric kernels over an explicit pixel index set. An empty set has no value.
std::optional<Real> absrel(std::span<const Real> pred, std::span<const Real> gt,
                           std::span<const std::size_t> pixels);
std::optional<Real> rmse(std::span<const Real> pred, std::span<const Real> gt,
                         std::span<const std::size_t> pixels);
/// Fraction with max(pred/gt, gt/pred) < 1.25 (strict).
std::optional<Real> delta1(std::span<const Real> pred, std::span<const Real> gt,
                           std::span<const std::size_t> pixels);

/// Pixel-pooled running sums; merging accumulators equals pooling their pixels.
struct MetricAccumulator {
  Real abs_rel_sum = 0;
  Real sq_err_sum = 0;
  std::size_t delta_hits = 0;
  std::size_t count = 0;

  void add(Real pred, Real gt);
  void merge(const MetricAccumulator& o);
  std::optional<Real> absrel() const;
  std::optional<Real> rmse() const;
  std::optional<Real> delta1() const;
};

struct MetricRow {
  std::string range;
  std::string model;
  std::optional<Real> absrel;
  std::optional<Real> rmse;
  std::optional<Real> delta1;
  std::size_t pixel_count = 0;
};

struct MetricTable {
  std::vector<MetricRow> rows;

  const MetricRow* find(const std::string& range, const std::string& model) const;
  std::vector<std::string> models() const;
};

/// Per-range tables for several models merged into range-major row order.
MetricTable combine(const std::vector<MetricTable>& tables);

/// Predicts metric depth for a frame given its sparse injection.
using Predictor = std::function<DepthMap(const Frame&, const SparseDepth&)>;

/// Mask seed used for `frame_seed` at `ratio`; identical for every model so
/// evaluations are paired.
std::uint64_t eval_mask_seed(std::uint64_t base, std::uint64_t frame_seed, InjectionRatio ratio);

/// Sparse injection for one evaluation frame.
SparseDepth eval_injection(const Frame& f, InjectionRatio ratio, std::uint64_t base_seed);

/// Pixels pooled across frames per bin, plus Overall. Frames are reduced in order.
MetricTable stratified_eval(const std::string& model_label, const Predictor& predictor,
                            const std::vector<Frame>& frames, InjectionRatio ratio,
                            std::uint64_t mask_seed);

inline constexpr std::array<Real, 6> kAblationRatios{0.005, 0.008, 0.010, 0.015, 0.020, 0.030};

struct AblationRow {
  Real ratio = 0;
  std::string encoder;
  std::optional<Real> absrel;
  std::optional<Real> rmse;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  const AblationRow* find(Real ratio, const std::string& encoder) const;
};

/// Overall AbsRel/RMSE per ratio for each named predictor, on identical masks.
AblationTable ablation_sweep(const std::vector<std::pair<std::string, Predictor>>& encoders,
                             const std::vector<Frame>& frames, std::span<const Real> ratios,
                             std::uint64_t mask_seed);

/// Shortest round-trip decimal form; "-" for an absent value.
std::string format_value(std::optional<Real> v);

void write_stratified_csv(const MetricTable& t, std::ostream& os);
void write_ablation_csv(const AblationTable& t, std::ostream& os);
MetricTable read_stratified_csv(std::istream& is);

struct CurvePoint {
  Real bin_midpoint = 0;
  std::string model;
  std::optional<Real> absrel;
};

/// (bin midpoint, model, AbsRel) rows for every model in `t`.
std::vector<CurvePoint> curve_points(const MetricTable& t);
void curve_export(const MetricTable& t, const std::string& path);
std::vector<CurvePoint> read_curve_csv(const std::string& path);

}  // namespace sparsefuse
