#include "sparsefuse/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sparsefuse/rng.hpp"

namespace sparsefuse {

int DistanceBins::bin_of(Real gt) {
  if (!(gt >= edges[0]) || gt > edges[3]) return -1;
  if (gt < edges[1]) return 0;
  if (gt < edges[2]) return 1;
  return 2;
}

std::string DistanceBins::label(int bin) {
  switch (bin) {
    case 0: return "1-50";
    case 1: return "50-100";
    case 2: return "100-150";
    default: return kOverallLabel;
  }
}

std::optional<Real> absrel(std::span<const Real> pred, std::span<const Real> gt,
                           std::span<const std::size_t> pixels) {
  if (pixels.empty()) return std::nullopt;
  Real s = 0.0;
  for (std::size_t i : pixels) s += std::abs(pred[i] - gt[i]) / gt[i];
  return s / static_cast<Real>(pixels.size());
}

std::optional<Real> rmse(std::span<const Real> pred, std::span<const Real> gt,
                         std::span<const std::size_t> pixels) {
  if (pixels.empty()) return std::nullopt;
  Real s = 0.0;
  for (std::size_t i : pixels) s += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return std::sqrt(s / static_cast<Real>(pixels.size()));
}

std::optional<Real> delta1(std::span<const Real> pred, std::span<const Real> gt,
                           std::span<const std::size_t> pixels) {
  if (pixels.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t i : pixels) hits += std::max(pred[i] / gt[i], gt[i] / pred[i]) < 1.25;
  return static_cast<Real>(hits) / static_cast<Real>(pixels.size());
}

void MetricAccumulator::add(Real pred, Real gt) {
  const Real e = pred - gt;
  abs_rel_sum += std::abs(e) / gt;
  sq_err_sum += e * e;
  delta_hits += std::max(pred / gt, gt / pred) < 1.25;
  ++count;
}

void MetricAccumulator::merge(const MetricAccumulator& o) {
  abs_rel_sum += o.abs_rel_sum;
  sq_err_sum += o.sq_err_sum;
  delta_hits += o.delta_hits;
  count += o.count;
}

std::optional<Real> MetricAccumulator::absrel() const {
  if (count == 0) return std::nullopt;
  return abs_rel_sum / static_cast<Real>(count);
}

std::optional<Real> MetricAccumulator::rmse() const {
  if (count == 0) return std::nullopt;
  return std::sqrt(sq_err_sum / static_cast<Real>(count));
}

std::optional<Real> MetricAccumulator::delta1() const {
  if (count == 0) return std::nullopt;
  return static_cast<Real>(delta_hits) / static_cast<Real>(count);
}

const MetricRow* MetricTable::find(const std::string& range, const std::string& model) const {
  for (const auto& r : rows)
    if (r.range == range && r.model == model) return &r;
  return nullptr;
}

std::vector<std::string> MetricTable::models() const {
  std::vector<std::string> m;
  for (const auto& r : rows)
    if (std::find(m.begin(), m.end(), r.model) == m.end()) m.push_back(r.model);
  return m;
}

MetricTable combine(const std::vector<MetricTable>& tables) {
  MetricTable out;
  for (int b = 0; b <= DistanceBins::count; ++b) {
    const std::string label = DistanceBins::label(b);
    for (const auto& t : tables)
      for (const auto& r : t.rows)
        if (r.range == label) out.rows.push_back(r);
  }
  return out;
}

std::uint64_t eval_mask_seed(std::uint64_t base, std::uint64_t frame_seed, InjectionRatio ratio) {
  std::uint64_t bits;
  const Real v = ratio.value();
  std::memcpy(&bits, &v, sizeof bits);
  return derive_seed(base, {frame_seed, bits});
}

SparseDepth eval_injection(const Frame& f, InjectionRatio ratio, std::uint64_t base_seed) {
  const MaskMap mask = sample_mask(f.depth.height(), f.depth.width(), ratio,
                                   eval_mask_seed(base_seed, f.seed, ratio), f.validity);
  return sparsify(f.depth, mask);
}

namespace {

std::array<MetricAccumulator, DistanceBins::count> accumulate(const DepthMap& pred,
                                                              const Frame& f) {
  if (!pred.same_extent(f.depth)) throw ConfigError("prediction extent differs from ground truth");
  std::array<MetricAccumulator, DistanceBins::count> acc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!f.validity[i]) continue;
    const int b = DistanceBins::bin_of(f.depth[i]);
    if (b < 0) continue;
    acc[b].add(pred[i], f.depth[i]);
  }
  return acc;
}

MetricRow make_row(const std::string& range, const std::string& model,
                   const MetricAccumulator& a) {
  return {range, model, a.absrel(), a.rmse(), a.delta1(), a.count};
}

}  // namespace

MetricTable stratified_eval(const std::string& model_label, const Predictor& predictor,
                            const std::vector<Frame>& frames, InjectionRatio ratio,
                            std::uint64_t mask_seed) {
  std::array<MetricAccumulator, DistanceBins::count> bins;
  for (const Frame& f : frames) {
    const SparseDepth s = eval_injection(f, ratio, mask_seed);
    const auto acc = accumulate(predictor(f, s), f);
    for (int b = 0; b < DistanceBins::count; ++b) bins[b].merge(acc[b]);
  }
  MetricTable t;
  MetricAccumulator overall;
  for (int b = 0; b < DistanceBins::count; ++b) {
    t.rows.push_back(make_row(DistanceBins::label(b), model_label, bins[b]));
    overall.merge(bins[b]);
  }
  t.rows.push_back(make_row(kOverallLabel, model_label, overall));
  return t;
}

const AblationRow* AblationTable::find(Real ratio, const std::string& encoder) const {
  for (const auto& r : rows)
    if (r.ratio == ratio && r.encoder == encoder) return &r;
  return nullptr;
}

AblationTable ablation_sweep(const std::vector<std::pair<std::string, Predictor>>& encoders,
                             const std::vector<Frame>& frames, std::span<const Real> ratios,
                             std::uint64_t mask_seed) {
  AblationTable out;
  for (Real r : ratios) {
    const InjectionRatio ratio(r);
    for (const auto& [name, predictor] : encoders) {
      const MetricTable t = stratified_eval(name, predictor, frames, ratio, mask_seed);
      const MetricRow* overall = t.find(kOverallLabel, name);
      out.rows.push_back({r, name, overall->absrel, overall->rmse});
    }
  }
  return out;
}

std::string format_value(std::optional<Real> v) {
  if (!v) return "-";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, *v);
  return std::string(buf, res.ptr);
}

void write_stratified_csv(const MetricTable& t, std::ostream& os) {
  os << "range,model,absrel,rmse,delta1,pixel_count\n";
  for (const auto& r : t.rows)
    os << r.range << ',' << r.model << ',' << format_value(r.absrel) << ','
       << format_value(r.rmse) << ',' << format_value(r.delta1) << ',' << r.pixel_count << '\n';
}

void write_ablation_csv(const AblationTable& t, std::ostream& os) {
  os << "ratio,encoder,absrel,rmse\n";
  for (const auto& r : t.rows)
    os << format_value(r.ratio) << ',' << r.encoder << ',' << format_value(r.absrel) << ','
       << format_value(r.rmse) << '\n';
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<Real> parse_value(const std::string& s) {
  if (s == "-") return std::nullopt;
  Real v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("malformed numeric CSV cell '" + s + "'");
  return v;
}

}  // namespace

MetricTable read_stratified_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "range,model,absrel,rmse,delta1,pixel_count")
    throw DataError("stratified CSV: unexpected header");
  MetricTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) throw DataError("stratified CSV: expected 6 columns");
    t.rows.push_back({cells[0], cells[1], parse_value(cells[2]), parse_value(cells[3]),
                      parse_value(cells[4]), static_cast<std::size_t>(std::stoull(cells[5]))});
  }
  return t;
}

std::vector<CurvePoint> curve_points(const MetricTable& t) {
  std::vector<CurvePoint> pts;
  for (const std::string& model : t.models())
    for (int b = 0; b < DistanceBins::count; ++b) {
      const MetricRow* r = t.find(DistanceBins::label(b), model);
      if (!r) throw DataError("curve_export: table lacks row " + DistanceBins::label(b));
      pts.push_back({DistanceBins::midpoint(b), model, r->absrel});
    }
  return pts;
}

void curve_export(const MetricTable& t, const std::string& path) {
  const auto pts = curve_points(t);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << "bin_midpoint,model,absrel\n";
  for (const auto& p : pts)
    os << format_value(p.bin_midpoint) << ',' << p.model << ',' << format_value(p.absrel) << '\n';
  if (!os) throw DataError("write failed for '" + path + "'");
}

std::vector<CurvePoint> read_curve_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != "bin_midpoint,model,absrel")
    throw DataError("curve CSV: unexpected header");
  std::vector<CurvePoint> pts;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) throw DataError("curve CSV: expected 3 columns");
    pts.push_back({*parse_value(cells[0]), cells[1], parse_value(cells[2])});
  }
  return pts;
}

}  // namespace sparsefuse
