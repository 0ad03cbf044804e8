#include "sparsefuse/formats.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sparsefuse {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    bytes(b, sizeof(T));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::string what) : in_(in), what_(std::move(what)) {}
  void bytes(void* p, std::size_t n) {
    if (n > in_.size() - pos_) throw DataError(what_ + ": truncated");
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    std::uint8_t b[sizeof(T)];
    bytes(b, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::string what_;
  std::size_t pos_ = 0;
};

constexpr char kRasterMagic[4] = {'S', 'L', 'R', '1'};
constexpr char kCheckpointMagic[4] = {'S', 'F', 'C', 'K'};

}  // namespace

std::size_t Raster::element_size() const {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  throw DataError("raster: unknown dtype");
}

std::vector<std::uint8_t> encode_raster(const Raster& r) {
  const std::size_t n = static_cast<std::size_t>(r.channels) * r.height * r.width;
  if (r.values.size() != n) throw InternalError("raster: payload size does not match the shape");
  Writer w;
  w.bytes(kRasterMagic, 4);
  w.le(static_cast<std::uint8_t>(r.dtype));
  w.le(r.channels);
  w.le(r.height);
  w.le(r.width);
  for (Real v : r.values) {
    switch (r.dtype) {
      case DType::f32: w.le(static_cast<float>(v)); break;
      case DType::f64: w.le(v); break;
      case DType::u8:
        if (!(v >= 0 && v <= 255 && v == static_cast<Real>(static_cast<std::uint8_t>(v))))
          throw ConfigError("raster: u8 payload value out of range");
        w.le(static_cast<std::uint8_t>(v));
        break;
    }
  }
  return std::move(w.out);
}

Raster decode_raster(const std::vector<std::uint8_t>& bytes) {
  Reader rd(bytes, "raster");
  char magic[4];
  rd.bytes(magic, 4);
  if (std::memcmp(magic, kRasterMagic, 4) != 0) throw DataError("raster: bad magic");
  Raster r;
  const auto code = rd.le<std::uint8_t>();
  if (code > 2) throw DataError("raster: unknown dtype code " + std::to_string(code));
  r.dtype = static_cast<DType>(code);
  r.channels = rd.le<std::uint32_t>();
  r.height = rd.le<std::uint32_t>();
  r.width = rd.le<std::uint32_t>();
  const std::size_t n = static_cast<std::size_t>(r.channels) * r.height * r.width;
  if (rd.remaining() != n * r.element_size())
    throw DataError("raster: payload length " + std::to_string(rd.remaining()) +
                    " does not match header (" + std::to_string(n * r.element_size()) + ")");
  r.values.resize(n);
  for (auto& v : r.values) {
    switch (r.dtype) {
      case DType::f32: v = rd.le<float>(); break;
      case DType::f64: v = rd.le<double>(); break;
      case DType::u8: v = rd.le<std::uint8_t>(); break;
    }
  }
  return r;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write failed for '" + path + "'");
}

void write_raster(const std::string& path, const Raster& r) { write_file(path, encode_raster(r)); }
Raster read_raster(const std::string& path) { return decode_raster(read_file(path)); }

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

Raster to_raster(const FeatureMap& m, DType dtype) {
  if (dtype == DType::u8) throw ConfigError("feature maps are stored as f32 or f64");
  Raster r{dtype, static_cast<std::uint32_t>(m.channels()), static_cast<std::uint32_t>(m.height()),
           static_cast<std::uint32_t>(m.width()), {m.data().begin(), m.data().end()}};
  return r;
}

Raster to_raster(const DepthMap& m, DType dtype) {
  if (dtype == DType::u8) throw ConfigError("depth maps are stored as f32 or f64");
  return {dtype, 1, static_cast<std::uint32_t>(m.height()), static_cast<std::uint32_t>(m.width()),
          {m.data().begin(), m.data().end()}};
}

Raster to_raster(const MaskMap& m) {
  Raster r{DType::u8, 1, static_cast<std::uint32_t>(m.height()),
           static_cast<std::uint32_t>(m.width()), {}};
  r.values.assign(m.data().begin(), m.data().end());
  return r;
}

FeatureMap feature_map_from(const Raster& r) {
  if (r.dtype == DType::u8) throw DataError("expected a real-valued raster");
  FeatureMap m(static_cast<int>(r.channels), static_cast<int>(r.height), static_cast<int>(r.width));
  std::copy(r.values.begin(), r.values.end(), m.data().begin());
  return m;
}

DepthMap depth_map_from(const Raster& r) {
  if (r.dtype == DType::u8 || r.channels != 1) throw DataError("expected a 1-channel real raster");
  DepthMap m(static_cast<int>(r.height), static_cast<int>(r.width));
  std::copy(r.values.begin(), r.values.end(), m.data().begin());
  return m;
}

MaskMap mask_map_from(const Raster& r) {
  if (r.dtype != DType::u8 || r.channels != 1) throw DataError("expected a 1-channel u8 raster");
  MaskMap m(static_cast<int>(r.height), static_cast<int>(r.width));
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    if (r.values[i] > 1) throw DataError("mask raster holds a value other than 0/1");
    m[i] = static_cast<std::uint8_t>(r.values[i]);
  }
  return m;
}

void save_checkpoint(const std::string& path, const RunConfig& config, DepthModel& model) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.le(kCheckpointVersion);
  const std::string text = config.snapshot();
  w.le(static_cast<std::uint64_t>(text.size()));
  w.bytes(text.data(), text.size());
  ParamSet set = model.parameters();
  w.le(static_cast<std::uint32_t>(set.params.size() + set.buffers.size()));
  auto entry = [&w](std::uint8_t kind, const std::string& name, std::span<const Real> v) {
    w.le(kind);
    w.le(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le(static_cast<std::uint64_t>(v.size()));
    for (Real x : v) w.le(x);
  };
  for (const auto& p : set.params) entry(0, p.name, p.value);
  for (const auto& b : set.buffers) entry(1, b.name, b.value);
  write_file(path, w.out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  Reader rd(bytes, "checkpoint '" + path + "'");
  char magic[4];
  rd.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  const auto version = rd.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto text_len = rd.le<std::uint64_t>();
  if (text_len > rd.remaining()) throw DataError("checkpoint: truncated config");
  std::string text(text_len, '\0');
  rd.bytes(text.data(), text_len);
  Checkpoint ck;
  try {
    ck.config = RunConfig::parse_string(text);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: embedded config rejected: ") + e.what());
  }
  ck.fusion_enabled = !ck.config.train.monocular;
  ck.model = DepthModel(ck.config.model, ck.config.model_seed);
  ck.model.set_fusion_enabled(ck.fusion_enabled);
  ParamSet set = ck.model.parameters();
  const auto count = rd.le<std::uint32_t>();
  if (count != set.params.size() + set.buffers.size())
    throw DataError("checkpoint: entry count does not match the model");
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto kind = rd.le<std::uint8_t>();
    const auto name_len = rd.le<std::uint32_t>();
    if (name_len > rd.remaining()) throw DataError("checkpoint: truncated name");
    std::string name(name_len, '\0');
    rd.bytes(name.data(), name_len);
    const auto n = rd.le<std::uint64_t>();
    std::span<Real> dst;
    const std::string* expected = nullptr;
    if (kind == 0 && e < set.params.size()) {
      dst = set.params[e].value;
      expected = &set.params[e].name;
    } else if (kind == 1 && e >= set.params.size()) {
      dst = set.buffers[e - set.params.size()].value;
      expected = &set.buffers[e - set.params.size()].name;
    } else {
      throw DataError("checkpoint: entry '" + name + "' has an unexpected kind");
    }
    if (name != *expected) throw DataError("checkpoint: expected '" + *expected + "', found '" + name + "'");
    if (n != dst.size())
      throw DataError("checkpoint: '" + name + "' holds " + std::to_string(n) + " values, model expects " +
                      std::to_string(dst.size()));
    for (auto& v : dst) v = rd.le<double>();
  }
  if (rd.remaining() != 0) throw DataError("checkpoint: trailing bytes");
  return ck;
}

std::string scene_file(const std::string& dir, std::size_t index, const std::string& kind) {
  std::ostringstream os;
  os << "scene_" << std::setw(3) << std::setfill('0') << index << '.' << kind << ".slr";
  return (std::filesystem::path(dir) / os.str()).string();
}

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string real_text(Real v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void write_scene_dir(const std::string& dir, const std::vector<Frame>& frames, std::uint64_t seed) {
  if (frames.empty()) throw ConfigError("write_scene_dir: no frames");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory '" + dir + "': " + ec.message());
  std::ostringstream man;
  man << "sparsefuse-scenes 1\n"
      << "height " << frames[0].depth.height() << '\n'
      << "width " << frames[0].depth.width() << '\n'
      << "seed " << seed << '\n'
      << "count " << frames.size() << '\n';
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    const auto rgb = encode_raster(to_raster(f.rgb, DType::f64));
    const auto depth = encode_raster(to_raster(f.depth, DType::f64));
    const auto valid = encode_raster(to_raster(f.validity));
    write_file(scene_file(dir, i, "rgb"), rgb);
    write_file(scene_file(dir, i, "depth"), depth);
    write_file(scene_file(dir, i, "valid"), valid);
    man << "scene " << i << ' ' << f.seed << ' ' << real_text(f.intrinsics.fx) << ' '
        << real_text(f.intrinsics.fy) << ' ' << real_text(f.intrinsics.cx) << ' '
        << real_text(f.intrinsics.cy) << ' ' << hex(fnv1a64(rgb)) << ' ' << hex(fnv1a64(depth))
        << ' ' << hex(fnv1a64(valid)) << '\n';
  }
  const std::string text = man.str();
  write_file((std::filesystem::path(dir) / "manifest.txt").string(),
             std::vector<std::uint8_t>(text.begin(), text.end()));
}

SceneManifest read_manifest(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.txt").string();
  std::ifstream is(path);
  if (!is) throw DataError("missing scene manifest '" + path + "'");
  SceneManifest m;
  std::string tag;
  int version = 0;
  std::size_t count = 0;
  if (!(is >> tag >> version) || tag != "sparsefuse-scenes" || version != 1)
    throw DataError("scene manifest: bad header");
  std::string k1, k2, k3, k4;
  if (!(is >> k1 >> m.height >> k2 >> m.width >> k3 >> m.seed >> k4 >> count) || k1 != "height" ||
      k2 != "width" || k3 != "seed" || k4 != "count")
    throw DataError("scene manifest: malformed preamble");
  for (std::size_t i = 0; i < count; ++i) {
    SceneEntry e;
    std::size_t index = 0;
    std::string h1, h2, h3;
    if (!(is >> tag >> index >> e.seed >> e.intrinsics.fx >> e.intrinsics.fy >> e.intrinsics.cx >>
          e.intrinsics.cy >> h1 >> h2 >> h3) ||
        tag != "scene" || index != i)
      throw DataError("scene manifest: malformed entry " + std::to_string(i));
    e.rgb_digest = std::stoull(h1, nullptr, 16);
    e.depth_digest = std::stoull(h2, nullptr, 16);
    e.valid_digest = std::stoull(h3, nullptr, 16);
    m.scenes.push_back(e);
  }
  return m;
}

std::vector<Frame> read_scene_dir(const std::string& dir) {
  const SceneManifest m = read_manifest(dir);
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < m.scenes.size(); ++i) {
    const SceneEntry& e = m.scenes[i];
    auto load = [&](const std::string& kind, std::uint64_t digest) {
      const auto bytes = read_file(scene_file(dir, i, kind));
      if (fnv1a64(bytes) != digest)
        throw DataError("scene " + std::to_string(i) + " " + kind + " raster digest mismatch");
      return decode_raster(bytes);
    };
    Frame f{feature_map_from(load("rgb", e.rgb_digest)), depth_map_from(load("depth", e.depth_digest)),
            mask_map_from(load("valid", e.valid_digest)), e.intrinsics, e.seed};
    if (f.rgb.channels() != 3 || f.rgb.height() != m.height || f.rgb.width() != m.width ||
        f.depth.height() != m.height || f.depth.width() != m.width ||
        !f.depth.same_extent(f.validity))
      throw DataError("scene " + std::to_string(i) + " raster shapes disagree with the manifest");
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace sparsefuse
