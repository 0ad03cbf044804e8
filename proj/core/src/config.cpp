#include "sparsefuse/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "sparsefuse/evaluator.hpp"

namespace sparsefuse {

void SceneConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
    throw ConfigError("scenes: height and width must be positive multiples of 16");
  if (train_scenes < 1 || eval_scenes < 1) throw ConfigError("scenes: counts must be at least 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config: malformed value '" + v + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: expected true/false for key '" + key + "', got '" + v + "'");
}

std::string fmt(Real v) { return format_value(v); }
template <typename T>
std::string fmt_int(T v) { return std::to_string(v); }

struct Knob {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define REAL_KNOB(field) \
  Knob{[](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_number<Real>(k, v); }, \
       [](const RunConfig& c) { return fmt(c.field); }}
#define INT_KNOB(field, type) \
  Knob{[](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_number<type>(k, v); }, \
       [](const RunConfig& c) { return fmt_int(c.field); }}
#define BOOL_KNOB(field) \
  Knob{[](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }, \
       [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}

const std::vector<std::pair<std::string, Knob>>& knob_table() {
  static const std::vector<std::pair<std::string, Knob>> table = {
      {"scenes.height", INT_KNOB(scenes.height, int)},
      {"scenes.width", INT_KNOB(scenes.width, int)},
      {"scenes.train", INT_KNOB(scenes.train_scenes, std::size_t)},
      {"scenes.eval", INT_KNOB(scenes.eval_scenes, std::size_t)},
      {"scenes.seed", INT_KNOB(scenes.seed, std::uint64_t)},
      {"model.seed", INT_KNOB(model_seed, std::uint64_t)},
      {"model.width_multiplier", REAL_KNOB(model.backbone.width_multiplier)},
      {"model.sparse_width_multiplier", REAL_KNOB(model.sparse_width_multiplier)},
      {"model.encoder",
       Knob{[](RunConfig& c, const std::string&, const std::string& v) {
              c.model.encoder = encoder_kind_from_string(v);
            },
            [](const RunConfig& c) { return to_string(c.model.encoder); }}},
      {"model.encoder_kernel", INT_KNOB(model.encoder_kernel, int)},
      {"model.fill_radius", INT_KNOB(model.fill_radius, int)},
      {"model.se_reduction", INT_KNOB(model.se_reduction, int)},
      {"model.bn_gamma_init", REAL_KNOB(model.bn_gamma_init)},
      {"model.bn_momentum", REAL_KNOB(model.bn_momentum)},
      {"model.bn_epsilon", REAL_KNOB(model.bn_epsilon)},
      {"model.bn_frozen", BOOL_KNOB(model.bn_frozen)},
      {"model.scale_hidden", INT_KNOB(model.scale_hidden, int)},
      {"model.raw_depth_bias", REAL_KNOB(model.raw_depth_bias)},
      {"loss.base", REAL_KNOB(loss.base)},
      {"loss.consistency", REAL_KNOB(loss.consistency)},
      {"loss.edge_alpha", REAL_KNOB(loss.edge_alpha)},
      {"loss.edge_tau", REAL_KNOB(loss.edge_tau)},
      {"train.steps", INT_KNOB(train.steps, int)},
      {"train.pretrain_steps", INT_KNOB(train.pretrain_steps, int)},
      {"train.batch_size", INT_KNOB(train.batch_size, int)},
      {"train.learning_rate", REAL_KNOB(train.learning_rate)},
      {"train.beta1", REAL_KNOB(train.beta1)},
      {"train.beta2", REAL_KNOB(train.beta2)},
      {"train.adam_epsilon", REAL_KNOB(train.adam_epsilon)},
      {"train.weight_decay", REAL_KNOB(train.weight_decay)},
      {"train.seed", INT_KNOB(train.seed, std::uint64_t)},
      {"train.ratio_min", REAL_KNOB(train.ratio_min)},
      {"train.ratio_max", REAL_KNOB(train.ratio_max)},
      {"train.monocular", BOOL_KNOB(train.monocular)},
      {"eval.ratio", REAL_KNOB(eval.ratio)},
      {"eval.mask_seed", INT_KNOB(eval.mask_seed, std::uint64_t)},
  };
  return table;
}

#undef REAL_KNOB
#undef INT_KNOB
#undef BOOL_KNOB

const Knob& find_knob(const std::string& key) {
  for (const auto& [k, knob] : knob_table())
    if (k == key) return knob;
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  find_knob(key).set(*this, key, value);
}

std::string RunConfig::get(const std::string& key) const { return find_knob(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& entry : knob_table()) out.push_back(entry.first);
    return out;
  }();
  return k;
}

RunConfig RunConfig::parse(std::istream& is) {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                        "' (first on line " + std::to_string(seen[key]) + ")");
    seen[key] = lineno;
    cfg.set(key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::parse_string(const std::string& text) {
  std::istringstream is(text);
  return parse(is);
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config file '" + path + "'");
  return parse(is);
}

std::string RunConfig::snapshot() const {
  std::ostringstream os;
  os << "# resolved configuration\n";
  for (const auto& [key, knob] : knob_table()) os << key << " = " << knob.get(*this) << '\n';
  return os.str();
}

void RunConfig::validate() const {
  scenes.validate();
  if (!(model.backbone.width_multiplier > 0 && model.sparse_width_multiplier > 0))
    throw ConfigError("model: width multipliers must be positive");
  if (model.fill_radius < 0) throw ConfigError("model: fill_radius must be nonnegative");
  if (model.encoder_kernel <= 0 || model.encoder_kernel % 2 == 0)
    throw ConfigError("model: encoder_kernel must be a positive odd integer");
  if (model.se_reduction < 1) throw ConfigError("model: se_reduction must be at least 1");
  if (model.scale_hidden < 1) throw ConfigError("model: scale_hidden must be at least 1");
  if (!(model.bn_epsilon > 0)) throw ConfigError("model: bn_epsilon must be positive");
  if (!(model.bn_momentum >= 0 && model.bn_momentum <= 1))
    throw ConfigError("model: bn_momentum must lie in [0, 1]");
  loss.validate();
  train.validate();
  InjectionRatio check(eval.ratio);
  (void)check;
}

}  // namespace sparsefuse
