#include "mdepth/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mdepth {

SceneSpec RunConfig::scene_spec() const {
  SceneSpec s;
  s.seed = seed;
  s.width = width;
  s.height = height;
  s.d_near = d_min;
  s.d_far = d_max;
  s.objects_min = objects_min;
  s.objects_max = objects_max;
  s.haze_beta = haze_beta;
  s.invalid_fraction = invalid_fraction;
  return s;
}

Binning RunConfig::binning() const { return make_binning(d_min, d_max, bins); }

NetArch RunConfig::arch() const {
  NetArch a;
  a.k = bins;
  a.stem_channels = stem_channels;
  a.blocks_per_stage = blocks_per_stage;
  a.no_dilation = no_dilation;
  a.no_concat = no_concat;
  return a;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.base_lr = base_lr;
  t.momentum = momentum;
  t.weight_decay = weight_decay;
  t.accum_steps = accum_steps;
  t.total_iters = total_iters;
  t.fixed_iters = fixed_iters;
  t.decay_every = decay_every;
  t.decay_factor = decay_factor;
  t.seed = seed;
  t.binning = binning();
  t.arch = arch();
  t.augment = augment;
  t.log_every = log_every;
  t.checkpoint_every = checkpoint_every;
  return t;
}

InferRule RunConfig::infer_rule() const {
  if (rule == "soft") return InferRule::kSoft;
  if (rule == "hard") return InferRule::kHard;
  throw ConfigError("config key 'rule' must be 'soft' or 'hard', got '" + rule + "'");
}

std::vector<int> RunConfig::sweep_k_list() const {
  std::vector<int> ks;
  std::istringstream ss(sweep_bins);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      ks.push_back(std::stoi(tok));
    } catch (const std::logic_error&) {
      throw ConfigError("config key 'sweep_bins' has malformed entry '" + tok + "'");
    }
  }
  if (ks.empty()) throw ConfigError("config key 'sweep_bins' is empty");
  return ks;
}

std::vector<std::pair<int, int>> RunConfig::pixel_list() const {
  std::vector<std::pair<int, int>> out;
  if (pixels.empty()) return out;
  std::istringstream ss(pixels);
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    const auto comma = tok.find(',');
    if (comma == std::string::npos)
      throw ConfigError("config key 'pixels' expects 'x,y;x,y', got '" + tok + "'");
    try {
      out.emplace_back(std::stoi(tok.substr(0, comma)), std::stoi(tok.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw ConfigError("config key 'pixels' has malformed entry '" + tok + "'");
    }
  }
  return out;
}

const std::vector<ConfigKeyInfo>& config_schema() {
  static const std::vector<ConfigKeyInfo> schema = {
      {"seed", "uint", "1", "master seed for all randomness"},
      {"width", "int", "64", "scene width in pixels (multiple of 4, or 8 with no_dilation)"},
      {"height", "int", "64", "scene height in pixels"},
      {"d_min", "float", "0.5", "minimum depth in meters (binning and scenes)"},
      {"d_max", "float", "8.0", "maximum depth in meters"},
      {"bins", "int", "40", "number of depth bins K"},
      {"objects_min", "int", "4", "minimum objects per scene"},
      {"objects_max", "int", "9", "maximum objects per scene"},
      {"haze_beta", "float", "0.3", "haze attenuation coefficient"},
      {"invalid_fraction", "float", "0.05", "fraction of pixels marked invalid"},
      {"count", "int", "64", "gen-data: number of base scenes"},
      {"offline_augment", "bool", "false", "gen-data: write 4 augmented copies per scene"},
      {"fill_holes", "bool", "false", "gen-data: nearest-valid fill, mask becomes all-valid"},
      {"base_lr", "float", "0.001", "initial learning rate"},
      {"momentum", "float", "0.9", "SGD momentum"},
      {"weight_decay", "float", "0.0004", "L2 weight decay (BN affines exempt)"},
      {"accum_steps", "int", "8", "iterations averaged per optimizer step"},
      {"total_iters", "int", "2000", "training iterations (batch size 1)"},
      {"fixed_iters", "int", "1200", "iterations at the base learning rate"},
      {"decay_every", "int", "400", "iterations between decays after fixed_iters"},
      {"decay_factor", "float", "0.1", "learning-rate decay factor"},
      {"augment", "bool", "true", "on-the-fly training augmentation"},
      {"log_every", "int", "20", "training-log cadence in iterations"},
      {"checkpoint_every", "int", "0", "mid-run checkpoint cadence (0 = final only)"},
      {"no_dilation", "bool", "false", "ablation: undilated stages + extra pool"},
      {"no_concat", "bool", "false", "ablation: head consumes the last tap only"},
      {"blocks_per_stage", "int", "2", "residual blocks per stage"},
      {"stem_channels", "int", "16", "stem width; stages are {s,2s,2s,2s}"},
      {"rule", "string", "soft", "inference rule: soft | hard"},
      {"cap", "float", "0", "evaluation depth cap in meters (0 = none)"},
      {"merge", "int", "1", "confusion-matrix bin merge factor"},
      {"sweep_bins", "string", "10,20,40,80", "comma-separated K list for sweep-bins"},
      {"pixels", "string", "", "infer: 'x,y;x,y' output pixels for score CSV"},
  };
  return schema;
}

namespace {

[[noreturn]] void bad_value(const std::string& where, const std::string& key,
                            const std::string& value, const char* type) {
  throw ConfigError(where + ": key '" + key + "' expects a " + type + " value, got '" + value +
                    "'");
}

long parse_long(const std::string& where, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long r = std::stol(v, &pos);
    if (pos != v.size()) bad_value(where, key, v, "integer");
    return r;
  } catch (const std::logic_error&) {
    bad_value(where, key, v, "integer");
  }
}

double parse_double(const std::string& where, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) bad_value(where, key, v, "float");
    return r;
  } catch (const std::logic_error&) {
    bad_value(where, key, v, "float");
  }
}

bool parse_bool(const std::string& where, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(where, key, v, "bool");
}

std::uint64_t parse_u64(const std::string& where, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) bad_value(where, key, v, "unsigned integer");
    return r;
  } catch (const std::logic_error&) {
    bad_value(where, key, v, "unsigned integer");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where) {
  if (key == "seed") cfg.seed = parse_u64(where, key, value);
  else if (key == "width") cfg.width = static_cast<int>(parse_long(where, key, value));
  else if (key == "height") cfg.height = static_cast<int>(parse_long(where, key, value));
  else if (key == "d_min") cfg.d_min = parse_double(where, key, value);
  else if (key == "d_max") cfg.d_max = parse_double(where, key, value);
  else if (key == "bins") cfg.bins = static_cast<int>(parse_long(where, key, value));
  else if (key == "objects_min") cfg.objects_min = static_cast<int>(parse_long(where, key, value));
  else if (key == "objects_max") cfg.objects_max = static_cast<int>(parse_long(where, key, value));
  else if (key == "haze_beta") cfg.haze_beta = parse_double(where, key, value);
  else if (key == "invalid_fraction") cfg.invalid_fraction = parse_double(where, key, value);
  else if (key == "count") cfg.count = static_cast<int>(parse_long(where, key, value));
  else if (key == "offline_augment") cfg.offline_augment = parse_bool(where, key, value);
  else if (key == "fill_holes") cfg.fill_holes = parse_bool(where, key, value);
  else if (key == "base_lr") cfg.base_lr = parse_double(where, key, value);
  else if (key == "momentum") cfg.momentum = parse_double(where, key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_double(where, key, value);
  else if (key == "accum_steps") cfg.accum_steps = static_cast<int>(parse_long(where, key, value));
  else if (key == "total_iters") cfg.total_iters = parse_long(where, key, value);
  else if (key == "fixed_iters") cfg.fixed_iters = parse_long(where, key, value);
  else if (key == "decay_every") cfg.decay_every = parse_long(where, key, value);
  else if (key == "decay_factor") cfg.decay_factor = parse_double(where, key, value);
  else if (key == "augment") cfg.augment = parse_bool(where, key, value);
  else if (key == "log_every") cfg.log_every = parse_long(where, key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = parse_long(where, key, value);
  else if (key == "no_dilation") cfg.no_dilation = parse_bool(where, key, value);
  else if (key == "no_concat") cfg.no_concat = parse_bool(where, key, value);
  else if (key == "blocks_per_stage") cfg.blocks_per_stage = static_cast<int>(parse_long(where, key, value));
  else if (key == "stem_channels") cfg.stem_channels = static_cast<int>(parse_long(where, key, value));
  else if (key == "rule") cfg.rule = value;
  else if (key == "cap") cfg.cap = parse_double(where, key, value);
  else if (key == "merge") cfg.merge = static_cast<int>(parse_long(where, key, value));
  else if (key == "sweep_bins") cfg.sweep_bins = value;
  else if (key == "pixels") cfg.pixels = value;
  else {
    // closest schema key, to make typos easy to spot
    std::string hint;
    for (const auto& info : config_schema())
      if (key.size() >= 3 && std::string(info.key).find(key.substr(0, 3)) != std::string::npos) {
        hint = std::string(" (did you mean '") + info.key + "'?)";
        break;
      }
    throw ConfigError(where + ": unknown config key '" + key + "'" + hint +
                      "; the schema is listed by 'mdepth --help-config'");
  }
}

RunConfig default_config(const std::vector<std::string>& overrides) {
  RunConfig cfg;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form key=value");
    apply_config_entry(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)), "--set " + ov);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_config_entry(cfg, key, value, path.string() + ":" + std::to_string(lineno));
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "' is not of the form key=value");
    apply_config_entry(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)), "--set " + ov);
  }
  return cfg;
}

}  // namespace mdepth
