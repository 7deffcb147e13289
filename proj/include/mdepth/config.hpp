#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mdepth/bins.hpp"
#include "mdepth/net.hpp"
#include "mdepth/synth.hpp"
#include "mdepth/trainer.hpp"

namespace mdepth {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value run configuration: one file drives generation, training,
// inference and evaluation. Unknown keys are rejected against the schema.
struct RunConfig {
  std::uint64_t seed = 1;

  // scene / binning
  int width = 64;
  int height = 64;
  double d_min = 0.5;
  double d_max = 8.0;
  int bins = 40;
  int objects_min = 4;
  int objects_max = 9;
  double haze_beta = 0.3;
  double invalid_fraction = 0.05;

  // generation
  int count = 64;
  bool offline_augment = false;
  bool fill_holes = false;

  // training
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 4e-4;
  int accum_steps = 8;
  long total_iters = 2000;
  long fixed_iters = 1200;
  long decay_every = 400;
  double decay_factor = 0.1;
  bool augment = true;
  long log_every = 20;
  long checkpoint_every = 0;

  // architecture
  bool no_dilation = false;
  bool no_concat = false;
  int blocks_per_stage = 2;
  int stem_channels = 16;

  // evaluation / inference
  std::string rule = "soft";
  double cap = 0.0;  // 0 = no depth cap
  int merge = 1;
  std::string sweep_bins = "10,20,40,80";
  std::string pixels;  // "x,y;x,y" positions for score-distribution dumps

  SceneSpec scene_spec() const;
  Binning binning() const;
  NetArch arch() const;
  TrainConfig train_config() const;
  InferRule infer_rule() const;
  std::vector<int> sweep_k_list() const;
  std::vector<std::pair<int, int>> pixel_list() const;
};

struct ConfigKeyInfo {
  const char* key;
  const char* type;
  const char* def;
  const char* desc;
};

// The published schema, in canonical order.
const std::vector<ConfigKeyInfo>& config_schema();

// Applies one key=value assignment; throws ConfigError naming the key and
// pointing at the schema for unknown keys or malformed values.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::string& where);

// Parses a config file ('#' comments, blank lines allowed), then applies
// the key=value override list in order.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {});

// Overrides applied to the built-in defaults (no file).
RunConfig default_config(const std::vector<std::string>& overrides = {});

}  // namespace mdepth
