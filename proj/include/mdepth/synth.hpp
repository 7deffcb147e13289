#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdepth/rng.hpp"
#include "mdepth/tensor.hpp"

namespace mdepth {

// One RGB-D training example. Invalid pixels carry depth 0 and are excluded
// from loss and metrics via the mask.
struct Sample {
  std::string id;
  Tensor4<float> rgb;    // (1,3,h,w) in [0,1]
  Tensor4<float> depth;  // (1,1,h,w) meters
  MaskMap valid;         // (1,1,h,w), 1 = valid
};

struct SceneSpec {
  std::uint64_t seed = 1;
  int width = 64;
  int height = 64;
  double d_near = 0.5;
  double d_far = 8.0;
  int objects_min = 4;
  int objects_max = 9;
  double haze_beta = 0.3;       // rendered color = albedo*e^{-beta d} + haze*(1-e^{-beta d})
  double invalid_fraction = 0.05;

  void validate() const;
};

// Object geometry as placed by the generator, exposed for verification.
struct SceneObject {
  bool ellipse;
  double depth;
  double cx, cy;
  double rx, ry;
};

// Procedural scene with a learnable monocular depth cue: a background ramp
// (depth grows bottom to top), layered rectangles/ellipses whose apparent
// size shrinks with depth, and haze shading that ties pixel intensity to
// depth. Deterministic in spec.seed.
Sample generate_scene(const SceneSpec& spec, std::vector<SceneObject>* objects_out = nullptr);

// Background depth at a given row (d_far at the top, 30% into the range at
// the bottom); the generator's z-buffer starts from this ramp.
double background_depth(const SceneSpec& spec, int row);

// Nearest-valid fill (Euclidean distance; ties break to the smaller row,
// then the smaller column). Valid pixels are untouched.
Tensor4<float> fill_invalid(const Tensor4<float>& depth, const MaskMap& valid);

// Augmentation primitives, composable and individually testable.
Sample color_scale(const Sample& s, const std::array<double, 3>& factors);
Sample scale_crop(const Sample& s, double factor);  // zoom by s, depth /= s
Sample flip_horizontal(const Sample& s);
Sample rotate_sample(const Sample& s, double degrees);

// Color jitter [0.9,1.1], zoom [1.3,1.5], coin-flip mirror, rotation [-5,5]
// degrees, applied in that order.
Sample augment_sample(const Sample& s, Rng& rng);

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir);
std::vector<Sample> read_dataset(const std::filesystem::path& dir);

}  // namespace mdepth
