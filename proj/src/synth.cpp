#include "mdepth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mdepth/image_io.hpp"

namespace mdepth {

void SceneSpec::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("SceneSpec: empty image");
  if (!(d_near > 0.0)) throw std::invalid_argument("SceneSpec: d_near must be positive");
  if (d_far < d_near) throw std::invalid_argument("SceneSpec: d_far must be >= d_near");
  if (objects_min < 0 || objects_max < objects_min)
    throw std::invalid_argument("SceneSpec: bad object count range");
  if (haze_beta < 0.0) throw std::invalid_argument("SceneSpec: negative haze coefficient");
  if (invalid_fraction < 0.0 || invalid_fraction >= 1.0)
    throw std::invalid_argument("SceneSpec: invalid fraction must be in [0,1)");
}

namespace {

constexpr double kHaze[3] = {0.85, 0.87, 0.95};
constexpr double kTextureAmp = 0.12;
constexpr double kRefDepth = 2.0;  // depth at which object base size is nominal

struct Obj {
  bool ellipse;
  double depth;
  double cx, cy;
  double rx, ry;
  double albedo[3];
  double fx, fy, phase;  // sinusoidal texture
};

}  // namespace

double background_depth(const SceneSpec& spec, int row) {
  const double d_bottom = spec.d_near + 0.3 * (spec.d_far - spec.d_near);
  const double v =
      spec.height > 1 ? 1.0 - static_cast<double>(row) / (spec.height - 1) : 0.0;  // 1 at top
  return d_bottom + (spec.d_far - d_bottom) * v;
}

Sample generate_scene(const SceneSpec& spec, std::vector<SceneObject>* objects_out) {
  spec.validate();
  Rng rng(spec.seed);
  const int w = spec.width, h = spec.height;

  // Background: flat random albedo, depth ramp from d_far (top) down to a
  // point 30% into the range (bottom).
  double bg_albedo[3];
  for (double& a : bg_albedo) a = rng.uniform(0.2, 0.75);

  const int n_obj = spec.objects_min + (spec.objects_max > spec.objects_min
                                            ? rng.uniform_int(spec.objects_max - spec.objects_min + 1)
                                            : 0);
  std::vector<Obj> objs(n_obj);
  for (Obj& o : objs) {
    o.ellipse = rng.uniform() < 0.5;
    // log-uniform depths spread objects evenly over the bins
    o.depth = std::exp(rng.uniform(std::log(spec.d_near), std::log(spec.d_far)));
    o.cx = rng.uniform(0.0, w);
    o.cy = rng.uniform(0.0, h);
    const double scale = kRefDepth / o.depth;
    o.rx = rng.uniform(5.0, 12.0) * scale * (w / 64.0);
    o.ry = rng.uniform(5.0, 12.0) * scale * (h / 64.0);
    for (double& a : o.albedo) a = rng.uniform(0.2, 0.75);
    o.fx = rng.uniform(0.3, 1.2);
    o.fy = rng.uniform(0.3, 1.2);
    o.phase = rng.uniform(0.0, 2.0 * M_PI);
  }

  if (objects_out) {
    objects_out->clear();
    for (const Obj& o : objs) objects_out->push_back({o.ellipse, o.depth, o.cx, o.cy, o.rx, o.ry});
  }

  Sample s;
  s.rgb = Tensor4<float>(1, 3, h, w);
  s.depth = Tensor4<float>(1, 1, h, w);
  s.valid = MaskMap(1, 1, h, w);

  for (int y = 0; y < h; ++y) {
    const double d_bg = background_depth(spec, y);
    for (int x = 0; x < w; ++x) {
      double d = d_bg;
      double albedo[3] = {bg_albedo[0], bg_albedo[1], bg_albedo[2]};
      for (const Obj& o : objs) {
        if (o.depth >= d) continue;  // occluded by current surface
        const double dx = (x - o.cx) / o.rx, dy = (y - o.cy) / o.ry;
        const bool inside = o.ellipse ? dx * dx + dy * dy <= 1.0
                                      : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        d = o.depth;
        const double tex = 1.0 + kTextureAmp * std::sin(o.fx * x + o.fy * y + o.phase);
        for (int c = 0; c < 3; ++c) albedo[c] = std::clamp(o.albedo[c] * tex, 0.0, 1.0);
      }
      const double t = std::exp(-spec.haze_beta * d);
      for (int c = 0; c < 3; ++c)
        s.rgb(0, c, y, x) = static_cast<float>(std::clamp(albedo[c] * t + kHaze[c] * (1.0 - t), 0.0, 1.0));
      s.depth(0, 0, y, x) = static_cast<float>(d);
      s.valid(0, 0, y, x) = 1;
    }
  }

  if (spec.invalid_fraction > 0.0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (rng.uniform() < spec.invalid_fraction) {
          s.valid(0, 0, y, x) = 0;
          s.depth(0, 0, y, x) = 0.0f;
        }
  }
  return s;
}

Tensor4<float> fill_invalid(const Tensor4<float>& depth, const MaskMap& valid) {
  if (!(depth.n() == valid.n() && depth.c() == valid.c() && depth.h() == valid.h() &&
        depth.w() == valid.w()))
    throw std::invalid_argument("fill_invalid: depth/mask dims mismatch");
  const int h = depth.h(), w = depth.w();
  struct P {
    int y, x;
  };
  std::vector<P> valids;
  valids.reserve(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (valid(0, 0, y, x)) valids.push_back({y, x});
  if (valids.empty()) throw std::invalid_argument("fill_invalid: no valid pixel in map");

  Tensor4<float> out = depth;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (valid(0, 0, y, x)) continue;
      long best = -1;
      P bp{0, 0};
      for (const P& p : valids) {  // scan order is (row, col), so ties keep the required pixel
        const long d2 = static_cast<long>(p.y - y) * (p.y - y) +
                        static_cast<long>(p.x - x) * (p.x - x);
        if (best < 0 || d2 < best) {
          best = d2;
          bp = p;
        }
      }
      out(0, 0, y, x) = depth(0, 0, bp.y, bp.x);
    }
  return out;
}

namespace {

float bilinear(const Tensor4<float>& img, int c, double sy, double sx) {
  const int h = img.h(), w = img.w();
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double v00 = img(0, c, y0, x0), v01 = img(0, c, y0, x1);
  const double v10 = img(0, c, y1, x0), v11 = img(0, c, y1, x1);
  return static_cast<float>((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                            (v10 * (1 - fx) + v11 * fx) * fy);
}

Sample like(const Sample& s) {
  Sample o;
  o.id = s.id;
  o.rgb = Tensor4<float>(1, 3, s.rgb.h(), s.rgb.w());
  o.depth = Tensor4<float>(1, 1, s.rgb.h(), s.rgb.w());
  o.valid = MaskMap(1, 1, s.rgb.h(), s.rgb.w());
  return o;
}

}  // namespace

Sample color_scale(const Sample& s, const std::array<double, 3>& factors) {
  Sample o = s;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s.rgb.h(); ++y)
      for (int x = 0; x < s.rgb.w(); ++x)
        o.rgb(0, c, y, x) =
            static_cast<float>(std::clamp(s.rgb(0, c, y, x) * factors[c], 0.0, 1.0));
  return o;
}

Sample scale_crop(const Sample& s, double factor) {
  if (!(factor >= 1.0)) throw std::invalid_argument("scale_crop: factor must be >= 1");
  const int h = s.rgb.h(), w = s.rgb.w();
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Sample o = like(s);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sy = cy + (y - cy) / factor;
      const double sx = cx + (x - cx) / factor;
      for (int c = 0; c < 3; ++c) o.rgb(0, c, y, x) = bilinear(s.rgb, c, sy, sx);
      const int ny = static_cast<int>(std::llround(sy));
      const int nx = static_cast<int>(std::llround(sx));
      if (s.valid(0, 0, ny, nx)) {
        o.valid(0, 0, y, x) = 1;
        o.depth(0, 0, y, x) = static_cast<float>(s.depth(0, 0, ny, nx) / factor);
      }
    }
  return o;
}

Sample flip_horizontal(const Sample& s) {
  const int h = s.rgb.h(), w = s.rgb.w();
  Sample o = like(s);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int mx = w - 1 - x;
      for (int c = 0; c < 3; ++c) o.rgb(0, c, y, x) = s.rgb(0, c, y, mx);
      o.depth(0, 0, y, x) = s.depth(0, 0, y, mx);
      o.valid(0, 0, y, x) = s.valid(0, 0, y, mx);
    }
  return o;
}

Sample rotate_sample(const Sample& s, double degrees) {
  const int h = s.rgb.h(), w = s.rgb.w();
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double rad = degrees * M_PI / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  Sample o = like(s);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // inverse rotation about the image center
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + ca * dx + sa * dy;
      const double sy = cy - sa * dx + ca * dy;
      if (sx < 0.0 || sx > w - 1 || sy < 0.0 || sy > h - 1) continue;  // no source: invalid
      for (int c = 0; c < 3; ++c) o.rgb(0, c, y, x) = bilinear(s.rgb, c, sy, sx);
      const int ny = static_cast<int>(std::llround(sy));
      const int nx = static_cast<int>(std::llround(sx));
      if (s.valid(0, 0, ny, nx)) {
        o.valid(0, 0, y, x) = 1;
        o.depth(0, 0, y, x) = s.depth(0, 0, ny, nx);
      }
    }
  return o;
}

Sample augment_sample(const Sample& s, Rng& rng) {
  const std::array<double, 3> c = {rng.uniform(0.9, 1.1), rng.uniform(0.9, 1.1),
                                   rng.uniform(0.9, 1.1)};
  const double zoom = rng.uniform(1.3, 1.5);
  const bool mirror = rng.uniform() < 0.5;
  const double deg = rng.uniform(-5.0, 5.0);

  Sample o = color_scale(s, c);
  o = scale_crop(o, zoom);
  if (mirror) o = flip_horizontal(o);
  o = rotate_sample(o, deg);
  return o;
}

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error((dir / "manifest.txt").string() + ": cannot open for writing");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::string id = s.id;
    if (id.empty()) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "s%05zu", i);
      id = buf;
    }
    const std::string rgb = id + ".ppm", depth = id + "_depth.pfm", mask = id + "_mask.pgm";
    write_ppm(dir / rgb, s.rgb);
    write_pfm(dir / depth, s.depth);
    write_pgm_mask(dir / mask, s.valid);
    manifest << id << " " << rgb << " " << depth << " " << mask << "\n";
  }
  if (!manifest) throw std::runtime_error((dir / "manifest.txt").string() + ": write failed");
}

std::vector<Sample> read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest)
    throw std::runtime_error((dir / "manifest.txt").string() + ": cannot open manifest");
  std::vector<Sample> samples;
  std::string line;
  int lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, rgb, depth, mask;
    if (!(ss >> id >> rgb >> depth >> mask))
      throw std::runtime_error((dir / "manifest.txt").string() + ":" + std::to_string(lineno) +
                               ": malformed record '" + line + "'");
    Sample s;
    s.id = id;
    s.rgb = read_ppm(dir / rgb);
    s.depth = read_pfm(dir / depth);
    s.valid = read_pgm_mask(dir / mask);
    if (s.depth.h() != s.rgb.h() || s.depth.w() != s.rgb.w() || s.valid.h() != s.rgb.h() ||
        s.valid.w() != s.rgb.w())
      throw std::runtime_error(dir.string() + ": sample '" + id + "' has mismatched image dims");
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace mdepth
