#include "mdepth/image_io.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdepth {

namespace {

struct NetpbmReader {
  std::ifstream in;
  std::string path;

  explicit NetpbmReader(const std::filesystem::path& p) : in(p, std::ios::binary), path(p.string()) {
    if (!in) throw std::runtime_error(path + ": cannot open file");
  }

  [[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(path + ": " + msg); }

  // One whitespace-delimited header token; '#' starts a comment to EOL.
  std::string token() {
    std::string t;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) return t;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    if (t.empty()) fail("unexpected end of file in header");
    return t;
  }

  int int_token(const char* field) {
    const std::string t = token();
    try {
      const int v = std::stoi(t);
      if (v <= 0) fail(std::string("non-positive ") + field);
      return v;
    } catch (const std::logic_error&) {
      fail(std::string("malformed ") + field + " '" + t + "'");
    }
  }

  void payload(void* dst, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      fail(std::string("truncated ") + what + ": expected " + std::to_string(n) +
           " payload bytes, got " + std::to_string(in.gcount()));
  }
};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  return os;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor4<float>& rgb) {
  if (rgb.n() != 1 || rgb.c() != 3)
    throw std::invalid_argument("write_ppm: expected (1,3,h,w), got " + rgb.dims_str());
  auto os = open_out(path);
  os << "P6\n" << rgb.w() << " " << rgb.h() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(rgb.w()) * 3);
  for (int y = 0; y < rgb.h(); ++y) {
    for (int x = 0; x < rgb.w(); ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(std::max(rgb(0, c, y, x), 0.0f), 1.0f);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

Tensor4<float> read_ppm(const std::filesystem::path& path) {
  NetpbmReader r(path);
  if (r.token() != "P6") r.fail("not a binary PPM (P6)");
  const int w = r.int_token("width");
  const int h = r.int_token("height");
  const int maxval = r.int_token("maxval");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval));
  // header ends with exactly one whitespace byte, already consumed by token()
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
  r.payload(buf.data(), buf.size(), "PPM pixel data");
  Tensor4<float> rgb(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        rgb(0, c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return rgb;
}

void write_pfm(const std::filesystem::path& path, const Tensor4<float>& map) {
  if (map.n() != 1 || map.c() != 1)
    throw std::invalid_argument("write_pfm: expected (1,1,h,w), got " + map.dims_str());
  auto os = open_out(path);
  os << "Pf\n" << map.w() << " " << map.h() << "\n-1.0\n";
  for (int y = map.h() - 1; y >= 0; --y)  // PFM scanlines run bottom-to-top
    os.write(reinterpret_cast<const char*>(map.plane(0, 0) + static_cast<std::ptrdiff_t>(y) * map.w()),
             static_cast<std::streamsize>(map.w()) * 4);
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

Tensor4<float> read_pfm(const std::filesystem::path& path) {
  NetpbmReader r(path);
  const std::string kind = r.token();
  if (kind == "PF") r.fail("color PFM not supported, expected grayscale 'Pf'");
  if (kind != "Pf") r.fail("not a PFM file");
  const int w = r.int_token("width");
  const int h = r.int_token("height");
  const std::string scale = r.token();
  double sc = 0.0;
  try {
    sc = std::stod(scale);
  } catch (const std::logic_error&) {
    r.fail("malformed scale '" + scale + "'");
  }
  if (sc >= 0.0) r.fail("big-endian PFM (positive scale) not supported");
  std::vector<float> buf(static_cast<std::size_t>(w) * h);
  r.payload(buf.data(), buf.size() * 4, "PFM pixel data");
  Tensor4<float> map(1, 1, h, w);
  for (int y = 0; y < h; ++y) {
    const float* src = buf.data() + static_cast<std::size_t>(h - 1 - y) * w;
    std::copy(src, src + w, map.plane(0, 0) + static_cast<std::ptrdiff_t>(y) * w);
  }
  return map;
}

void write_pgm_mask(const std::filesystem::path& path, const MaskMap& mask) {
  if (mask.n() != 1 || mask.c() != 1)
    throw std::invalid_argument("write_pgm_mask: expected (1,1,h,w), got " + mask.dims_str());
  auto os = open_out(path);
  os << "P5\n" << mask.w() << " " << mask.h() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(mask.w()));
  for (int y = 0; y < mask.h(); ++y) {
    for (int x = 0; x < mask.w(); ++x) row[x] = mask(0, 0, y, x) ? 255 : 0;
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

MaskMap read_pgm_mask(const std::filesystem::path& path) {
  NetpbmReader r(path);
  if (r.token() != "P5") r.fail("not a binary PGM (P5)");
  const int w = r.int_token("width");
  const int h = r.int_token("height");
  const int maxval = r.int_token("maxval");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval));
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
  r.payload(buf.data(), buf.size(), "PGM pixel data");
  MaskMap mask(1, 1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask(0, 0, y, x) = buf[static_cast<std::size_t>(y) * w + x] ? 1 : 0;
  return mask;
}

}  // namespace mdepth
