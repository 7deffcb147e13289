#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mdepth/net.hpp"

namespace mdepth {

// Checkpoint file layout (version is part of the magic):
//   "MDCKPT01"
//   u32 descriptor length, ASCII key=value descriptor (arch, binning range,
//       iteration, whether optimizer state follows)
//   u32 entry count
//   per entry: u32 name length, name bytes, u32 ndims, u32 dims[ndims],
//              prod(dims) little-endian float32 values
// Round trips are byte-exact.
inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

template <typename S>
struct CheckpointData {
  NetParams<S> params;
  double d_min = 0.0, d_max = 0.0;  // binning range the model was trained for
  long iter = 0;
  bool has_opt = false;
  NetParams<S> velocity;  // optimizer momentum buffers, when has_opt
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

inline void put_entry_header(std::ostream& os, const std::string& name,
                             const std::vector<int>& dims) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) put_u32(os, static_cast<std::uint32_t>(d));
}

template <typename S>
void put_payload(std::ostream& os, const S* data, std::size_t len) {
  std::vector<float> buf(len);
  for (std::size_t i = 0; i < len; ++i) buf[i] = static_cast<float>(data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(len * 4));
}

struct CkptReader {
  std::ifstream in;
  std::string path;
  std::size_t offset = 0;

  void read_raw(void* dst, std::size_t n, const char* field) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw std::runtime_error(path + ": truncated at byte " + std::to_string(offset) +
                               " while reading " + field + " (expected " + std::to_string(n) +
                               " bytes)");
    offset += n;
  }
  std::uint32_t u32(const char* field) {
    std::uint32_t v;
    read_raw(&v, 4, field);
    return v;
  }
  std::string str(std::size_t n, const char* field) {
    std::string s(n, '\0');
    read_raw(s.data(), n, field);
    return s;
  }
};

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const CheckpointData<S>& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  os.write(kCheckpointMagic, 8);

  const NetArch& a = ck.params.arch;
  std::ostringstream desc;
  desc << "k=" << a.k << " stem=" << a.stem_channels << " blocks=" << a.blocks_per_stage
       << " no_dilation=" << (a.no_dilation ? 1 : 0) << " no_concat=" << (a.no_concat ? 1 : 0)
       << " dmin=" << detail::fmt_double(ck.d_min) << " dmax=" << detail::fmt_double(ck.d_max)
       << " iter=" << ck.iter << " opt=" << (ck.has_opt ? 1 : 0);
  const std::string d = desc.str();
  detail::put_u32(os, static_cast<std::uint32_t>(d.size()));
  os.write(d.data(), static_cast<std::streamsize>(d.size()));

  std::uint32_t entries = 0;
  auto count = [&](const std::string&, const S*, std::size_t, const std::vector<int>&, auto&&...) {
    ++entries;
  };
  visit_params(ck.params, count);
  visit_bn_state(ck.params, count);
  if (ck.has_opt) visit_params(ck.velocity, count);
  detail::put_u32(os, entries);

  auto emit = [&](const std::string& name, const S* data, std::size_t len,
                  const std::vector<int>& dims) {
    detail::put_entry_header(os, name, dims);
    detail::put_payload(os, data, len);
  };
  visit_params(ck.params, [&](const std::string& n, const S* d, std::size_t l,
                              const std::vector<int>& dm, bool) { emit(n, d, l, dm); });
  visit_bn_state(ck.params, [&](const std::string& n, const S* d, std::size_t l,
                                const std::vector<int>& dm) { emit(n, d, l, dm); });
  if (ck.has_opt)
    visit_params(ck.velocity, [&](const std::string& n, const S* d, std::size_t l,
                                  const std::vector<int>& dm, bool) { emit("opt.vel." + n, d, l, dm); });
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

template <typename S>
CheckpointData<S> load_checkpoint(const std::filesystem::path& path) {
  detail::CkptReader r;
  r.path = path.string();
  r.in.open(path, std::ios::binary);
  if (!r.in) throw std::runtime_error("load_checkpoint: cannot open " + r.path);

  char magic[8];
  r.read_raw(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error(r.path + ": bad magic, not a checkpoint file");

  const std::uint32_t dlen = r.u32("descriptor length");
  const std::string desc = r.str(dlen, "descriptor");

  NetArch arch;
  CheckpointData<S> ck;
  {
    std::istringstream ss(desc);
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(r.path + ": malformed descriptor token '" + tok + "'");
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "k") arch.k = std::stoi(val);
      else if (key == "stem") arch.stem_channels = std::stoi(val);
      else if (key == "blocks") arch.blocks_per_stage = std::stoi(val);
      else if (key == "no_dilation") arch.no_dilation = val != "0";
      else if (key == "no_concat") arch.no_concat = val != "0";
      else if (key == "dmin") ck.d_min = std::stod(val);
      else if (key == "dmax") ck.d_max = std::stod(val);
      else if (key == "iter") ck.iter = std::stol(val);
      else if (key == "opt") ck.has_opt = val != "0";
      else throw std::runtime_error(r.path + ": unknown descriptor key '" + key + "'");
    }
  }
  ck.params = make_params<S>(arch);
  if (ck.has_opt) {
    ck.velocity = make_params<S>(arch);
    zero_fill_params(ck.velocity);
  }

  // Index every destination span by name.
  struct Slot {
    S* data;
    std::size_t len;
    std::vector<int> dims;
    bool filled = false;
  };
  std::vector<std::pair<std::string, Slot>> slots;
  auto add = [&](const std::string& n, S* d, std::size_t l, const std::vector<int>& dm) {
    slots.emplace_back(n, Slot{d, l, dm});
  };
  visit_params(ck.params, [&](const std::string& n, S* d, std::size_t l,
                              const std::vector<int>& dm, bool) { add(n, d, l, dm); });
  visit_bn_state(ck.params, [&](const std::string& n, S* d, std::size_t l,
                                const std::vector<int>& dm) { add(n, d, l, dm); });
  if (ck.has_opt)
    visit_params(ck.velocity, [&](const std::string& n, S* d, std::size_t l,
                                  const std::vector<int>& dm, bool) { add("opt.vel." + n, d, l, dm); });

  const std::uint32_t entries = r.u32("entry count");
  if (entries != slots.size())
    throw std::runtime_error(r.path + ": expected " + std::to_string(slots.size()) +
                             " entries for this architecture, file has " + std::to_string(entries));

  for (std::uint32_t e = 0; e < entries; ++e) {
    const std::uint32_t nlen = r.u32("entry name length");
    const std::string name = r.str(nlen, "entry name");
    Slot* slot = nullptr;
    for (auto& [n, s] : slots)
      if (n == name) {
        slot = &s;
        break;
      }
    if (!slot) throw std::runtime_error(r.path + ": unexpected entry '" + name + "'");
    if (slot->filled) throw std::runtime_error(r.path + ": duplicate entry '" + name + "'");
    const std::uint32_t ndims = r.u32("entry ndims");
    if (ndims != slot->dims.size())
      throw std::runtime_error(r.path + ": entry '" + name + "' has rank " + std::to_string(ndims) +
                               ", expected " + std::to_string(slot->dims.size()));
    std::size_t len = 1;
    for (std::uint32_t i = 0; i < ndims; ++i) {
      const std::uint32_t d = r.u32("entry dim");
      if (d != static_cast<std::uint32_t>(slot->dims[i]))
        throw std::runtime_error(r.path + ": entry '" + name + "' dim " + std::to_string(i) +
                                 " is " + std::to_string(d) + ", expected " +
                                 std::to_string(slot->dims[i]));
      len *= d;
    }
    std::vector<float> buf(len);
    r.read_raw(buf.data(), len * 4, "entry payload");
    for (std::size_t i = 0; i < len; ++i) slot->data[i] = static_cast<S>(buf[i]);
    slot->filled = true;
  }
  for (const auto& [n, s] : slots)
    if (!s.filled) throw std::runtime_error(r.path + ": missing entry '" + n + "'");

  // Trailing garbage means the file does not match its own header.
  char extra;
  r.in.read(&extra, 1);
  if (r.in.gcount() != 0)
    throw std::runtime_error(r.path + ": trailing bytes after last entry");
  return ck;
}

}  // namespace mdepth
