#include "mdepth/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mdepth {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string metrics_csv(const MetricSet& m) {
  std::ostringstream os;
  os << "delta1,delta2,delta3,rel,log10,rms,count\n";
  os << num(m.delta1) << "," << num(m.delta2) << "," << num(m.delta3) << "," << num(m.rel) << ","
     << num(m.log10e) << "," << num(m.rms) << "," << m.count << "\n";
  return os.str();
}

std::string trainlog_csv(const TrainLog& log) {
  std::ostringstream os;
  os << "iter,lr,loss\n";
  for (const auto& r : log.rows)
    os << r.iter << "," << num(r.lr) << "," << num(r.loss) << "\n";
  return os.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "K,pixel_accuracy,rel\n";
  for (const auto& r : rows) os << r.k << "," << num(r.pixel_acc) << "," << num(r.rel) << "\n";
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  for (int r = 0; r < m.k; ++r) {
    for (int c = 0; c < m.k; ++c) {
      if (c) os << ",";
      os << m.at(r, c);
    }
    os << "\n";
  }
  return os.str();
}

std::string scores_csv(const std::vector<ScoreRow>& rows) {
  std::ostringstream os;
  os << "pixel_x,pixel_y,bin,w,probability\n";
  for (const auto& r : rows)
    os << r.x << "," << r.y << "," << r.bin << "," << num(r.w) << "," << num(r.probability)
       << "\n";
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace mdepth
