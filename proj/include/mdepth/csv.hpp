#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mdepth/experiments.hpp"
#include "mdepth/metrics.hpp"
#include "mdepth/trainer.hpp"

namespace mdepth {

// All tabular output is CSV with a fixed header row and %.9g numbers so a
// rerun of the same computation emits byte-identical files.

std::string metrics_csv(const MetricSet& m);
std::string trainlog_csv(const TrainLog& log);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string confusion_csv(const ConfusionMatrix& m);

struct ScoreRow {
  int x, y, bin;
  double w, probability;
};
std::string scores_csv(const std::vector<ScoreRow>& rows);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mdepth
