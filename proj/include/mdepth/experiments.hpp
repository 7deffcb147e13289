#pragma once

#include <optional>
#include <vector>

#include "mdepth/checkpoint.hpp"
#include "mdepth/metrics.hpp"
#include "mdepth/net.hpp"
#include "mdepth/pipeline.hpp"
#include "mdepth/trainer.hpp"

namespace mdepth {

struct EvalResult {
  MetricSet metrics;
  double pixel_acc = 0.0;      // argmax labels vs quantized ground truth
  ConfusionMatrix conf;        // unmerged K x K
  Tensor4<double> pred;        // stacked (num_samples, 1, h/2, w/2) predictions
  Tensor4<double> gt;
  MaskMap mask;
};

// Runs the model over a dataset at half resolution: depth metrics under the
// chosen inference rule plus label-space accuracy/confusion from hard-max.
template <typename S>
EvalResult evaluate_model(const NetParams<S>& params, const std::vector<Sample>& samples,
                          const Binning& binning, InferRule rule,
                          std::optional<double> cap = std::nullopt) {
  if (samples.empty()) throw std::invalid_argument("evaluate_model: empty dataset");
  if (binning.k != params.arch.k)
    throw std::invalid_argument("evaluate_model: binning K does not match network");

  const int oh = samples[0].rgb.h() / 2, ow = samples[0].rgb.w() / 2;
  const int num = static_cast<int>(samples.size());
  EvalResult r;
  r.pred = Tensor4<double>(num, 1, oh, ow);
  r.gt = Tensor4<double>(num, 1, oh, ow);
  r.mask = MaskMap(num, 1, oh, ow);
  LabelMap pred_labels(num, oh, ow), gt_labels(num, oh, ow);

  std::vector<double> p(binning.k);
  for (int si = 0; si < num; ++si) {
    const Sample& s = samples[si];
    const Tensor4<S> x = to_network_input<S>(s.rgb);
    const Tensor4<double> scores = forward_eval(x, params).template cast<double>();
    if (scores.h() != oh || scores.w() != ow)
      throw std::invalid_argument("evaluate_model: samples have mixed sizes");
    const Tensor4<double> probs = softmax(scores);
    const HalfResDepth gt = half_res_ground_truth(s.depth, s.valid);

    const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(oh) * ow;
    const double* pp = probs.plane(0, 0);
    for (int y = 0; y < oh; ++y)
      for (int x2 = 0; x2 < ow; ++x2) {
        const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(y) * ow + x2;
        for (int k = 0; k < binning.k; ++k) p[k] = pp[i + k * plane];
        r.pred(si, 0, y, x2) =
            rule == InferRule::kSoft ? soft_weighted_sum(p, binning) : hard_max(p, binning);
        int best = 0;
        for (int k = 1; k < binning.k; ++k)
          if (p[k] > p[best]) best = k;
        pred_labels.at(si, y, x2) = best;
        r.gt(si, 0, y, x2) = gt.depth(0, 0, y, x2);
        r.mask(si, 0, y, x2) = gt.valid(0, 0, y, x2);
        if (gt.valid(0, 0, y, x2))
          gt_labels.at(si, y, x2) = quantize_depth(gt.depth(0, 0, y, x2), binning);
      }
  }

  r.metrics = compute_metrics(r.pred, r.gt, r.mask, cap);
  r.pixel_acc = pixel_accuracy(pred_labels, gt_labels);
  r.conf = confusion(pred_labels, gt_labels, binning.k);
  return r;
}

struct SweepRow {
  int k;
  double pixel_acc;
  double rel;
};

// Trains one model per bin count under an identical budget and seed, then
// reports label accuracy and soft-inference Rel on the held-out set.
template <typename S>
std::vector<SweepRow> bins_sweep(const std::vector<Sample>& train_set,
                                 const std::vector<Sample>& test_set,
                                 const std::vector<int>& k_list, const TrainConfig& base_cfg) {
  if (k_list.empty()) throw std::invalid_argument("bins_sweep: empty K list");
  std::vector<SweepRow> rows;
  for (int k : k_list) {
    TrainConfig cfg = base_cfg;
    cfg.arch.k = k;
    cfg.binning = make_binning(base_cfg.binning.d_min, base_cfg.binning.d_max, k);
    TrainResult<S> tr = train<S>(train_set, cfg);
    const EvalResult ev = evaluate_model(tr.params, test_set, cfg.binning, InferRule::kSoft);
    rows.push_back({k, ev.pixel_acc, ev.metrics.rel});
  }
  return rows;
}

}  // namespace mdepth
