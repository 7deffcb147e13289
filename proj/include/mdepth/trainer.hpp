#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mdepth/net.hpp"
#include "mdepth/pipeline.hpp"
#include "mdepth/rng.hpp"
#include "mdepth/synth.hpp"

namespace mdepth {

struct TrainConfig {
  double base_lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 4e-4;
  int accum_steps = 8;       // gradients averaged over this many iterations
  long total_iters = 2000;   // desk-scale shrink of the 50k/30k/10k schedule
  long fixed_iters = 1200;
  long decay_every = 400;
  double decay_factor = 0.1;
  std::uint64_t seed = 1;
  Binning binning;
  NetArch arch;
  bool augment = true;
  long log_every = 20;
  long checkpoint_every = 0;  // 0 = no mid-run checkpoints

  void validate() const {
    if (!(base_lr > 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
      throw std::invalid_argument("TrainConfig: rates must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
      throw std::invalid_argument("TrainConfig: decay_factor must be in (0,1]");
    if (accum_steps < 1) throw std::invalid_argument("TrainConfig: accum_steps must be >= 1");
    if (total_iters < 1 || fixed_iters < 0 || fixed_iters > total_iters || decay_every < 1)
      throw std::invalid_argument("TrainConfig: bad iteration schedule");
    if (total_iters % accum_steps != 0)
      throw std::invalid_argument("TrainConfig: total_iters must be a multiple of accum_steps");
    if (log_every < 1) throw std::invalid_argument("TrainConfig: log_every must be >= 1");
    if (checkpoint_every < 0 || (checkpoint_every > 0 && checkpoint_every % accum_steps != 0))
      throw std::invalid_argument(
          "TrainConfig: checkpoint_every must be a multiple of accum_steps");
    binning_checked();
    arch.validate();
  }

 private:
  void binning_checked() const {
    if (binning.k < 2 || binning.k != arch.k)
      throw std::invalid_argument("TrainConfig: binning does not match arch.k");
  }
};

// Step schedule: base rate while iter < fixed_iters, then divided by the
// decay factor every decay_every iterations.
inline double lr_at(long iter, const TrainConfig& cfg) {
  if (iter < 0 || iter >= cfg.total_iters)
    throw std::invalid_argument("lr_at: iteration out of range");
  if (iter < cfg.fixed_iters) return cfg.base_lr;
  const long k = 1 + (iter - cfg.fixed_iters) / cfg.decay_every;
  return cfg.base_lr * std::pow(cfg.decay_factor, static_cast<double>(k));
}

template <typename S>
struct OptState {
  NetParams<S> velocity;
  long iter = 0;  // completed sample iterations

  static OptState make(const NetArch& arch) {
    OptState st;
    st.velocity = make_params<S>(arch);
    zero_fill_params(st.velocity);
    return st;
  }
};

namespace detail {

template <typename S>
struct ParamView {
  std::string name;
  S* data;
  std::size_t len;
  bool decay_exempt;
};

template <typename S>
std::vector<ParamView<S>> param_views(NetParams<S>& p) {
  std::vector<ParamView<S>> v;
  visit_params(p, [&](const std::string& n, S* d, std::size_t l, const std::vector<int>&,
                      bool exempt) { v.push_back({n, d, l, exempt}); });
  return v;
}

}  // namespace detail

// Classical momentum with coupled weight decay:
//   v <- momentum*v + (g + wd*theta);  theta <- theta - lr*v
// BN gamma/beta are exempt from the decay term. The schedule index is the
// last iteration whose gradient contributed (state.iter - 1).
template <typename S>
void sgd_step(NetParams<S>& params, const NetParams<S>& avg_grads, OptState<S>& state,
              const TrainConfig& cfg) {
  auto pv = detail::param_views(params);
  auto gv = detail::param_views(const_cast<NetParams<S>&>(avg_grads));
  auto vv = detail::param_views(state.velocity);
  if (pv.size() != gv.size() || pv.size() != vv.size())
    throw std::invalid_argument("sgd_step: parameter/gradient structure mismatch");
  const double lr = lr_at(std::max<long>(state.iter - 1, 0), cfg);
  const S m = static_cast<S>(cfg.momentum);
  const S wd = static_cast<S>(cfg.weight_decay);
  const S rate = static_cast<S>(lr);
  for (std::size_t j = 0; j < pv.size(); ++j) {
    if (pv[j].len != gv[j].len || pv[j].name != gv[j].name)
      throw std::invalid_argument("sgd_step: gradient shape mismatch at " + pv[j].name);
    for (std::size_t i = 0; i < gv[j].len; ++i)
      if (!std::isfinite(static_cast<double>(gv[j].data[i])))
        throw std::runtime_error("sgd_step: non-finite gradient in " + pv[j].name +
                                 ", step aborted");
    const bool decay = !pv[j].decay_exempt && wd != S(0);
    for (std::size_t i = 0; i < pv[j].len; ++i) {
      const S g = decay ? gv[j].data[i] + wd * pv[j].data[i] : gv[j].data[i];
      vv[j].data[i] = m * vv[j].data[i] + g;
      pv[j].data[i] -= rate * vv[j].data[i];
    }
  }
}

struct TrainLogRow {
  long iter;
  double lr;
  double loss;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::vector<std::pair<long, std::uint64_t>> epoch_seeds;  // (epoch, shuffle seed)
};

template <typename S>
struct TrainResult {
  NetParams<S> params;
  OptState<S> opt;
  TrainLog log;
};

template <typename S>
struct TrainCallbacks {
  std::function<void(long iter, const NetParams<S>&, const OptState<S>&)> on_checkpoint;
};

template <typename S>
struct ResumePoint {
  NetParams<S> params;
  OptState<S> opt;
};

// Batch-size-1 SGD with gradient averaging over accum_steps iterations,
// epoch-wise shuffling without replacement and on-the-fly augmentation.
// Bitwise deterministic in (dataset, cfg); resumable at any checkpoint
// because every random draw is keyed by (seed, stream, index).
template <typename S>
TrainResult<S> train(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                     const TrainCallbacks<S>* callbacks = nullptr,
                     const ResumePoint<S>* resume = nullptr) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult<S> r;
  if (resume) {
    if (resume->params.arch != cfg.arch)
      throw std::invalid_argument("train: resume checkpoint architecture mismatch");
    if (resume->opt.iter % cfg.accum_steps != 0)
      throw std::invalid_argument("train: resume point is not at an accumulation boundary");
    r.params = resume->params;
    r.opt = resume->opt;
  } else {
    r.params = init_params<S>(cfg.seed, cfg.arch);
    r.opt = OptState<S>::make(cfg.arch);
  }

  auto views = detail::param_views(r.params);
  std::vector<std::vector<double>> acc(views.size());
  for (std::size_t j = 0; j < views.size(); ++j) acc[j].assign(views[j].len, 0.0);

  NetParams<S> mean_grads = make_params<S>(cfg.arch);
  zero_fill_params(mean_grads);
  auto mean_views = detail::param_views(mean_grads);

  const long d_size = static_cast<long>(dataset.size());
  std::vector<int> perm(dataset.size());
  long perm_epoch = -1;
  NetCache<S> cache;

  for (long iter = r.opt.iter; iter < cfg.total_iters; ++iter) {
    const long epoch = iter / d_size;
    const long pos = iter % d_size;
    if (epoch != perm_epoch) {
      const std::uint64_t es = derive_seed(cfg.seed, kStreamShuffle, static_cast<std::uint64_t>(epoch));
      Rng srng(es);
      std::iota(perm.begin(), perm.end(), 0);
      for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i)
        std::swap(perm[i], perm[srng.uniform_int(i + 1)]);
      perm_epoch = epoch;
      r.log.epoch_seeds.emplace_back(epoch, es);
    }

    const Sample* sample = &dataset[perm[pos]];
    Sample augmented;
    if (cfg.augment) {
      Rng arng(derive_seed(cfg.seed, kStreamAugment, static_cast<std::uint64_t>(iter)));
      augmented = augment_sample(*sample, arng);
      sample = &augmented;
    }

    const Tensor4<S> x = to_network_input<S>(sample->rgb);
    const HalfResDepth gt = half_res_ground_truth(sample->depth, sample->valid);
    const LabelMap labels = labels_from_depth(gt.depth, gt.valid, cfg.binning);

    const Tensor4<S> scores = forward_train(x, r.params, cache);
    const Tensor4<S> probs = softmax(scores);
    const LossResult<S> loss = nll_loss(probs, labels);
    if (!std::isfinite(loss.loss))
      throw std::runtime_error("train: non-finite loss " + std::to_string(loss.loss) +
                               " at iteration " + std::to_string(iter) + " (sample '" +
                               sample->id + "')");

    NetParams<S> grads = backward(cache, r.params, loss.grad_scores);
    auto gviews = detail::param_views(grads);
    for (std::size_t j = 0; j < views.size(); ++j)
      for (std::size_t i = 0; i < acc[j].size(); ++i)
        acc[j][i] += static_cast<double>(gviews[j].data[i]);

    if (iter % cfg.log_every == 0 || iter == cfg.total_iters - 1)
      r.log.rows.push_back({iter, lr_at(iter, cfg), loss.loss});

    r.opt.iter = iter + 1;
    if (r.opt.iter % cfg.accum_steps == 0) {
      const double inv = 1.0 / static_cast<double>(cfg.accum_steps);
      for (std::size_t j = 0; j < views.size(); ++j)
        for (std::size_t i = 0; i < acc[j].size(); ++i) {
          mean_views[j].data[i] = static_cast<S>(acc[j][i] * inv);
          acc[j][i] = 0.0;
        }
      sgd_step(r.params, mean_grads, r.opt, cfg);
      if (callbacks && callbacks->on_checkpoint && cfg.checkpoint_every > 0 &&
          r.opt.iter % cfg.checkpoint_every == 0 && r.opt.iter < cfg.total_iters)
        callbacks->on_checkpoint(r.opt.iter, r.params, r.opt);
    }
  }
  return r;
}

}  // namespace mdepth
