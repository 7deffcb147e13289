#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mdepth/checkpoint.hpp"
#include "mdepth/config.hpp"
#include "mdepth/csv.hpp"
#include "mdepth/experiments.hpp"
#include "mdepth/gradcheck.hpp"
#include "mdepth/image_io.hpp"
#include "mdepth/pipeline.hpp"
#include "mdepth/synth.hpp"
#include "mdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace mdepth;

namespace {

// Training/inference scalar; oracles and gradient checks run at 64-bit.
using TrainScalar = float;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;

  RunConfig load() const {
    return config_path.empty() ? default_config(overrides) : load_config(config_path, overrides);
  }
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key=value config file");
  cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set seed=7")
      ->take_all();
}

void print_schema() {
  std::printf("%-18s %-8s %-14s %s\n", "key", "type", "default", "description");
  for (const auto& e : config_schema())
    std::printf("%-18s %-8s %-14s %s\n", e.key, e.type, e.def, e.desc);
}

std::vector<Sample> generate_dataset(const RunConfig& cfg) {
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) {
    SceneSpec spec = cfg.scene_spec();
    spec.seed = cfg.seed + static_cast<std::uint64_t>(i);  // per-sample seed
    Sample s = generate_scene(spec);
    char id[16];
    std::snprintf(id, sizeof id, "s%05d", i);
    s.id = id;
    if (cfg.fill_holes) {
      s.depth = fill_invalid(s.depth, s.valid);
      s.valid.array().setConstant(1);
    }
    samples.push_back(std::move(s));
  }
  if (cfg.offline_augment) {
    std::vector<Sample> expanded;
    expanded.reserve(samples.size() * 4);
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (int copy = 0; copy < 4; ++copy) {
        Rng rng(derive_seed(cfg.seed, kStreamAugment, i * 4 + copy));
        Sample a = augment_sample(samples[i], rng);
        a.id = samples[i].id + "_a" + std::to_string(copy);
        expanded.push_back(std::move(a));
      }
    return expanded;
  }
  return samples;
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir) {
  const RunConfig cfg = common.load();
  const std::vector<Sample> samples = generate_dataset(cfg);
  write_dataset(samples, out_dir);
  std::printf("wrote %zu samples to %s\n", samples.size(), out_dir.c_str());
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& data_dir, const std::string& out_path,
              std::string log_path, const std::string& resume_path) {
  const RunConfig cfg = common.load();
  const TrainConfig tc = cfg.train_config();
  const std::vector<Sample> dataset = read_dataset(data_dir);
  if (log_path.empty()) log_path = out_path + ".log.csv";

  TrainCallbacks<TrainScalar> cb;
  cb.on_checkpoint = [&](long iter, const NetParams<TrainScalar>& p,
                         const OptState<TrainScalar>& st) {
    CheckpointData<TrainScalar> ck;
    ck.params = p;
    ck.d_min = cfg.d_min;
    ck.d_max = cfg.d_max;
    ck.iter = st.iter;
    ck.has_opt = true;
    ck.velocity = st.velocity;
    save_checkpoint(out_path + ".iter" + std::to_string(iter), ck);
  };

  std::optional<ResumePoint<TrainScalar>> resume;
  if (!resume_path.empty()) {
    CheckpointData<TrainScalar> ck = load_checkpoint<TrainScalar>(resume_path);
    if (!ck.has_opt)
      throw std::runtime_error(resume_path + ": checkpoint carries no optimizer state, cannot resume");
    resume.emplace();
    resume->params = std::move(ck.params);
    resume->opt.velocity = std::move(ck.velocity);
    resume->opt.iter = ck.iter;
  }

  const TrainResult<TrainScalar> result =
      train<TrainScalar>(dataset, tc, &cb, resume ? &*resume : nullptr);

  CheckpointData<TrainScalar> final_ck;
  final_ck.params = result.params;
  final_ck.d_min = cfg.d_min;
  final_ck.d_max = cfg.d_max;
  final_ck.iter = result.opt.iter;
  final_ck.has_opt = true;
  final_ck.velocity = result.opt.velocity;
  save_checkpoint(out_path, final_ck);
  write_text_file(log_path, trainlog_csv(result.log));
  std::printf("trained %ld iters, checkpoint %s, log %s\n", result.opt.iter, out_path.c_str(),
              log_path.c_str());
  return 0;
}

int cmd_infer(const CommonOpts& common, const std::string& ckpt_path, const std::string& image_path,
              const std::string& out_path, const std::string& scores_path) {
  const RunConfig cfg = common.load();
  const CheckpointData<TrainScalar> ck = load_checkpoint<TrainScalar>(ckpt_path);
  const Binning binning = make_binning(ck.d_min, ck.d_max, ck.params.arch.k);
  const Tensor4<float> rgb = read_ppm(image_path);
  const Tensor4<TrainScalar> x = to_network_input<TrainScalar>(rgb);

  const Tensor4<double> depth = predict_depth(x, ck.params, binning, cfg.infer_rule());
  write_pfm(out_path, depth.cast<float>());
  std::printf("wrote %dx%d depth map to %s\n", depth.w(), depth.h(), out_path.c_str());

  if (!scores_path.empty()) {
    const auto pix = cfg.pixel_list();
    if (pix.empty())
      throw ConfigError("infer --scores needs config key 'pixels' (e.g. --set pixels=4,7;9,2)");
    const Tensor4<double> scores = forward_eval(x, ck.params).cast<double>();
    const Tensor4<double> probs = softmax(scores);
    std::vector<ScoreRow> rows;
    for (const auto& [px, py] : pix) {
      if (px < 0 || px >= probs.w() || py < 0 || py >= probs.h())
        throw std::runtime_error("infer: pixel (" + std::to_string(px) + "," + std::to_string(py) +
                                 ") outside the " + std::to_string(probs.w()) + "x" +
                                 std::to_string(probs.h()) + " score map");
      for (int k = 0; k < binning.k; ++k)
        rows.push_back({px, py, k, binning.w[k], probs(0, k, py, px)});
    }
    write_text_file(scores_path, scores_csv(rows));
    std::printf("wrote score distributions for %zu pixels to %s\n", pix.size(),
                scores_path.c_str());
  }
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& ckpt_path, const std::string& data_dir,
             const std::string& out_path) {
  const RunConfig cfg = common.load();
  const CheckpointData<TrainScalar> ck = load_checkpoint<TrainScalar>(ckpt_path);
  const Binning binning = make_binning(ck.d_min, ck.d_max, ck.params.arch.k);
  const std::vector<Sample> data = read_dataset(data_dir);
  const std::optional<double> cap =
      cfg.cap > 0.0 ? std::optional<double>(cfg.cap) : std::nullopt;
  const EvalResult ev = evaluate_model(ck.params, data, binning, cfg.infer_rule(), cap);
  const std::string csv = metrics_csv(ev.metrics);
  if (!out_path.empty()) write_text_file(out_path, csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_confusion(const CommonOpts& common, const std::string& ckpt_path,
                  const std::string& data_dir, const std::string& out_path) {
  const RunConfig cfg = common.load();
  const CheckpointData<TrainScalar> ck = load_checkpoint<TrainScalar>(ckpt_path);
  const Binning binning = make_binning(ck.d_min, ck.d_max, ck.params.arch.k);
  const std::vector<Sample> data = read_dataset(data_dir);
  const EvalResult ev = evaluate_model(ck.params, data, binning, InferRule::kHard);
  const ConfusionMatrix merged =
      cfg.merge == 1 ? ev.conf : [&] {
        // recompute with merging from the same label maps via count folding
        ConfusionMatrix m;
        m.k = ev.conf.k / cfg.merge;
        if (cfg.merge < 1 || ev.conf.k % cfg.merge != 0)
          throw ConfigError("confusion: merge factor does not divide K=" +
                            std::to_string(ev.conf.k));
        m.counts.assign(static_cast<std::size_t>(m.k) * m.k, 0);
        for (int r = 0; r < ev.conf.k; ++r)
          for (int c = 0; c < ev.conf.k; ++c)
            m.counts[static_cast<std::size_t>(r / cfg.merge) * m.k + c / cfg.merge] +=
                ev.conf.at(r, c);
        return m;
      }();
  const std::string csv = confusion_csv(merged);
  if (!out_path.empty()) write_text_file(out_path, csv);
  std::printf("%dx%d confusion matrix, %lld labeled pixels\n", merged.k, merged.k,
              static_cast<long long>(merged.total()));
  return 0;
}

int cmd_sweep_bins(const CommonOpts& common, const std::string& data_dir,
                   const std::string& eval_dir, const std::string& out_path) {
  const RunConfig cfg = common.load();
  const std::vector<Sample> train_set = read_dataset(data_dir);
  const std::vector<Sample> test_set = read_dataset(eval_dir);
  const std::vector<SweepRow> rows =
      bins_sweep<TrainScalar>(train_set, test_set, cfg.sweep_k_list(), cfg.train_config());
  const std::string csv = sweep_csv(rows);
  if (!out_path.empty()) write_text_file(out_path, csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_grad_check(const CommonOpts& common) {
  const RunConfig cfg = common.load();
  const GradCheckReport report = run_gradient_checks(cfg.seed);
  for (const auto& e : report.entries)
    std::printf("%-28s max rel err %.3e (tol %.0e) %s\n", e.name.c_str(), e.max_rel_err, e.tol,
                e.pass ? "ok" : "FAIL");
  std::printf("%d layer configurations checked: %s\n", report.layer_configs,
              report.all_pass ? "all gradients match finite differences" : "FAILURES above");
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Classification-based monocular depth estimation on procedural RGB-D scenes"};
  app.require_subcommand(0, 1);
  bool help_config = false;
  app.add_flag("--help-config", help_config, "print the config-file schema and exit");

  CommonOpts gen_opts, train_opts, infer_opts, eval_opts, conf_opts, sweep_opts, grad_opts;
  std::string out_dir, data_dir, out_path, log_path, resume_path, ckpt_path, image_path,
      scores_path, eval_dir;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic RGB-D dataset");
  add_common(gen, gen_opts);
  gen->add_option("-o,--out", out_dir, "output dataset directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train a model on a dataset directory");
  add_common(tr, train_opts);
  tr->add_option("--data", data_dir, "training dataset directory")->required();
  tr->add_option("-o,--out", out_path, "output checkpoint path")->required();
  tr->add_option("--log", log_path, "training-log CSV path (default <out>.log.csv)");
  tr->add_option("--resume", resume_path, "resume from a checkpoint with optimizer state");

  CLI::App* inf = app.add_subcommand("infer", "predict a depth map for one PPM image");
  add_common(inf, infer_opts);
  inf->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  inf->add_option("--image", image_path, "input PPM image")->required();
  inf->add_option("-o,--out", out_path, "output PFM depth map")->required();
  inf->add_option("--scores", scores_path, "score-distribution CSV for config 'pixels'");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(ev, eval_opts);
  ev->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  ev->add_option("--data", data_dir, "evaluation dataset directory")->required();
  ev->add_option("-o,--out", out_path, "metrics CSV path");

  CLI::App* cf = app.add_subcommand("confusion", "hard-max confusion matrix on a dataset");
  add_common(cf, conf_opts);
  cf->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  cf->add_option("--data", data_dir, "dataset directory")->required();
  cf->add_option("-o,--out", out_path, "confusion CSV path");

  CLI::App* sw = app.add_subcommand("sweep-bins", "train and evaluate across bin counts");
  add_common(sw, sweep_opts);
  sw->add_option("--data", data_dir, "training dataset directory")->required();
  sw->add_option("--eval-data", eval_dir, "held-out dataset directory")->required();
  sw->add_option("-o,--out", out_path, "sweep CSV path");

  CLI::App* gc = app.add_subcommand("grad-check", "run the finite-difference gradient suite");
  add_common(gc, grad_opts);

  CLI11_PARSE(app, argc, argv);

  if (help_config) {
    print_schema();
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::fputs(app.help().c_str(), stdout);
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_opts, out_dir);
    if (tr->parsed()) return cmd_train(train_opts, data_dir, out_path, log_path, resume_path);
    if (inf->parsed()) return cmd_infer(infer_opts, ckpt_path, image_path, out_path, scores_path);
    if (ev->parsed()) return cmd_eval(eval_opts, ckpt_path, data_dir, out_path);
    if (cf->parsed()) return cmd_confusion(conf_opts, ckpt_path, data_dir, out_path);
    if (sw->parsed()) return cmd_sweep_bins(sweep_opts, data_dir, eval_dir, out_path);
    if (gc->parsed()) return cmd_grad_check(grad_opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
