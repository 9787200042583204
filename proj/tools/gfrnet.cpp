// Command-line front end: training, inference, evaluation, gradient
// checking, synthetic dataset generation, and ablation sweeps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gfrnet/checkpoint.hpp"
#include "gfrnet/config.hpp"
#include "gfrnet/gradcheck.hpp"
#include "gfrnet/metrics.hpp"
#include "gfrnet/pnm.hpp"
#include "gfrnet/train.hpp"

namespace fs = std::filesystem;
using namespace gfrnet;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.preset.empty()) cfg = RunConfig::preset(opts.preset);
  if (!opts.config_path.empty()) cfg = RunConfig::from_json_file(opts.config_path);
  if (opts.seed_set) {
    cfg.train.seed = opts.seed;
    cfg.synth.seed = opts.seed;
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--preset", opts.preset, "built-in preset: toy or paper");
  cmd->add_option("--seed", opts.seed, "override seeds")->each([&opts](const std::string&) {
    opts.seed_set = true;
  });
}

GfrNet<float> build_model(const RunConfig& cfg) {
  Rng rng(cfg.train.seed);
  return GfrNet<float>(cfg.encoder(), cfg.variant_config(), cfg.slices, rng);
}

int cmd_train(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  Dataset data = cfg.dataset();
  GfrNet<float> model = build_model(cfg);
  ParamRegistry<float> reg;
  model.collect(reg);
  Adam<float> opt;

  const std::string cfg_json = cfg.to_json();
  auto on_epoch = [&](int epoch) {
    if (!cfg.checkpoint_path.empty())
      save_checkpoint(cfg.checkpoint_path, reg, &opt, epoch + 1, cfg_json);
  };
  auto on_iter = [](const TrainRecord& r) {
    std::printf("iter %4d epoch %3d lr %.3e loss %.6f\n", r.iteration, r.epoch, double(r.lr),
                r.loss);
  };
  auto log = train_loop(model, data, cfg.train, opt, 0, on_epoch, on_iter);
  if (!log.empty())
    std::printf("done: %zu iterations, first loss %.4f, last loss %.4f\n", log.size(),
                log.front().loss, log.back().loss);
  return 0;
}

int cmd_infer(const CommonOpts& opts, const std::string& ckpt_path, const std::string& sample_dir,
              const std::string& out_dir) {
  RunConfig cfg = RunConfig::from_json_text(read_checkpoint_config(ckpt_path));
  if (opts.seed_set) cfg.train.seed = opts.seed;
  GfrNet<float> model = build_model(cfg);
  ParamRegistry<float> reg;
  model.collect(reg);
  load_checkpoint(ckpt_path, reg, nullptr);

  Dataset data = Dataset::from_dir(sample_dir, cfg.slices);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < data.size(); ++i) {
    Sample s = data.get(i);
    auto out = model.forward(s.aif, s.depth, s.slices, Phase::eval);
    save_pnm(out.final_map(), (fs::path(out_dir) / (s.id + ".pgm")).string());
    std::printf("wrote %s.pgm\n", s.id.c_str());
  }
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& report_path) {
  if (!fs::is_directory(pred_dir)) throw DataError(pred_dir + ": not a directory");
  if (!fs::is_directory(gt_dir)) throw DataError(gt_dir + ": not a directory");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.path().extension() == ".pgm") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw DataError(pred_dir + ": no .pgm predictions found");

  std::vector<std::string> unpaired;
  std::vector<SampleMetrics> rows;
  for (const auto& id : ids) {
    fs::path flat = fs::path(gt_dir) / (id + ".pgm");
    fs::path nested = fs::path(gt_dir) / id / "gt.pgm";
    fs::path gt_path = fs::exists(flat) ? flat : nested;
    if (!fs::exists(gt_path)) {
      unpaired.push_back(id);
      continue;
    }
    TensorF pred = load_pnm((fs::path(pred_dir) / (id + ".pgm")).string());
    TensorF gt = load_pnm(gt_path.string());
    rows.push_back(evaluate_sample(id, pred, gt));
  }
  if (!unpaired.empty()) {
    std::string list;
    for (const auto& id : unpaired) list += (list.empty() ? "" : ", ") + id;
    throw DataError("missing ground truth for: " + list);
  }
  EvalReport rep = aggregate(std::move(rows));
  std::fputs(report_text(rep).c_str(), stdout);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report_json(rep) << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  // Toy shapes: 3 slices, 8 channels, 16x16 features.
  const int C = 8, N = 3, H = 16, W = 16;
  Rng rng(seed ? seed : 1);
  TensorD guide({1, C, H, W}), f_fs({N, C, H, W});
  normal_fill(guide, rng);
  normal_fill(f_fs, rng);

  double worst = 0.0;
  auto report = [&worst](const char* block, const GradCheckReport& r) {
    std::printf("%-12s max rel err %.3e (%zu probes)\n", block, r.max_rel_err,
                std::size_t(r.probes));
    worst = std::max(worst, r.max_rel_err);
  };

  {
    Arm<double> arm(C, N, FfMode::sum_max, rng);
    auto fn = [&](const TensorD& x) {
      TensorD out = arm.forward(guide, x, Phase::eval);
      return sum_all(mul(out, out));
    };
    report("arm", grad_check_multi<double>(fn, f_fs, {1e-4, 1e-5}, 60, 2));
  }
  {
    Drm<double> drm(C, N, FfMode::sum_max, rng);
    auto fn = [&](const TensorD& x) {
      TensorD out = drm.forward(guide, x, Phase::eval);
      return sum_all(mul(out, out));
    };
    report("drm", grad_check_multi<double>(fn, f_fs, {1e-4, 1e-5}, 60, 3));
  }
  {
    Grfm<double> grfm(C, N, VariantConfig::named("Full"), rng);
    TensorD fd({1, C, H, W});
    normal_fill(fd, rng);
    auto fn = [&](const TensorD& x) {
      TensorD out = grfm.forward(guide, fd, x, Phase::eval);
      return sum_all(mul(out, out));
    };
    report("grfm", grad_check_multi<double>(fn, f_fs, {1e-4, 1e-5}, 60, 4));
  }
  {
    Decoder<double> dec(C, rng);
    std::array<TensorD, 4> feats = {TensorD({1, C, 16, 16}), TensorD({1, C, 8, 8}),
                                    TensorD({1, C, 4, 4}), TensorD({1, C, 2, 2})};
    for (auto& f : feats) normal_fill(f, rng);
    auto fn = [&](const TensorD& x) {
      auto fs_ = feats;
      fs_[0] = x;
      auto preds = dec.forward(fs_, 16, 16, Phase::eval);
      TensorD acc = sum_all(preds[0]);
      for (int k = 1; k < 4; ++k) acc = add(acc, sum_all(preds[k]));
      return acc;
    };
    report("decoder", grad_check_multi<double>(fn, feats[0], {1e-4, 1e-5}, 60, 5));
  }
  {
    TensorD gt({1, 1, H, W});
    std::uniform_int_distribution<int> coin(0, 1);
    for (auto& v : gt.data()) v = double(coin(rng));
    TensorD raw({1, 1, H, W});
    normal_fill(raw, rng);
    auto fn = [&](const TensorD& x) {
      return total_loss(std::vector<TensorD>(6, sigmoid(x)), gt);
    };
    report("total_loss", grad_check_multi<double>(fn, raw, {1e-5, 1e-6}, 60, 6));
  }

  std::printf("worst over all blocks: %.3e (%s)\n", worst, worst < 1e-3 ? "PASS" : "FAIL");
  if (worst >= 1e-3) throw NumericError("gradient check failed");
  return 0;
}

int cmd_synth(const CommonOpts& opts, const std::string& out_dir, int count) {
  RunConfig cfg = resolve_config(opts);
  SynthSpec spec = cfg.synth;
  if (count > 0) spec.count = count;
  fs::create_directories(out_dir);
  for (int i = 0; i < spec.count; ++i) save_sample(synthesize_sample(spec, i), out_dir);
  std::printf("wrote %d samples to %s\n", spec.count, out_dir.c_str());
  return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::vector<std::string>& variants, int iterations) {
  RunConfig base = resolve_config(opts);
  if (iterations > 0) base.train.max_iterations = iterations;
  std::printf("variant    F_max   S_a     E_max   MAE     final_loss\n");
  for (const auto& name : variants) {
    RunConfig cfg = base;
    cfg.variant = name;
    cfg.validate();
    Dataset data = cfg.dataset();
    GfrNet<float> model = build_model(cfg);
    Adam<float> opt;
    auto log = train_loop(model, data, cfg.train, opt);

    std::vector<SampleMetrics> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Sample s = data.get(i);
      auto out = model.forward(s.aif, s.depth, s.slices, Phase::eval);
      rows.push_back(evaluate_sample(s.id, out.final_map(), s.gt));
    }
    EvalReport rep = aggregate(std::move(rows));
    std::printf("%-10s %.4f  %.4f  %.4f  %.4f  %.4f\n", name.c_str(), rep.f_beta_max, rep.s_alpha,
                rep.e_phi_max, rep.mae, log.empty() ? 0.0 : log.back().loss);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guided focal-stack refinement network for light-field saliency"};
  app.require_subcommand(1);

  CommonOpts train_opts, synth_opts, ablate_opts, infer_opts;
  std::string ckpt_path, sample_dir, out_dir, pred_dir, gt_dir, report_path;
  std::uint64_t gc_seed = 1;
  int synth_count = 0, ablate_iters = 0;
  std::vector<std::string> variants;

  add_common(app.add_subcommand("train", "train a model"), train_opts);

  CLI::App* infer = app.add_subcommand("infer", "run inference from a checkpoint");
  add_common(infer, infer_opts);
  infer->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  infer->add_option("--data", sample_dir, "sample directory")->required();
  infer->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--pred", pred_dir, "directory of predicted .pgm maps")->required();
  eval->add_option("--gt", gt_dir, "ground-truth directory")->required();
  eval->add_option("--report", report_path, "write a JSON report here");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--seed", gc_seed, "rng seed");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_opts);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--count", synth_count, "number of samples");

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare model variants");
  add_common(ablate, ablate_opts);
  ablate->add_option("--variants", variants, "variant names (e.g. Full M0 V0)")
      ->required()
      ->delimiter(',');
  ablate->add_option("--iterations", ablate_iters, "training iteration cap per variant");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand("train")) return cmd_train(train_opts);
    if (app.got_subcommand("infer")) return cmd_infer(infer_opts, ckpt_path, sample_dir, out_dir);
    if (app.got_subcommand("eval")) return cmd_eval(pred_dir, gt_dir, report_path);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(gc_seed);
    if (app.got_subcommand("synth")) return cmd_synth(synth_opts, out_dir, synth_count);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_opts, variants, ablate_iters);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
