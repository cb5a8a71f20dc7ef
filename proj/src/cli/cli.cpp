#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "mixerbench/bench.hpp"
#include "mixerbench/cli.hpp"
#include "mixerbench/kernels.hpp"
#include "mixerbench/train.hpp"

#ifndef MIXERBENCH_VERSION
#define MIXERBENCH_VERSION "unknown"
#endif

namespace mixerbench {

namespace fs = std::filesystem;

namespace {

// Flag spellings per config key; the first one is the key itself.
const std::vector<std::pair<std::string, std::string>> kModelFlags = {
    {"backbone", "--backbone"},
    {"mixer", "--mixer"},
    {"spatial_rank", "--spatial_rank,--rank"},
    {"patch_size", "--patch_size,--patch"},
    {"window_size", "--window_size,--window"},
    {"embed_dim", "--embed_dim,--dim"},
    {"depth", "--depth"},
    {"num_heads", "--num_heads,--heads"},
    {"shift_enabled", "--shift_enabled,--shift"},
    {"pos_embed", "--pos_embed"},
};

struct ModelFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;

  void attach(CLI::App* app, bool with_patch = true, bool with_window = true) {
    for (const auto& [key, names] : kModelFlags) {
      if ((key == "patch_size" && !with_patch) || (key == "window_size" && !with_window)) continue;
      options[key] = app->add_option(names, values[key], "model config: " + key);
    }
    app->add_option("--config", config_path, "model config file (key = value lines)");
  }

  ModelConfig build() const {
    auto given = [&](const std::string& key) {
      const auto it = options.find(key);
      return it != options.end() && it->second->count() > 0;
    };
    ModelConfig c;
    if (!config_path.empty())
      c = ModelConfig::load(config_path);
    else if (given("backbone") && values.at("backbone") == "swin")
      c = default_swin_config();
    for (const auto& [key, names] : kModelFlags)
      if (given(key)) c.set(key, values.at(key));
    return c;
  }
};

Shape parse_extents(const std::string& text, int rank) {
  Shape e;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      e.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("--extent: cannot parse '" + text + "'");
    }
  }
  if (e.size() == 1) e.assign(static_cast<std::size_t>(rank), e[0]);
  if (static_cast<int>(e.size()) != rank)
    throw ConfigError("--extent gives " + std::to_string(e.size()) + " extents for spatial rank " +
                      std::to_string(rank));
  return e;
}

std::string join(const std::vector<std::string>& args) {
  std::string s;
  for (const auto& a : args) s += (s.empty() ? "" : " ") + a;
  return s;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& args, std::uint64_t config_hash,
                    std::uint64_t seed, const std::vector<std::string>& artifacts) {
  nlohmann::json j;
  j["command_line"] = join(args);
  j["config_hash"] = hex(config_hash);
  j["seed"] = seed;
  j["threads"] = kernels::max_threads();
  j["tool_version"] = MIXERBENCH_VERSION;
  std::vector<std::string> rel;
  for (const auto& a : artifacts) rel.push_back(fs::path(a).lexically_relative(dir).string());
  j["artifacts"] = rel;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

std::vector<std::string> list_outputs(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

struct Common {
  std::string out;
  std::string extent;
  std::int64_t channels = 1;
  std::uint64_t seed = 0;
};

struct TimingFlags {
  int trials = 10;
  int warmup = 3;
  double budget_gb = 4.0;
  void attach(CLI::App* app) {
    app->add_option("--trials", trials, "timed trials per cell")->check(CLI::PositiveNumber);
    app->add_option("--warmup", warmup, "discarded warmup runs")->check(CLI::NonNegativeNumber);
    app->add_option("--budget-gb", budget_gb, "simulated memory budget (0 = none)")->check(CLI::NonNegativeNumber);
  }
  TimingOptions options() const {
    TimingOptions t;
    t.trials = trials;
    t.warmup = warmup;
    t.memory_budget = static_cast<std::size_t>(budget_gb * static_cast<double>(std::size_t{1} << 30));
    return t;
  }
};

std::vector<MixerKind> parse_mixers(const std::vector<std::string>& names) {
  std::vector<MixerKind> out;
  for (const auto& n : names) out.push_back(parse_mixer(n));
  return out;
}

void print_speedups(const std::vector<BenchRecord>& records) {
  std::map<std::int64_t, double> attention;
  for (const auto& r : records)
    if (r.config.mixer == MixerKind::attention && r.status == "ok") attention[r.context_length] = r.mean_time_s;
  for (const auto& r : records) {
    std::printf("%-5s %-13s tokens %6lld  ", backbone_name(r.config.backbone), mixer_name(r.config.mixer),
                static_cast<long long>(r.context_length));
    if (r.status != "ok") {
      std::printf("%s\n", r.status.c_str());
      continue;
    }
    std::printf("%.5f s  peak %zu B", r.mean_time_s, r.peak_bytes);
    const auto it = attention.find(r.context_length);
    if (r.config.mixer != MixerKind::attention && it != attention.end())
      std::printf("  speedup %+.2f%%", speedup(it->second, r.mean_time_s));
    std::printf("\n");
  }
}

// --- train / eval task settings ---------------------------------------------------

struct TaskFlags {
  std::string task;
  std::int64_t samples = 100;
  std::int64_t classes = 3;
  double positive_rate = 0.15;
};

std::function<TaskSample(std::uint64_t)> make_generator(const TaskFlags& t, const Shape& extents,
                                                        std::int64_t channels) {
  switch (parse_task(t.task)) {
    case TaskKind::segmentation: {
      SegmentationSpec s;
      s.extents = extents;
      s.channels = channels;
      s.num_classes = t.classes;
      return [s](std::uint64_t seed) { return gen_segmentation(seed, s); };
    }
    case TaskKind::denoising: {
      DenoisingSpec s;
      s.extents = extents;
      s.channels = channels;
      return [s](std::uint64_t seed) { return gen_denoising(seed, s); };
    }
    case TaskKind::classification: {
      ClassificationSpec s;
      s.extents = extents;
      s.channels = channels;
      s.positive_rate = t.positive_rate;
      return [s](std::uint64_t seed) { return gen_classification(seed, s); };
    }
  }
  throw ConfigError("unknown task");
}

HeadSpec head_for(TaskKind kind, std::int64_t channels, std::int64_t classes) {
  switch (kind) {
    case TaskKind::segmentation: return {HeadKind::pixel, classes};
    case TaskKind::denoising: return {HeadKind::pixel, channels};
    case TaskKind::classification: return {HeadKind::classification, 2};
  }
  return {};
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void report_eval(const EvalReport& r, std::ostream& os) {
  os << r.metric << " " << r.ci.point << "  95% CI [" << r.ci.lo << ", " << r.ci.hi << "]";
  if (r.kind == TaskKind::denoising) os << "  (noisy input " << r.baseline << ")";
  os << '\n';
}

nlohmann::json eval_json(const EvalReport& r) {
  nlohmann::json j;
  j["task"] = task_name(r.kind);
  j["metric"] = r.metric;
  j["value"] = r.ci.point;
  j["ci95"] = {r.ci.lo, r.ci.hi};
  j["samples"] = r.per_sample.size();
  if (r.kind == TaskKind::denoising) j["noisy_input_ssim"] = r.baseline;
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"mixerbench: token mixers in ViT/Swin backbones, synthetic tasks and context-length benchmarks",
               "mixerbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MIXERBENCH_VERSION);

  // bench
  auto* bench = app.add_subcommand("bench", "time forward+backward of one backbone config");
  ModelFlags bench_model;
  Common bench_common;
  TimingFlags bench_timing;
  bench_model.attach(bench);
  bench_timing.attach(bench);
  bench->add_option("--extent", bench_common.extent, "image extent, one value or one per axis")->required();
  bench->add_option("--channels", bench_common.channels, "image channels");
  bench->add_option("--seed", bench_common.seed, "weights and input seed");
  bench->add_option("--out", bench_common.out, "output directory")->required();

  // sweep-context
  auto* sweep = app.add_subcommand("sweep-context", "patch (vit) or window (swin) sweep across mixers");
  ModelFlags sweep_model;
  Common sweep_common;
  TimingFlags sweep_timing;
  std::vector<std::string> sweep_mixers{"attention", "hyena", "mamba_vision"};
  std::vector<std::int64_t> sweep_sizes;
  bool shift_ablation = false, no_plots = false;
  sweep_model.attach(sweep, false, false);
  sweep_timing.attach(sweep);
  sweep->add_option("--extent", sweep_common.extent, "image extent, one value or one per axis")->required();
  sweep->add_option("--channels", sweep_common.channels, "image channels");
  sweep->add_option("--seed", sweep_common.seed, "weights and input seed");
  sweep->add_option("--mixers", sweep_mixers, "mixers to sweep")->delimiter(',');
  sweep->add_option("--sizes", sweep_sizes, "patch sizes (vit) or window sizes (swin) to sweep")->delimiter(',');
  sweep->add_flag("--shift-ablation", shift_ablation, "swin: also run attention with the shift on and off");
  sweep->add_flag("--no-plots", no_plots, "skip the SVG plots");
  sweep->add_option("--out", sweep_common.out, "output directory")->required();

  // train
  auto* trn = app.add_subcommand("train", "train a model on a synthetic task");
  ModelFlags train_model;
  Common train_common;
  TaskFlags train_task;
  TrainConfig tc;
  std::string loss_name;
  bool no_augment = false;
  train_model.attach(trn);
  trn->add_option("--task", train_task.task, "segmentation | denoising | classification")->required();
  trn->add_option("--extent", train_common.extent, "image extent (default 64 in 2D, 32 in 3D)");
  trn->add_option("--channels", train_common.channels, "image channels");
  trn->add_option("--samples", train_task.samples, "dataset size, split 60/20/20");
  trn->add_option("--classes", train_task.classes, "segmentation classes including background");
  trn->add_option("--positive-rate", train_task.positive_rate, "classification positive rate");
  trn->add_option("--epochs", tc.epochs, "epoch budget");
  trn->add_option("--max-steps", tc.max_steps, "step cap (0 = none)");
  trn->add_option("--batch-size", tc.batch_size, "samples per step");
  trn->add_option("--lr,--max-lr", tc.max_lr, "one-cycle peak learning rate");
  trn->add_option("--pct-warmup", tc.pct_warmup, "fraction of steps spent warming up");
  trn->add_option("--eval-every", tc.eval_every, "validation interval in steps (0 = per epoch)");
  trn->add_flag("--no-augment", no_augment, "disable augmentation");
  trn->add_option("--seed", train_common.seed, "data, init and shuffle seed");
  trn->add_option("--out", train_common.out, "output directory")->required();

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate a trained run on its test split with bootstrap CIs");
  std::string run_dir, eval_out;
  std::size_t n_boot = 1000;
  evl->add_option("--run", run_dir, "directory written by train")->required();
  evl->add_option("--n-boot", n_boot, "bootstrap resamples");
  evl->add_option("--out", eval_out, "output directory")->required();

  // selftest
  auto* self = app.add_subcommand("selftest", "oracle equivalence and gradient checks");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << MIXERBENCH_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "mixerbench: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  kernels::apply_thread_env();
  try {
    if (*bench) {
      const auto cfg = bench_model.build();
      const auto extents = parse_extents(bench_common.extent, cfg.spatial_rank);
      SweepSpec spec;
      spec.cells.push_back({cfg, extents});
      spec.timing = bench_timing.options();
      spec.in_channels = bench_common.channels;
      spec.seed = bench_common.seed;
      const auto recs = run_sweep(spec, bench_common.out, false);
      print_speedups(recs);
      write_manifest(bench_common.out, args, cfg.hash(), bench_common.seed, list_outputs(bench_common.out));
      return recs.front().status.rfind("error", 0) == 0 ? 1 : 0;
    }
    if (*sweep) {
      const auto base = sweep_model.build();
      const auto extents = parse_extents(sweep_common.extent, base.spatial_rank);
      const auto mixers = parse_mixers(sweep_mixers);
      SweepSpec spec = base.backbone == Backbone::vit
                           ? (sweep_sizes.empty() ? vit_patch_sweep(base, extents, mixers)
                                                  : vit_patch_sweep(base, extents, mixers, sweep_sizes))
                           : (sweep_sizes.empty() ? swin_window_sweep(base, extents, mixers)
                                                  : swin_window_sweep(base, extents, mixers, sweep_sizes));
      spec.timing = sweep_timing.options();
      spec.in_channels = sweep_common.channels;
      spec.seed = sweep_common.seed;
      const auto recs = run_sweep(spec, sweep_common.out, !no_plots);
      print_speedups(recs);
      if (shift_ablation) {
        if (base.backbone != Backbone::swin) throw ConfigError("--shift-ablation needs --backbone swin");
        const auto a = run_shift_ablation(base, extents, sweep_common.channels, spec.timing, sweep_common.seed,
                                          sweep_common.out);
        std::printf("shift ablation: shifted %s %.5f s, unshifted %s %.5f s, output max |diff| %.3e\n",
                    a.shifted.status.c_str(), a.shifted.mean_time_s, a.unshifted.status.c_str(),
                    a.unshifted.mean_time_s, a.output_max_abs_diff);
      }
      write_manifest(sweep_common.out, args, base.hash(), sweep_common.seed, list_outputs(sweep_common.out));
      return 0;
    }
    if (*trn) {
      const auto cfg = train_model.build();
      cfg.validate();
      const auto kind = parse_task(train_task.task);
      const auto extents = parse_extents(
          train_common.extent.empty() ? (cfg.spatial_rank == 2 ? "64" : "32") : train_common.extent,
          cfg.spatial_rank);
      tc.seed = train_common.seed;
      tc.augment = !no_augment;
      tc.loss_kind = kind == TaskKind::denoising ? LossKind::denoise : LossKind::cross_entropy;
      const auto data =
          make_dataset(make_generator(train_task, extents, train_common.channels),
                       static_cast<std::size_t>(train_task.samples), train_common.seed * 1000003ULL);
      Model model(cfg, train_common.channels, extents, head_for(kind, train_common.channels, train_task.classes),
                  train_common.seed);
      const auto result = train(model, data, tc);

      const fs::path out(train_common.out);
      fs::create_directories(out);
      save_checkpoint((out / "checkpoint.ckpt").string(), result.best);
      write_curves_csv((out / "curves.csv").string(), result.curve);
      {
        std::ofstream f(out / "config.txt");
        f << cfg.to_text();
        std::ofstream t(out / "task.txt");
        t << "task = " << task_name(kind) << "\nextent = ";
        for (std::size_t i = 0; i < extents.size(); ++i) t << (i ? "," : "") << extents[i];
        t << "\nchannels = " << train_common.channels << "\nsamples = " << train_task.samples
          << "\nclasses = " << train_task.classes << "\npositive_rate = " << train_task.positive_rate
          << "\nseed = " << train_common.seed << '\n';
      }
      const Model& m = model;
      const auto rep = evaluate([&](const Tensor& x) { return m.forward(x); }, data.test, 200, train_common.seed);
      std::printf("steps %lld, best val loss %.6f at step %lld\ntest ", static_cast<long long>(result.total_steps),
                  result.best.val_loss, static_cast<long long>(result.best.step));
      report_eval(rep, std::cout);
      write_manifest(out, args, cfg.hash(), train_common.seed, list_outputs(out));
      return 0;
    }
    if (*evl) {
      const fs::path run(run_dir);
      const auto cfg = ModelConfig::load((run / "config.txt").string());
      auto kv = read_key_values(run / "task.txt");
      TaskFlags task;
      task.task = kv.at("task");
      task.samples = std::stoll(kv.at("samples"));
      task.classes = std::stoll(kv.at("classes"));
      task.positive_rate = std::stod(kv.at("positive_rate"));
      const auto channels = std::stoll(kv.at("channels"));
      const auto seed = static_cast<std::uint64_t>(std::stoull(kv.at("seed")));
      const auto extents = parse_extents(kv.at("extent"), cfg.spatial_rank);
      const auto ckpt = load_checkpoint((run / "checkpoint.ckpt").string());
      if (ckpt.config_hash != cfg.hash())
        throw ConfigError("checkpoint config hash " + hex(ckpt.config_hash) + " does not match config.txt " +
                          hex(cfg.hash()));
      Model model(cfg, channels, extents, head_for(parse_task(task.task), channels, task.classes), seed);
      restore(model.parameters(), ckpt);
      const auto data = make_dataset(make_generator(task, extents, channels), static_cast<std::size_t>(task.samples),
                                     seed * 1000003ULL);
      const Model& m = model;
      const auto rep = evaluate([&](const Tensor& x) { return m.forward(x); }, data.test, n_boot, seed);
      report_eval(rep, std::cout);
      const fs::path out(eval_out);
      fs::create_directories(out);
      std::ofstream(out / "eval.json") << eval_json(rep).dump(2) << '\n';
      write_manifest(out, args, cfg.hash(), seed, list_outputs(out));
      return 0;
    }
    if (*self) {
      const auto checks = run_selftest(std::cout);
      const auto failed = std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; });
      std::printf("%zu checks, %ld failed\n", checks.size(), static_cast<long>(failed));
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "mixerbench: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace mixerbench
