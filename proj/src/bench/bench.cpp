#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "mixerbench/bench.hpp"
#include "mixerbench/ops.hpp"

namespace mixerbench {

namespace {

Tensor bench_input(std::int64_t channels, const Shape& extents, DType dtype, std::uint64_t seed) {
  Shape shape{channels};
  shape.insert(shape.end(), extents.begin(), extents.end());
  Rng rng(seed ^ 0x5eedULL);
  return init_normal(rng, shape, 1.0, dtype);
}

void fwd_bwd(const Model& model, const Tensor& input) {
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(&tape);
    loss = sum(model.backbone(input));
  }
  tape.backward(loss);
}

}  // namespace

std::size_t peak_memory(const Model& model, const Tensor& input) {
  const std::size_t baseline = alloc_stats().current_bytes;
  reset_peak();
  fwd_bwd(model, input);
  return alloc_stats().peak_bytes - baseline;
}

BenchRecord time_fwd_bwd(const Model& model, const Tensor& input, const TimingOptions& options) {
  if (options.trials < 1 || options.warmup < 0) throw ConfigError("timing needs trials >= 1 and warmup >= 0");
  BenchRecord r;
  r.config = model.config();
  r.extents = model.extents();
  r.context_length = context_length(r.config, r.extents);
  MemoryBudgetScope budget(options.memory_budget);
  FiniteCheckScope no_checks(false);
  try {
    // The first pass doubles as the instrumented one; counts are deterministic.
    reset_flop_counter();
    r.peak_bytes = peak_memory(model, input);
    r.flops = flop_counter();
    for (int i = 1; i < options.warmup; ++i) fwd_bwd(model, input);
    for (int i = 0; i < options.trials; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      fwd_bwd(model, input);
      r.trial_times_s.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    r.mean_time_s = std::accumulate(r.trial_times_s.begin(), r.trial_times_s.end(), 0.0) /
                    static_cast<double>(r.trial_times_s.size());
  } catch (const MemoryBudgetExceeded&) {
    r.status = "X";
    r.trial_times_s.clear();
    r.mean_time_s = 0;
  }
  return r;
}

BenchRecord bench_config(const ModelConfig& config, const Shape& extents, std::int64_t in_channels,
                         const TimingOptions& options, std::uint64_t seed) {
  BenchRecord failed;
  failed.config = config;
  failed.extents = extents;
  try {
    failed.context_length = context_length(config, extents);
    std::optional<Model> model;
    Tensor input;
    {
      MemoryBudgetScope budget(options.memory_budget);
      model.emplace(config, in_channels, extents, HeadSpec{}, seed);
      input = bench_input(in_channels, extents, model->dtype(), seed);
    }
    return time_fwd_bwd(*model, input, options);
  } catch (const MemoryBudgetExceeded&) {
    failed.status = "X";
  } catch (const Error& e) {
    failed.status = std::string("error: ") + e.what();
  }
  return failed;
}

SlopeFit fit_loglog_slope(std::span<const double> n, std::span<const double> t) {
  if (n.size() != t.size()) throw ShapeError("fit_loglog_slope: n and t differ in length");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0 && t[i] > 0)) throw Error("fit_loglog_slope: values must be positive");
    x.push_back(std::log(n[i]));
    y.push_back(std::log(t[i]));
  }
  std::vector<double> distinct(x);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3) throw Error("fit_loglog_slope: needs at least 3 distinct context lengths");

  const double k = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  SlopeFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss += e * e;
  }
  f.residual = std::sqrt(ss / k);
  return f;
}

SlopeFit fit_loglog_slope(std::span<const BenchRecord> records) {
  std::vector<double> n, t;
  for (const auto& r : records)
    if (r.status == "ok") {
      n.push_back(static_cast<double>(r.context_length));
      t.push_back(r.mean_time_s);
    }
  return fit_loglog_slope(n, t);
}

double speedup(double t_attention, double t_alternative) {
  if (!(t_attention > 0)) throw Error("speedup: attention time must be positive");
  return (t_attention - t_alternative) / t_attention * 100.0;
}

SweepSpec vit_patch_sweep(const ModelConfig& base, const Shape& extents, std::vector<MixerKind> mixers,
                          std::vector<std::int64_t> patches) {
  SweepSpec s;
  for (auto m : mixers)
    for (auto p : patches) {
      ModelConfig c = base;
      c.backbone = Backbone::vit;
      c.mixer = m;
      c.patch_size = p;
      c.spatial_rank = static_cast<int>(extents.size());
      c.shift_enabled = c.shift_enabled && m == MixerKind::attention;
      s.cells.push_back({c, extents});
    }
  return s;
}

SweepSpec swin_window_sweep(const ModelConfig& base, const Shape& extents, std::vector<MixerKind> mixers,
                            std::vector<std::int64_t> windows) {
  SweepSpec s;
  for (auto m : mixers)
    for (auto w : windows) {
      ModelConfig c = base;
      c.backbone = Backbone::swin;
      c.mixer = m;
      c.window_size = w;
      c.spatial_rank = static_cast<int>(extents.size());
      c.shift_enabled = c.shift_enabled && m == MixerKind::attention;
      s.cells.push_back({c, extents});
    }
  return s;
}

std::string bench_csv_row(const BenchRecord& r) {
  std::ostringstream o;
  o.precision(9);
  std::string status = r.status;
  std::replace(status.begin(), status.end(), ',', ';');
  std::replace(status.begin(), status.end(), '\n', ' ');
  o << backbone_name(r.config.backbone) << ',' << mixer_name(r.config.mixer) << ',' << r.extents.size() << ','
    << r.config.patch_size << ',' << (r.config.backbone == Backbone::swin ? r.config.window_size : 0) << ','
    << r.context_length << ',' << r.mean_time_s << ',' << r.peak_bytes << ',' << r.flops << ',' << status;
  return o.str();
}

void write_bench_csv(const std::string& path, std::span<const BenchRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << kBenchCsvHeader << '\n';
  for (const auto& r : records) out << bench_csv_row(r) << '\n';
}

std::vector<BenchRecord> run_sweep(const SweepSpec& spec, const std::string& out_dir, bool plots) {
  std::filesystem::create_directories(out_dir);
  const auto csv = (std::filesystem::path(out_dir) / "bench.csv").string();
  std::vector<BenchRecord> records;
  for (const auto& cell : spec.cells) {
    records.push_back(bench_config(cell.config, cell.extents, spec.in_channels, spec.timing, spec.seed));
    write_bench_csv(csv, records);  // partial results survive a later failure
  }
  if (plots) write_plots(out_dir, records);
  return records;
}

ShiftAblation run_shift_ablation(const ModelConfig& base, const Shape& extents, std::int64_t in_channels,
                                 const TimingOptions& options, std::uint64_t seed, const std::string& out_dir) {
  ModelConfig on = base;
  on.backbone = Backbone::swin;
  on.mixer = MixerKind::attention;
  on.spatial_rank = static_cast<int>(extents.size());
  on.shift_enabled = true;
  ModelConfig off = on;
  off.shift_enabled = false;

  ShiftAblation a;
  Model m_on(on, in_channels, extents, HeadSpec{}, seed);
  Model m_off(off, in_channels, extents, HeadSpec{}, seed);
  const auto input = bench_input(in_channels, extents, m_on.dtype(), seed);
  {
    TapeScope pause(nullptr);
    const auto y_on = m_on.backbone(input).to_vector();
    const auto y_off = m_off.backbone(input).to_vector();
    for (std::size_t i = 0; i < y_on.size(); ++i)
      a.output_max_abs_diff = std::max(a.output_max_abs_diff, std::abs(y_on[i] - y_off[i]));
  }
  a.shifted = time_fwd_bwd(m_on, input, options);
  a.unshifted = time_fwd_bwd(m_off, input, options);

  std::filesystem::create_directories(out_dir);
  std::ofstream out(std::filesystem::path(out_dir) / "shift_ablation.csv");
  if (!out) throw Error("cannot write shift_ablation.csv in " + out_dir);
  out << kBenchCsvHeader << ",shift,output_max_abs_diff\n";
  out << bench_csv_row(a.shifted) << ",1," << a.output_max_abs_diff << '\n';
  out << bench_csv_row(a.unshifted) << ",0," << a.output_max_abs_diff << '\n';
  return a;
}

}  // namespace mixerbench
