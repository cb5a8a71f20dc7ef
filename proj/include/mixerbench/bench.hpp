#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mixerbench/config.hpp"
#include "mixerbench/model.hpp"

namespace mixerbench {

inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{4} << 30;

struct TimingOptions {
  int trials = 10;
  int warmup = 3;
  std::size_t memory_budget = kDefaultMemoryBudget;  // 0 = unlimited
};

struct BenchRecord {
  ModelConfig config;
  Shape extents;
  std::int64_t context_length = 0;
  double mean_time_s = 0;
  std::vector<double> trial_times_s;
  std::size_t peak_bytes = 0;  // live-buffer high-water mark above the pre-pass baseline
  std::uint64_t flops = 0;     // instrumented, forward + backward
  std::string status = "ok";   // "ok", "X" (over the memory budget) or "error: ..."
};

// Forward + backward of sum(backbone(input)), batch 1, head excluded.
// Over-budget runs come back with status "X" instead of throwing.
BenchRecord time_fwd_bwd(const Model& model, const Tensor& input, const TimingOptions& options = {});
// Builds the model under the memory budget first; construction failures are
// recorded the same way.
BenchRecord bench_config(const ModelConfig& config, const Shape& extents, std::int64_t in_channels,
                         const TimingOptions& options = {}, std::uint64_t seed = 0);

// High-water mark of live tensor bytes during one forward + backward pass,
// measured above the bytes already live before it (parameters and input).
std::size_t peak_memory(const Model& model, const Tensor& input);

struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  double residual = 0;  // RMS of the log-space residuals
};

// Least squares of log t on log n.
SlopeFit fit_loglog_slope(std::span<const double> n, std::span<const double> t);
SlopeFit fit_loglog_slope(std::span<const BenchRecord> records);

// (t_attention - t_alternative) / t_attention * 100
double speedup(double t_attention, double t_alternative);

struct SweepCell {
  ModelConfig config;
  Shape extents;
};

struct SweepSpec {
  std::vector<SweepCell> cells;
  TimingOptions timing;
  std::int64_t in_channels = 1;
  std::uint64_t seed = 0;
};

// mixers x patches over one image geometry, starting from `base`
SweepSpec vit_patch_sweep(const ModelConfig& base, const Shape& extents, std::vector<MixerKind> mixers,
                          std::vector<std::int64_t> patches = {32, 16, 8, 4});
SweepSpec swin_window_sweep(const ModelConfig& base, const Shape& extents, std::vector<MixerKind> mixers,
                            std::vector<std::int64_t> windows = {4, 8, 16});

// Runs every cell (one at a time), writing bench.csv and, when `plots` is
// set, {backbone}_{family}_time.svg / _mem.svg into out_dir. Returns the records.
std::vector<BenchRecord> run_sweep(const SweepSpec& spec, const std::string& out_dir, bool plots = true);

inline constexpr const char* kBenchCsvHeader =
    "backbone,mixer,rank,patch,window,tokens,mean_time_s,peak_bytes,flops,status";
std::string bench_csv_row(const BenchRecord& record);
void write_bench_csv(const std::string& path, std::span<const BenchRecord> records);
// One plot per (backbone, rank) family; returns the files written.
std::vector<std::string> write_plots(const std::string& out_dir, std::span<const BenchRecord> records);

// Swin with the shift on and off, same weights and input.
struct ShiftAblation {
  BenchRecord shifted, unshifted;
  double output_max_abs_diff = 0;
};
ShiftAblation run_shift_ablation(const ModelConfig& base, const Shape& extents, std::int64_t in_channels,
                                 const TimingOptions& options, std::uint64_t seed, const std::string& out_dir);

}  // namespace mixerbench
