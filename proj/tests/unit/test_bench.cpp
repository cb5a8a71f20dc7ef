#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mixerbench/bench.hpp"
#include "testing.hpp"

using namespace mixerbench;

namespace {

ModelConfig small_vit(MixerKind mixer, std::int64_t patch, std::int64_t d = 16, std::int64_t depth = 1) {
  ModelConfig c;
  c.backbone = Backbone::vit;
  c.mixer = mixer;
  c.patch_size = patch;
  c.embed_dim = d;
  c.depth = {depth};
  c.num_heads = 2;
  return c;
}

Tensor image(std::int64_t channels, const Shape& extents) {
  Shape s{channels};
  s.insert(s.end(), extents.begin(), extents.end());
  return testing::random_tensor(s, 1, -1, 1, DType::f32);
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("timing records every trial and their mean") {
  Model m(small_vit(MixerKind::hyena, 8), 1, {32, 32}, {}, 0);
  TimingOptions opt;
  opt.trials = 10;
  opt.warmup = 1;
  const auto r = time_fwd_bwd(m, image(1, {32, 32}), opt);
  CHECK(r.status == "ok");
  REQUIRE(r.trial_times_s.size() == 10);
  const double mean = std::accumulate(r.trial_times_s.begin(), r.trial_times_s.end(), 0.0) / 10;
  CHECK(r.mean_time_s == doctest::Approx(mean).epsilon(1e-15));
  CHECK(r.context_length == 16);
  CHECK(r.flops > 0);
  CHECK(r.peak_bytes > 0);
}

TEST_CASE("attention time grows with token count") {
  TimingOptions opt;
  opt.trials = 3;
  opt.warmup = 1;
  double prev = 0;
  for (std::int64_t e : {64, 128, 256}) {  // 256, 1024, 4096 tokens at patch 4
    const auto r = bench_config(small_vit(MixerKind::attention, 4), {e, e}, 1, opt);
    REQUIRE(r.status == "ok");
    CHECK(r.mean_time_s >= prev);
    prev = r.mean_time_s;
  }
}

TEST_CASE("an oversized config is marked X instead of crashing") {
  TimingOptions opt;
  opt.trials = 1;
  opt.warmup = 0;
  opt.memory_budget = 1 << 20;
  const auto before = memory_budget();
  const auto r = bench_config(small_vit(MixerKind::attention, 4, 64, 2), {128, 128}, 1, opt);
  CHECK(r.status == "X");
  CHECK(r.trial_times_s.empty());
  CHECK(memory_budget() == before);
  const auto bad = bench_config(small_vit(MixerKind::attention, 4), {30, 30}, 1, opt);
  CHECK(bad.status.rfind("error:", 0) == 0);
}

TEST_CASE("a depth-0 model peaks at its embedding buffers") {
  // Live buffers of patches -> linear -> + pos -> sum and its backward, f32:
  // forward peak holds patches [n, k] and two token maps [n, d]; during
  // backward the patches stay (saved for dW) next to one [n, d] gradient,
  // dW [k, d], db [d] and the scalar seed.
  for (std::int64_t patch : {4, 8})
    for (std::int64_t d : {8, 16}) {
      const std::int64_t C = 2, n = (32 / patch) * (32 / patch), k = C * patch * patch;
      Model m(small_vit(MixerKind::attention, patch, d, 0), C, {32, 32}, {}, 0);
      const auto expect = 4 * std::max(n * k + 2 * n * d, n * k + n * d + k * d + d + 1);
      CHECK(peak_memory(m, image(C, {32, 32})) == static_cast<std::size_t>(expect));
    }
}

TEST_CASE("log-log slope fits") {
  std::vector<double> n, quad, nlogn, flat;
  for (double x = 256; x <= 8192; x *= 2) {
    n.push_back(x);
    quad.push_back(3e-9 * x * x);
    nlogn.push_back(x * std::log(x));
    flat.push_back(0.5);
  }
  CHECK(std::abs(fit_loglog_slope(n, quad).slope - 2.0) < 1e-12);
  CHECK(fit_loglog_slope(n, quad).residual < 1e-12);
  const double s = fit_loglog_slope(n, nlogn).slope;
  CHECK(s > 1.0);
  CHECK(s < 1.35);
  CHECK(std::abs(fit_loglog_slope(n, flat).slope) < 1e-12);
  CHECK_THROWS_AS(fit_loglog_slope(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(fit_loglog_slope(std::vector<double>{1, 1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("speedup arithmetic") {
  CHECK(speedup(2.0, 2.0) == 0.0);
  CHECK(speedup(1.0, 0.2) == doctest::Approx(80.0).epsilon(1e-12));
  CHECK(speedup(1.0, 1.4866) < 0);
  CHECK_THROWS_AS(speedup(0.0, 1.0), Error);
}

TEST_CASE("a two-cell sweep writes two rows, plots, and reproducible counts") {
  TempDir dir("mixerbench_sweep_test");
  auto spec = vit_patch_sweep(small_vit(MixerKind::attention, 16), {32, 32}, {MixerKind::mamba_vision}, {16, 8});
  spec.timing.trials = 2;
  spec.timing.warmup = 1;
  const auto a = run_sweep(spec, dir.path.string());
  const auto lines = read_lines(dir.path / "bench.csv");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "backbone,mixer,rank,patch,window,tokens,mean_time_s,peak_bytes,flops,status");
  CHECK(lines[1].rfind("vit,mamba_vision,2,16,0,4,", 0) == 0);
  CHECK(std::filesystem::exists(dir.path / "vit_2d_time.svg"));
  CHECK(std::filesystem::exists(dir.path / "vit_2d_mem.svg"));

  const auto b = run_sweep(spec, dir.path.string(), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].flops == b[i].flops);
    CHECK(a[i].peak_bytes == b[i].peak_bytes);
  }
}

TEST_CASE("swin window sweep reports window context") {
  auto base = default_swin_config();
  base.embed_dim = 8;
  base.depth = {1, 1};
  base.num_heads = 1;
  auto spec = swin_window_sweep(base, {32, 32}, {MixerKind::attention}, {4, 8});
  spec.timing.trials = 1;
  spec.timing.warmup = 0;
  TempDir dir("mixerbench_swin_sweep_test");
  const auto recs = run_sweep(spec, dir.path.string(), false);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].context_length == 16);
  CHECK(recs[1].context_length == 64);
  CHECK(bench_csv_row(recs[1]).rfind("swin,attention,2,4,8,64,", 0) == 0);
}

TEST_CASE("shift ablation runs both variants and they differ") {
  auto base = default_swin_config();
  base.embed_dim = 8;
  base.depth = {2};
  base.num_heads = 2;
  TimingOptions opt;
  opt.trials = 1;
  opt.warmup = 0;
  TempDir dir("mixerbench_shift_test");
  const auto a = run_shift_ablation(base, {32, 32}, 1, opt, 0, dir.path.string());
  CHECK(a.shifted.status == "ok");
  CHECK(a.unshifted.status == "ok");
  CHECK(a.output_max_abs_diff > 0);
  CHECK(read_lines(dir.path / "shift_ablation.csv").size() == 3);
}
