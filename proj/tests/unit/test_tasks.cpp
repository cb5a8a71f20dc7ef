#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mixerbench/ops.hpp"
#include "mixerbench/tasks.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace mixerbench;
using testing::random_tensor;

namespace {

bool same_values(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.to_vector() == b.to_vector();
}

double rms(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

// --- generators -----------------------------------------------------------------

TEST_CASE("segmentation is deterministic, labelled and has foreground") {
  SegmentationSpec spec;
  const auto a = gen_segmentation(7, spec);
  const auto b = gen_segmentation(7, spec);
  CHECK(same_values(a.input, b.input));
  CHECK(a.mask == b.mask);
  CHECK(a.input.shape() == Shape{1, 64, 64});
  CHECK(std::any_of(a.mask.begin(), a.mask.end(), [](int c) { return c != 0; }));
  for (int c : a.mask) CHECK((c >= 0 && c < spec.num_classes));
  CHECK_FALSE(same_values(a.input, gen_segmentation(8, spec).input));
}

TEST_CASE("segmentation with no shapes is all background") {
  SegmentationSpec spec;
  spec.num_shapes = 0;
  const auto s = gen_segmentation(3, spec);
  CHECK(std::all_of(s.mask.begin(), s.mask.end(), [](int c) { return c == 0; }));
}

TEST_CASE("segmentation foreground fraction stays in the configured band over 100 seeds") {
  for (Shape extents : {Shape{64, 64}, Shape{16, 16, 16}}) {
    SegmentationSpec spec;
    spec.extents = extents;
    spec.min_foreground = 0.05;
    spec.max_foreground = 0.4;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto s = gen_segmentation(seed, spec);
      const double fg = static_cast<double>(std::count_if(s.mask.begin(), s.mask.end(), [](int c) { return c; })) /
                        static_cast<double>(s.mask.size());
      REQUIRE(fg >= spec.min_foreground);
      REQUIRE(fg <= spec.max_foreground);
    }
  }
}

TEST_CASE("segmentation rejects extents too small for the shapes") {
  SegmentationSpec spec;
  spec.extents = {4, 4};
  CHECK_THROWS_AS(gen_segmentation(0, spec), ShapeError);
  spec.extents = {8, 8};
  spec.min_radius = 0.05;  // under one pixel
  CHECK_THROWS_AS(gen_segmentation(0, spec), ShapeError);
}

TEST_CASE("denoising with r = 1 adds no noise") {
  DenoisingSpec spec;
  spec.noise.fixed_ratio = 1.0;
  const auto s = gen_denoising(5, spec);
  CHECK(same_values(s.input, s.clean));
}

TEST_CASE("denoising at r = 10 lowers the SNR tenfold") {
  DenoisingSpec spec;
  spec.noise.fixed_ratio = 10.0;
  double total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = gen_denoising(seed, spec);
    const auto clean = s.clean.to_vector();
    const double sigma0 = rms(clean) / spec.noise.base_snr;
    const double snr_in = rms(clean) / sigma0;
    // clean carries nominal noise sigma0; the added noise is independent of it
    const double sigma_added = rms(clean) / measured_snr(s.clean, s.input);
    const double snr_out = rms(clean) / std::sqrt(sigma0 * sigma0 + sigma_added * sigma_added);
    total += snr_in / snr_out;
  }
  const double ratio = total / 50;
  CHECK(ratio >= 9.0);
  CHECK(ratio <= 11.0);
}

TEST_CASE("denoising draws r within the range and is deterministic") {
  DenoisingSpec spec;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = gen_denoising(seed, spec);
    CHECK(s.snr_ratio >= 1.0);
    CHECK(s.snr_ratio <= 40.0);
  }
  const auto a = gen_denoising(11, spec), b = gen_denoising(11, spec);
  CHECK(same_values(a.input, b.input));
  CHECK(same_values(a.clean, b.clean));
  spec.noise.snr_ratio_lo = 0.5;
  CHECK_THROWS_AS(gen_denoising(0, spec), ConfigError);
  spec.noise.snr_ratio_lo = 5;
  spec.noise.snr_ratio_hi = 4;
  CHECK_THROWS_AS(gen_denoising(0, spec), ConfigError);
}

TEST_CASE("classification positive rate tracks the configured rate") {
  ClassificationSpec spec;
  spec.extents = {16, 16};
  int positives = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) positives += gen_classification(seed, spec).label;
  const double rate = positives / 1000.0;
  CHECK(rate >= 0.12);
  CHECK(rate <= 0.18);
}

TEST_CASE("a positive differs from its negative twin only inside the anomaly") {
  ClassificationSpec spec;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<std::uint8_t> region;
    const auto pos = render_classification(seed, spec, true, &region).to_vector();
    const auto neg = render_classification(seed, spec, false).to_vector();
    bool any_inside = false;
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (!region[i]) CHECK(pos[i] == neg[i]);
      any_inside |= region[i] && pos[i] != neg[i];
    }
    CHECK(any_inside);
  }
}

TEST_CASE("classification validates the rate and is deterministic") {
  ClassificationSpec spec;
  spec.positive_rate = 0.0;
  CHECK_THROWS_AS(gen_classification(0, spec), ConfigError);
  spec.positive_rate = 1.0;
  CHECK_THROWS_AS(gen_classification(0, spec), ConfigError);
  spec.positive_rate = 0.5;
  const auto a = gen_classification(4, spec), b = gen_classification(4, spec);
  CHECK(a.label == b.label);
  CHECK(same_values(a.input, b.input));
}

TEST_CASE("3D generators produce the requested extents") {
  SegmentationSpec seg;
  seg.extents = {32, 32, 32};
  CHECK(gen_segmentation(1, seg).input.shape() == Shape{1, 32, 32, 32});
  DenoisingSpec den;
  den.extents = {16, 16, 16};
  den.channels = 2;
  CHECK(gen_denoising(1, den).clean.shape() == Shape{2, 16, 16, 16});
}

// --- serialization ----------------------------------------------------------------

TEST_CASE("samples round trip through the binary format") {
  SegmentationSpec seg;
  seg.extents = {16, 16};
  DenoisingSpec den;
  den.extents = {8, 8, 8};
  ClassificationSpec cls;
  cls.extents = {16, 16};
  for (const auto& s : {gen_segmentation(1, seg), gen_denoising(2, den), gen_classification(3, cls)}) {
    std::stringstream buf;
    write_sample(buf, s);
    const auto r = read_sample(buf);
    CHECK(r.kind == s.kind);
    CHECK(r.seed == s.seed);
    CHECK(same_values(r.input, s.input));
    CHECK(r.mask == s.mask);
    CHECK(r.label == s.label);
    CHECK(r.snr_ratio == s.snr_ratio);
    if (s.clean.defined()) CHECK(same_values(r.clean, s.clean));
  }
}

TEST_CASE("binary sample header layout") {
  ClassificationSpec cls;
  cls.extents = {8, 12};
  const auto s = gen_classification(9, cls);
  std::stringstream buf;
  write_sample(buf, s);
  const auto bytes = buf.str();
  // header 12 + seed 8 + 3 extents * 8, then 96 floats, then the label
  REQUIRE(bytes.size() == 12 + 8 + 24 + 96 * 4 + 4);
  CHECK(bytes.substr(0, 4) == "MXTS");
  CHECK(bytes[4] == 1);
  CHECK(bytes[6] == 2);  // classification
  CHECK(bytes[7] == 0);  // f32
  CHECK(bytes[8] == 2);  // spatial rank
  CHECK(static_cast<unsigned char>(bytes[20]) == 1);   // channels
  CHECK(static_cast<unsigned char>(bytes[28]) == 8);
  CHECK(static_cast<unsigned char>(bytes[36]) == 12);

  std::stringstream bad("MXTX");
  CHECK_THROWS_AS(read_sample(bad), Error);
  std::stringstream truncated(bytes.substr(0, 50));
  CHECK_THROWS_AS(read_sample(truncated), Error);
}

// --- dice -----------------------------------------------------------------------

TEST_CASE("dice examples") {
  const std::vector<std::int32_t> a{1, 1, 0, 0}, b{1, 0, 1, 0}, c{0, 0, 1, 1};
  CHECK(dice(a, a, 1) == 1.0);
  CHECK(dice(a, c, 1) == 0.0);
  CHECK(dice(a, b, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dice(std::vector<std::int32_t>{0, 0}, std::vector<std::int32_t>{0, 0}, 1) == 1.0);
  CHECK_THROWS_AS(dice(a, std::vector<std::int32_t>{1}, 1), ShapeError);
}

TEST_CASE("dice is symmetric") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::int32_t> p(40), q(40);
    for (auto& v : p) v = static_cast<std::int32_t>(rng.integer(0, 2));
    for (auto& v : q) v = static_cast<std::int32_t>(rng.integer(0, 2));
    for (int k = 0; k < 3; ++k) CHECK(dice(p, q, k) == dice(q, p, k));
  }
}

// --- ssim -----------------------------------------------------------------------

TEST_CASE("ssim of identical images is 1") {
  const auto x = random_tensor({16, 16}, 1);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const auto v = random_tensor({9, 9, 9}, 2);
  CHECK(ssim(v, v) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim penalises a luminance shift") {
  const auto x = random_tensor({16, 16}, 3, 0, 1);
  CHECK(ssim(x, add_scalar(x, 5.0)) < 0.99);
}

TEST_CASE("ssim matches a per-window scalar oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = random_tensor({16, 16}, 10 + seed, 0, 1);
    const auto y = random_tensor({16, 16}, 20 + seed, 0, 1);
    for (double L : {1.0, 0.37}) {
      const double expect = testing::ssim_oracle_2d(x.to_vector(), y.to_vector(), 16, 16, L);
      CHECK(std::abs(ssim(x, y, L) - expect) < 1e-10);
    }
  }
  const auto x = random_tensor({12, 20}, 4, 0, 1);
  const auto y = random_tensor({12, 20}, 5, 0, 1);
  CHECK(std::abs(ssim(x, y, 1.0) - testing::ssim_oracle_2d(x.to_vector(), y.to_vector(), 12, 20, 1.0)) < 1e-10);
}

TEST_CASE("ssim is symmetric and rejects small images") {
  const auto x = random_tensor({16, 16}, 6, 0, 1);
  const auto y = random_tensor({16, 16}, 7, -1, 3);
  CHECK(ssim(x, y) == doctest::Approx(ssim(y, x)).epsilon(1e-14));
  CHECK_THROWS_AS(ssim(random_tensor({6, 16}, 1), random_tensor({6, 16}, 2)), ShapeError);
  CHECK_THROWS_AS(ssim(x, random_tensor({16, 15}, 2)), ShapeError);
}

// --- auroc ----------------------------------------------------------------------

TEST_CASE("auroc examples") {
  const std::vector<std::int32_t> labels{0, 0, 1, 1};
  CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == 1.0);
  CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, labels) == 0.0);
  CHECK(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, labels) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(auroc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels) == 0.5);
  CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<std::int32_t>{1, 1}), Error);
}

TEST_CASE("auroc equals the pairwise statistic and ignores monotone transforms") {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> s(25);
    std::vector<std::int32_t> l(25);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(rng.uniform(0, 10)) / 10;  // coarse, so ties happen
      l[i] = static_cast<std::int32_t>(i % 3 == 0);
    }
    const double a = auroc(s, l);
    CHECK(a == doctest::Approx(testing::auroc_pairs(s, l)).epsilon(1e-14));
    std::vector<double> warped(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) warped[i] = std::exp(3 * s[i]) - 7;
    CHECK(auroc(warped, l) == doctest::Approx(a).epsilon(1e-14));
  }
}

// --- bootstrap ------------------------------------------------------------------

TEST_CASE("bootstrap of a constant metric is degenerate") {
  const auto ci = bootstrap_ci([](auto) { return 0.42; }, 30, 200, 0.95, 1);
  CHECK(ci.lo == ci.hi);
  CHECK(ci.point == 0.42);
}

TEST_CASE("bootstrap is seeded and brackets the point estimate") {
  Rng rng(5);
  int contained = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> values(40);
    for (auto& v : values) v = rng.normal(rng.uniform(-1, 1), 1);
    const auto mean_of = [&](std::span<const std::size_t> idx) {
      double s = 0;
      for (auto i : idx) s += values[i];
      return s / static_cast<double>(idx.size());
    };
    const auto ci = bootstrap_ci(mean_of, values.size(), 300, 0.95, static_cast<std::uint64_t>(t));
    contained += ci.lo <= ci.point && ci.point <= ci.hi;
    if (t == 0) {
      const auto again = bootstrap_ci(mean_of, values.size(), 300, 0.95, 0);
      CHECK(again.lo == ci.lo);
      CHECK(again.hi == ci.hi);
    }
  }
  CHECK(contained == 100);
  CHECK_THROWS_AS(bootstrap_ci([](auto) { return 0.0; }, 0), Error);
}

TEST_CASE("bootstrap redraws resamples where the metric is undefined") {
  const std::vector<double> scores{0.1, 0.9, 0.2, 0.8, 0.3, 0.7};
  const std::vector<std::int32_t> labels{0, 1, 0, 1, 0, 1};
  const auto metric = [&](std::span<const std::size_t> idx) {
    std::vector<double> s;
    std::vector<std::int32_t> l;
    for (auto i : idx) {
      s.push_back(scores[i]);
      l.push_back(labels[i]);
    }
    return auroc(s, l);
  };
  const auto ci = bootstrap_ci(metric, scores.size(), 200, 0.95, 2);
  CHECK(ci.point == 1.0);
  CHECK(ci.lo == 1.0);
}

// --- losses ---------------------------------------------------------------------

TEST_CASE("denoise loss at pred == target is the Charbonnier floor") {
  const auto t = random_tensor({1, 12, 12}, 1);
  const auto parts = denoise_loss_parts(t, t);
  CHECK(parts.mse.item() == 0.0);
  CHECK(parts.gaussian.item() == 0.0);
  CHECK(parts.charbonnier.item() == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(parts.total.item() == doctest::Approx(1e-3).epsilon(1e-12));
}

TEST_CASE("Charbonnier approaches mean absolute error for large residuals") {
  const auto p = random_tensor({1, 10, 10}, 2, 1, 2);
  const auto t = random_tensor({1, 10, 10}, 3, -2, -1);
  const auto parts = denoise_loss_parts(p, t);
  const double mae = mean(sqrt(square(sub(p, t)))).item();
  CHECK(std::abs(parts.charbonnier.item() - mae) < 1e-6);
}

TEST_CASE("denoise loss never drops below the Charbonnier floor") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_tensor({2, 9, 9}, seed);
    const auto t = random_tensor({2, 9, 9}, seed + 100);
    CHECK(denoise_loss(p, t).item() >= 1e-3);
  }
}

TEST_CASE("denoise loss gradient matches finite differences") {
  const auto p = random_tensor({1, 9, 9}, 4);
  const auto t = random_tensor({1, 9, 9}, 5);
  const double err = testing::gradient_error([&](auto& v) { return denoise_loss(v[0], t); }, {p});
  CHECK(err < 1e-5);
  CHECK_THROWS_AS(denoise_loss(p, random_tensor({1, 9, 8}, 1)), ShapeError);
}

TEST_CASE("the Gaussian term can be switched off") {
  const auto p = random_tensor({1, 9, 9}, 6);
  const auto t = random_tensor({1, 9, 9}, 7);
  DenoiseLossOptions off;
  off.gaussian = GaussianTerm::none;
  const auto on_parts = denoise_loss_parts(p, t);
  const auto off_parts = denoise_loss_parts(p, t, off);
  CHECK(off_parts.total.item() == doctest::Approx(on_parts.mse.item() + on_parts.charbonnier.item()));
  CHECK(on_parts.gaussian.item() > 0);
}

TEST_CASE("segmentation loss is per-pixel cross entropy") {
  const auto logits = random_tensor({3, 2, 2}, 8);
  const std::vector<std::int32_t> mask{0, 2, 1, 1};
  const auto v = logits.to_vector();
  double expect = 0;
  for (int p = 0; p < 4; ++p) {
    double z = 0;
    for (int k = 0; k < 3; ++k) z += std::exp(v[static_cast<std::size_t>(k * 4 + p)]);
    expect -= v[static_cast<std::size_t>(mask[static_cast<std::size_t>(p)] * 4 + p)] - std::log(z);
  }
  CHECK(segmentation_loss(logits, mask).item() == doctest::Approx(expect / 4).epsilon(1e-12));
  const auto am = argmax_classes(logits);
  for (int p = 0; p < 4; ++p) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (v[static_cast<std::size_t>(k * 4 + p)] > v[static_cast<std::size_t>(best * 4 + p)]) best = k;
    CHECK(am[static_cast<std::size_t>(p)] == best);
  }
}

// --- augmentation -----------------------------------------------------------------

TEST_CASE("identity affine leaves samples unchanged") {
  SegmentationSpec seg;
  seg.extents = {20, 24};
  DenoisingSpec den;
  den.extents = {10, 10, 10};
  AffineParams id;
  for (const auto& s : {gen_segmentation(1, seg), gen_denoising(2, den)}) {
    for (bool snr : {false, true}) {
      AugmentConfig cfg;
      cfg.snr_preserving = snr;
      const auto out = apply_affine(s, id, cfg);
      CHECK(same_values(out.input, s.input));
      CHECK(out.mask == s.mask);
      if (s.clean.defined()) CHECK(same_values(out.clean, s.clean));
    }
  }
}

TEST_CASE("augmentation keeps the mask label set") {
  SegmentationSpec seg;
  seg.num_classes = 4;
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = gen_segmentation(seed, seg);
    const auto out = augment(s, AugmentConfig{}, rng);
    const std::set<int> before(s.mask.begin(), s.mask.end());
    for (int c : out.mask) CHECK(before.count(c) == 1);
  }
}

TEST_CASE("jitter scales intensities and stays off for denoising") {
  ClassificationSpec cls;
  const auto s = gen_classification(1, cls);
  AffineParams p;
  p.jitter = 1.1;
  const auto out = apply_affine(s, p, AugmentConfig{});
  CHECK(testing::max_abs_diff(out.input, mul_scalar(s.input.to(DType::f64), 1.1).to(DType::f32)) < 1e-6);

  const auto den_cfg = augment_defaults(TaskKind::denoising);
  CHECK_FALSE(den_cfg.jitter);
  Rng rng(4);
  for (int t = 0; t < 20; ++t) CHECK(draw_affine(rng, {64, 64}, den_cfg).jitter == 1.0);
}

TEST_CASE("denoising augmentation preserves the noisy/clean SNR") {
  DenoisingSpec den;
  den.noise.fixed_ratio = 8.0;
  const auto cfg = augment_defaults(TaskKind::denoising);
  Rng rng(6);
  double ratio_sum = 0;
  const int n = 30;
  for (int t = 0; t < n; ++t) {
    const auto s = gen_denoising(static_cast<std::uint64_t>(t), den);
    const auto out = augment(s, cfg, rng);
    ratio_sum += measured_snr(out.clean, out.input) / measured_snr(s.clean, s.input);
  }
  CHECK(std::abs(ratio_sum / n - 1.0) < 0.05);
}

TEST_CASE("a pure translation shifts pixels") {
  TaskSample s;
  s.kind = TaskKind::classification;
  s.input = Tensor::from(std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9}, {1, 3, 3});
  AffineParams p;
  p.translate = {0, 1};
  const auto out = apply_affine(s, p, AugmentConfig{});
  CHECK(out.input.to_vector() == std::vector<double>{0, 1, 2, 0, 4, 5, 0, 7, 8});
}
