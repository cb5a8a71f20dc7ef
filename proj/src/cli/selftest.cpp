#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

#include "mixerbench/cli.hpp"
#include "mixerbench/kernels.hpp"
#include "mixerbench/mixers.hpp"
#include "mixerbench/ops.hpp"
#include "mixerbench/reference.hpp"

namespace mixerbench {

namespace {

Tensor uniform_f64(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::span<const double>(v), std::move(shape), DType::f64);
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double check_fft_conv() {
  Rng rng(1);
  double worst = 0;
  for (std::int64_t n = 1; n <= 128; ++n) {
    const auto u = uniform_f64(rng, {1, n, 2});
    const auto h = uniform_f64(rng, {n, 2});
    std::vector<double> ref(static_cast<std::size_t>(2 * n));
    reference::causal_conv_direct<double>(u.data<double>().data(), h.data<double>().data(), ref.data(), 1, n, 2);
    worst = std::max(worst, max_diff(causal_conv(u, h).data<double>(), ref));
  }
  return worst;
}

double check_scan() {
  Rng rng(2);
  double worst = 0;
  for (std::int64_t n : {1, 2, 7, 33, 128})
    for (std::int64_t s : {1, 4, 16}) {
      const std::int64_t c = 3;
      const auto u = uniform_f64(rng, {1, n, c});
      const auto delta = uniform_f64(rng, {1, n, c}, 0.01, 0.5);
      const auto A = uniform_f64(rng, {c, s}, -2.0, -0.1);
      const auto Bm = uniform_f64(rng, {1, n, s});
      const auto Cm = uniform_f64(rng, {1, n, s});
      std::vector<double> ref(static_cast<std::size_t>(n * c));
      reference::selective_scan_sequential<double>(1, n, c, s, u.data<double>().data(), delta.data<double>().data(),
                                                   A.data<double>().data(), Bm.data<double>().data(),
                                                   Cm.data<double>().data(), ref.data());
      for (std::int64_t chunk : {std::int64_t{0}, std::int64_t{1}, std::int64_t{5}, n})
        worst = std::max(worst, max_diff(selective_scan(u, delta, A, Bm, Cm, chunk).data<double>(), ref));
    }
  return worst;
}

double check_attention() {
  ParameterSet ps;
  Rng rng(3);
  const std::int64_t n = 5, d = 4, heads = 2, hd = d / heads;
  Attention att(ps, "a", d, heads, rng, DType::f64);
  const auto x = uniform_f64(rng, {n, d});
  const auto proj = [&](const Tensor& w, const std::vector<double>& in) {
    std::vector<double> out(static_cast<std::size_t>(n * d));
    reference::gemm<double>(false, false, n, d, d, in.data(), w.data<double>().data(), out.data());
    return out;
  };
  const auto xv = x.to_vector();
  const auto q = proj(att.wq(), xv), k = proj(att.wk(), xv), v = proj(att.wv(), xv);
  std::vector<double> o(static_cast<std::size_t>(n * d), 0.0);
  for (std::int64_t h = 0; h < heads; ++h)
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<double> w(static_cast<std::size_t>(n));
      double mx = -INFINITY;
      for (std::int64_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::int64_t c = 0; c < hd; ++c)
          dot += q[static_cast<std::size_t>(i * d + h * hd + c)] * k[static_cast<std::size_t>(j * d + h * hd + c)];
        w[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, w[static_cast<std::size_t>(j)]);
      }
      double z = 0;
      for (auto& e : w) z += (e = std::exp(e - mx));
      for (std::int64_t j = 0; j < n; ++j)
        for (std::int64_t c = 0; c < hd; ++c)
          o[static_cast<std::size_t>(i * d + h * hd + c)] +=
              w[static_cast<std::size_t>(j)] / z * v[static_cast<std::size_t>(j * d + h * hd + c)];
    }
  return max_diff(att.forward(x).data<double>(), proj(att.wo(), o));
}

double check_kernels() {
  Rng rng(4);
  double worst = 0;
  const std::int64_t M = 37, N = 29, K = 41;
  const auto a = uniform_f64(rng, {M, K}), b = uniform_f64(rng, {K, N});
  std::vector<double> c1(static_cast<std::size_t>(M * N)), c2(c1.size());
  kernels::gemm<double>(false, false, M, N, K, a.data<double>().data(), b.data<double>().data(), c1.data());
  reference::gemm<double>(false, false, M, N, K, a.data<double>().data(), b.data<double>().data(), c2.data());
  worst = std::max(worst, max_diff(c1, c2));
  std::vector<double> s1(static_cast<std::size_t>(M * K)), s2(s1.size());
  kernels::softmax_rows<double>(a.data<double>().data(), s1.data(), M, K);
  reference::softmax_rows<double>(a.data<double>().data(), s2.data(), M, K);
  return std::max(worst, max_diff(s1, s2));
}

// max-norm relative error of the taped gradient against central differences
double check_gradient(MixerKind kind) {
  ParameterSet ps;
  Rng rng(5);
  MixerOptions opt;
  opt.num_heads = 2;
  auto mixer = make_mixer(kind, ps, "m", 8, rng, DType::f64, opt);
  std::vector<Tensor> leaves{uniform_f64(rng, {8, 8})};
  for (auto& p : ps.items()) leaves.push_back(p.value);
  for (auto& l : leaves) l.set_requires_grad(true);
  const auto loss = [&] { return sum(mixer->forward(leaves[0])).item(); };

  Tape tape;
  Tensor out;
  {
    TapeScope scope(&tape);
    out = sum(mixer->forward(leaves[0]));
  }
  const auto grads = tape.backward(out);
  TapeScope pause(nullptr);
  double worst = 0;
  for (auto& leaf : leaves) {
    const auto analytic = grads[leaf].to_vector();
    auto buf = leaf.mutable_data<double>();
    double scale = 0, diff = 0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      const double orig = buf[i];
      buf[i] = orig + 1e-5;
      const double up = loss();
      buf[i] = orig - 1e-5;
      const double down = loss();
      buf[i] = orig;
      const double numeric = (up - down) / 2e-5;
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
      diff = std::max(diff, std::abs(numeric - analytic[i]));
    }
    if (scale > 0) worst = std::max(worst, diff / scale);
  }
  return worst;
}

// Largest post-softmax weight between tokens of different regions.
double check_shift_mask(std::int64_t& regions) {
  const auto mask = build_shift_mask({8, 8}, 4, 2, DType::f64);
  regions = mask.num_regions;
  Rng rng(6);
  const auto scores = uniform_f64(rng, {mask.bias.dim(0), 1, 16, 16}, -5, 5);
  const auto w = masked_softmax(scores, mask.bias).to_vector();
  const auto b = mask.bias.to_vector();
  double worst = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (std::isinf(b[i])) worst = std::max(worst, w[i]);
  return worst;
}

}  // namespace

std::vector<SelftestCheck> run_selftest(std::ostream& log) {
  std::vector<SelftestCheck> checks;
  const auto add = [&](std::string name, double value, double tol) {
    SelftestCheck c{std::move(name), value, tol, value < tol};
    char line[160];
    std::snprintf(line, sizeof line, "[%s] %-44s err %.3e (tol %.0e)", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                  c.value, c.tolerance);
    log << line << '\n';
    checks.push_back(std::move(c));
  };
  add("fft causal conv == direct, n=1..128", check_fft_conv(), 1e-10);
  add("selective scan == sequential, n<=128, s<=16", check_scan(), 1e-10);
  add("attention == explicit loop, n=5", check_attention(), 1e-10);
  add("parallel gemm/softmax == serial reference", check_kernels(), 1e-12);
  for (auto k : {MixerKind::attention, MixerKind::hyena, MixerKind::mamba_vision})
    add(std::string("gradient check ") + mixer_name(k) + ", n=8 d=8", check_gradient(k), 1e-4);
  std::int64_t regions = 0;
  add("shifted-window cross-region weight", check_shift_mask(regions), 1e-30);
  add("shifted-window region count == 9", std::abs(static_cast<double>(regions - 9)), 0.5);
  return checks;
}

}  // namespace mixerbench
