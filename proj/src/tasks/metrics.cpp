#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixerbench/tasks.hpp"

namespace mixerbench {

double dice(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::int32_t class_id) {
  if (pred.size() != truth.size())
    throw ShapeError("dice: masks have " + std::to_string(pred.size()) + " and " + std::to_string(truth.size()) +
                     " pixels");
  std::size_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == class_id, b = truth[i] == class_id;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

namespace {

constexpr std::int64_t kWindow = 7;

// Sliding window sums of width kWindow along `axis`, valid positions only.
std::vector<double> window_sum(const std::vector<double>& in, const Shape& shape, int axis, Shape& out_shape) {
  out_shape = shape;
  out_shape[static_cast<std::size_t>(axis)] = shape[static_cast<std::size_t>(axis)] - kWindow + 1;
  std::int64_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= shape[static_cast<std::size_t>(a)];
  for (std::size_t a = static_cast<std::size_t>(axis) + 1; a < shape.size(); ++a) inner *= shape[a];
  const std::int64_t len = shape[static_cast<std::size_t>(axis)];
  const std::int64_t out_len = out_shape[static_cast<std::size_t>(axis)];
  std::vector<double> out(static_cast<std::size_t>(outer * out_len * inner), 0.0);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < out_len; ++j)
      for (std::int64_t k = 0; k < kWindow; ++k) {
        const double* src = in.data() + (o * len + j + k) * inner;
        double* dst = out.data() + (o * out_len + j) * inner;
        for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  return out;
}

std::vector<double> box_sums(std::vector<double> v, const Shape& shape) {
  Shape s = shape;
  for (int a = 0; a < static_cast<int>(shape.size()); ++a) {
    Shape next;
    v = window_sum(v, s, a, next);
    s = next;
  }
  return v;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& y, double L) {
  if (x.shape() != y.shape())
    throw ShapeError("ssim: shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()) + " differ");
  if (x.rank() != 2 && x.rank() != 3) throw ShapeError("ssim: expects a 2D or 3D array, got " + shape_str(x.shape()));
  for (auto e : x.shape())
    if (e < kWindow) throw ShapeError("ssim: 7-wide window larger than image " + shape_str(x.shape()));

  const auto xs = x.to_vector();
  const auto ys = y.to_vector();
  std::vector<double> xx(xs.size()), yy(xs.size()), xy(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xx[i] = xs[i] * xs[i];
    yy[i] = ys[i] * ys[i];
    xy[i] = xs[i] * ys[i];
  }
  const auto sx = box_sums(xs, x.shape());
  const auto sy = box_sums(ys, x.shape());
  const auto sxx = box_sums(xx, x.shape());
  const auto syy = box_sums(yy, x.shape());
  const auto sxy = box_sums(xy, x.shape());

  const double N = std::pow(static_cast<double>(kWindow), x.rank());
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0;
  for (std::size_t w = 0; w < sx.size(); ++w) {
    const double mx = sx[w] / N, my = sy[w] / N;
    const double vx = (sxx[w] - N * mx * mx) / (N - 1);
    const double vy = (syy[w] - N * my * my) / (N - 1);
    const double cxy = (sxy[w] - N * mx * my) / (N - 1);
    total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(sx.size());
}

double ssim(const Tensor& x, const Tensor& y) {
  const auto xs = x.to_vector();
  const auto ys = y.to_vector();
  if (xs.empty() || xs.size() != ys.size()) return ssim(x, y, 1.0);  // let the checked overload report it
  const auto [xl, xh] = std::minmax_element(xs.begin(), xs.end());
  const auto [yl, yh] = std::minmax_element(ys.begin(), ys.end());
  const double L = std::max(*xh, *yh) - std::min(*xl, *yl);
  return ssim(x, y, L > 0 ? L : 1.0);
}

double ssim_image(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("ssim_image: shapes " + shape_str(pred.shape()) + " and " + shape_str(target.shape()) +
                     " differ");
  if (pred.rank() < 3) throw ShapeError("ssim_image: expects [C, spatial...], got " + shape_str(pred.shape()));
  const auto t = target.to_vector();
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  const double L = *hi - *lo > 0 ? *hi - *lo : 1.0;
  const auto C = pred.dim(0);
  Shape spatial(pred.shape().begin() + 1, pred.shape().end());
  const auto P = shape_numel(spatial);
  const auto p64 = pred.to(DType::f64), t64 = target.to(DType::f64);
  double total = 0;
  for (std::int64_t c = 0; c < C; ++c) {
    auto pc = Tensor::from(p64.data<double>().subspan(static_cast<std::size_t>(c * P), static_cast<std::size_t>(P)),
                           spatial, DType::f64);
    auto tc = Tensor::from(t64.data<double>().subspan(static_cast<std::size_t>(c * P), static_cast<std::size_t>(P)),
                           spatial, DType::f64);
    total += ssim(pc, tc, L);
  }
  return total / static_cast<double>(C);
}

double auroc(std::span<const double> scores, std::span<const std::int32_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
  std::size_t pos = 0, neg = 0;
  for (auto l : labels) {
    if (l == 1) ++pos;
    else if (l == 0) ++neg;
    else throw Error("auroc: labels must be 0 or 1");
  }
  if (pos == 0 || neg == 0) throw Error("auroc: needs at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Mid-ranks handle ties as 1/2.
  double rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid;
    i = j + 1;
  }
  const double P = static_cast<double>(pos), Q = static_cast<double>(neg);
  return (rank_sum - P * (P + 1) / 2) / (P * Q);
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double f = pos - static_cast<double>(lo);
  return sorted[lo] + f * (sorted[hi] - sorted[lo]);
}

}  // namespace

Interval bootstrap_ci(const std::function<double(std::span<const std::size_t>)>& metric, std::size_t n,
                      std::size_t n_boot, double level, std::uint64_t seed) {
  if (n == 0) throw Error("bootstrap_ci: empty sample set");
  if (n_boot == 0) throw ConfigError("bootstrap_ci: n_boot must be positive");
  if (!(level > 0 && level < 1)) throw ConfigError("bootstrap_ci: level must lie in (0, 1)");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Interval out;
  out.point = metric(all);

  Rng rng(seed);
  std::vector<double> stats;
  stats.reserve(n_boot);
  std::vector<std::size_t> idx(n);
  constexpr int kRedraws = 100;
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (int attempt = 0;; ++attempt) {
      for (auto& i : idx) i = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(n) - 1));
      try {
        stats.push_back(metric(idx));
        break;
      } catch (const Error&) {
        if (attempt + 1 == kRedraws) throw;
      }
    }
  }
  std::sort(stats.begin(), stats.end());
  out.lo = percentile(stats, (1 - level) / 2);
  out.hi = percentile(stats, 1 - (1 - level) / 2);
  return out;
}

}  // namespace mixerbench
