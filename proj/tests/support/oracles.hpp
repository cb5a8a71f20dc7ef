#pragma once

// Independent scalar re-implementations used as test oracles.

#include <cstdint>
#include <cmath>
#include <span>
#include <vector>

namespace mixerbench::testing {

// Windowed SSIM with a 7x7 uniform window, two-pass moments per window.
inline double ssim_oracle_2d(const std::vector<double>& x, const std::vector<double>& y, std::int64_t h,
                             std::int64_t w, double L) {
  const int k = 7;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0;
  int count = 0;
  for (std::int64_t i = 0; i + k <= h; ++i)
    for (std::int64_t j = 0; j + k <= w; ++j) {
      double mx = 0, my = 0;
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
          mx += x[static_cast<std::size_t>((i + a) * w + j + b)];
          my += y[static_cast<std::size_t>((i + a) * w + j + b)];
        }
      mx /= k * k;
      my /= k * k;
      double vx = 0, vy = 0, cxy = 0;
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
          const double dx = x[static_cast<std::size_t>((i + a) * w + j + b)] - mx;
          const double dy = y[static_cast<std::size_t>((i + a) * w + j + b)] - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      vx /= k * k - 1;
      vy /= k * k - 1;
      cxy /= k * k - 1;
      total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return total / count;
}

// Fraction of positive-negative pairs won by the positive, ties 1/2.
inline double auroc_pairs(std::span<const double> scores, std::span<const std::int32_t> labels) {
  double wins = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (labels[i] == 1 && labels[j] == 0) {
        wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        ++pairs;
      }
  return wins / pairs;
}

}  // namespace mixerbench::testing

namespace mixerbench::testing {

// y[t] = sum_{s<=t} h[s] u[t-s] for one column.
inline std::vector<double> causal_conv_oracle(const std::vector<double>& u, const std::vector<double>& h) {
  std::vector<double> y(u.size(), 0.0);
  for (std::size_t t = 0; t < u.size(); ++t)
    for (std::size_t s = 0; s <= t; ++s) y[t] += h[s] * u[t - s];
  return y;
}

// h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t, y_t = <C_t, h_t>, one
// channel at a time. u, delta: [n, c]; A: [c, s]; B, C: [n, s].
inline std::vector<double> scan_oracle(const std::vector<double>& u, const std::vector<double>& delta,
                                       const std::vector<double>& A, const std::vector<double>& B,
                                       const std::vector<double>& C, std::int64_t n, std::int64_t c,
                                       std::int64_t s) {
  std::vector<double> y(static_cast<std::size_t>(n * c), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> h(static_cast<std::size_t>(s), 0.0);
    for (std::int64_t t = 0; t < n; ++t) {
      const double dt = delta[static_cast<std::size_t>(t * c + ch)];
      const double x = u[static_cast<std::size_t>(t * c + ch)];
      double acc = 0;
      for (std::int64_t k = 0; k < s; ++k) {
        auto& hk = h[static_cast<std::size_t>(k)];
        hk = std::exp(dt * A[static_cast<std::size_t>(ch * s + k)]) * hk + dt * B[static_cast<std::size_t>(t * s + k)] * x;
        acc += C[static_cast<std::size_t>(t * s + k)] * hk;
      }
      y[static_cast<std::size_t>(t * c + ch)] = acc;
    }
  }
  return y;
}

}  // namespace mixerbench::testing
