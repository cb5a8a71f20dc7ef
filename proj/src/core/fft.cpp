#include "mixerbench/fft.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

#include "mixerbench/tensor.hpp"

namespace mixerbench::fft {

namespace {

struct Plan {
  std::vector<cplx> twiddle;          // exp(-2 pi i k / m), k < m/2
  std::vector<std::uint32_t> bitrev;  // bit-reversal permutation
};

const Plan& plan_for(std::size_t m) {
  thread_local std::unordered_map<std::size_t, Plan> cache;
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;
  Plan p;
  p.twiddle.resize(m / 2);
  for (std::size_t k = 0; k < m / 2; ++k) {
    const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(m);
    p.twiddle[k] = {std::cos(ang), std::sin(ang)};
  }
  p.bitrev.resize(m);
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < m) ++bits;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    p.bitrev[i] = static_cast<std::uint32_t>(r);
  }
  return cache.emplace(m, std::move(p)).first->second;
}

}  // namespace

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

void transform(std::span<cplx> a, bool inverse) {
  const std::size_t m = a.size();
  if (!is_pow2(m)) throw ShapeError("fft: size " + std::to_string(m) + " is not a power of two");
  if (m == 1) return;
  const Plan& p = plan_for(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t r = p.bitrev[i];
    if (i < r) std::swap(a[i], a[r]);
  }
  for (std::size_t len = 2; len <= m; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = m / len;
    for (std::size_t start = 0; start < m; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        cplx w = p.twiddle[k * step];
        if (inverse) w = std::conj(w);
        const cplx t = w * a[start + k + half];
        const cplx u = a[start + k];
        a[start + k] = u + t;
        a[start + k + half] = u - t;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(m);
    for (auto& v : a) v *= scale;
  }
}

std::vector<cplx> rfft(std::span<const double> x, std::size_t m) {
  if (x.size() > m) throw ShapeError("rfft: input longer than transform size");
  std::vector<cplx> buf(m);
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
  transform(buf, false);
  buf.resize(m / 2 + 1);
  return buf;
}

std::vector<double> irfft(std::span<const cplx> bins, std::size_t m) {
  if (bins.size() != m / 2 + 1) throw ShapeError("irfft: expected m/2 + 1 bins");
  std::vector<cplx> buf(m);
  for (std::size_t k = 0; k < bins.size(); ++k) buf[k] = bins[k];
  for (std::size_t k = bins.size(); k < m; ++k) buf[k] = std::conj(bins[m - k]);
  transform(buf, true);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = buf[i].real();
  return out;
}

std::vector<double> fft_linear_conv(std::span<const double> u, std::span<const double> h) {
  if (u.size() != h.size())
    throw ShapeError("fft_linear_conv: length mismatch (" + std::to_string(u.size()) + " vs " +
                     std::to_string(h.size()) + ")");
  const std::size_t n = u.size();
  if (n == 0) return {};
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<cplx> fu(m), fh(m);
  for (std::size_t i = 0; i < n; ++i) {
    fu[i] = u[i];
    fh[i] = h[i];
  }
  transform(fu, false);
  transform(fh, false);
  for (std::size_t k = 0; k < m; ++k) fu[k] *= fh[k];
  transform(fu, true);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fu[i].real();
  return out;
}

}  // namespace mixerbench::fft
