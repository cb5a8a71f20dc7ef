#include "mixerbench/reference.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mixerbench::reference {

template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t M, std::int64_t N, std::int64_t K, const T* A,
          const T* B, T* C) {
  for (std::int64_t i = 0; i < M; ++i)
    for (std::int64_t j = 0; j < N; ++j) {
      T acc = 0;
      for (std::int64_t k = 0; k < K; ++k) {
        const T a = trans_a ? A[k * M + i] : A[i * K + k];
        const T b = trans_b ? B[j * K + k] : B[k * N + j];
        acc += a * b;
      }
      C[i * N + j] = acc;
    }
}

template <class T>
void softmax_rows(const T* x, T* y, std::int64_t rows, std::int64_t len) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    T* yr = y + r * len;
    const T mx = *std::max_element(xr, xr + len);
    long double total = 0;
    for (std::int64_t j = 0; j < len; ++j) total += std::exp(static_cast<long double>(xr[j] - mx));
    for (std::int64_t j = 0; j < len; ++j)
      yr[j] = static_cast<T>(std::exp(static_cast<long double>(xr[j] - mx)) / total);
  }
}

template <class T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T* y, std::int64_t rows,
                     std::int64_t len, double eps) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    long double mean = 0;
    for (std::int64_t j = 0; j < len; ++j) mean += xr[j];
    mean /= len;
    long double var = 0;
    for (std::int64_t j = 0; j < len; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= len;
    const long double denom = std::sqrt(var + eps);
    for (std::int64_t j = 0; j < len; ++j)
      y[r * len + j] = static_cast<T>((xr[j] - mean) / denom * gamma[j] + beta[j]);
  }
}

template <class T>
void depthwise_conv1d(const T* x, const T* w, const T* bias, T* y, std::int64_t batch,
                      std::int64_t n, std::int64_t c, std::int64_t k) {
  const std::int64_t half = k / 2;
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t t = 0; t < n; ++t)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        T acc = bias ? bias[ch] : T(0);
        for (std::int64_t j = 0; j < k; ++j) {
          const std::int64_t src = t + j - half;
          if (src >= 0 && src < n) acc += w[ch * k + j] * x[(b * n + src) * c + ch];
        }
        y[(b * n + t) * c + ch] = acc;
      }
}

template <class T>
void causal_conv_direct(const T* u, const T* h, T* y, std::int64_t batch, std::int64_t n,
                        std::int64_t c) {
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t t = 0; t < n; ++t) {
        long double acc = 0;
        for (std::int64_t s = 0; s <= t; ++s)
          acc += static_cast<long double>(h[s * c + ch]) * u[(b * n + t - s) * c + ch];
        y[(b * n + t) * c + ch] = static_cast<T>(acc);
      }
}

template <class T>
void selective_scan_sequential(std::int64_t batch, std::int64_t n, std::int64_t c, std::int64_t s,
                               const T* u, const T* delta, const T* A, const T* Bm, const T* Cm,
                               T* y) {
  std::vector<T> h(static_cast<std::size_t>(c * s));
  for (std::int64_t b = 0; b < batch; ++b) {
    std::fill(h.begin(), h.end(), T(0));
    for (std::int64_t t = 0; t < n; ++t) {
      const std::int64_t row = b * n + t;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T dt = delta[row * c + ch];
        const T x = u[row * c + ch];
        T acc = 0;
        for (std::int64_t k = 0; k < s; ++k) {
          T& state = h[static_cast<std::size_t>(ch * s + k)];
          state = std::exp(dt * A[ch * s + k]) * state + dt * Bm[row * s + k] * x;
          acc += Cm[row * s + k] * state;
        }
        y[row * c + ch] = acc;
      }
    }
  }
}

#define MIXERBENCH_REFERENCE_INSTANTIATE(T)                                                       \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const T*, const T*, \
                        T*);                                                                      \
  template void softmax_rows<T>(const T*, T*, std::int64_t, std::int64_t);                        \
  template void layer_norm_rows<T>(const T*, const T*, const T*, T*, std::int64_t, std::int64_t,  \
                                   double);                                                       \
  template void depthwise_conv1d<T>(const T*, const T*, const T*, T*, std::int64_t, std::int64_t, \
                                    std::int64_t, std::int64_t);                                  \
  template void causal_conv_direct<T>(const T*, const T*, T*, std::int64_t, std::int64_t,         \
                                      std::int64_t);                                              \
  template void selective_scan_sequential<T>(std::int64_t, std::int64_t, std::int64_t,            \
                                             std::int64_t, const T*, const T*, const T*,          \
                                             const T*, const T*, T*);

MIXERBENCH_REFERENCE_INSTANTIATE(float)
MIXERBENCH_REFERENCE_INSTANTIATE(double)

}  // namespace mixerbench::reference
