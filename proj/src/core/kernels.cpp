#include "mixerbench/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <vector>

#include "mixerbench/fft.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mixerbench::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int apply_thread_env() {
  int n = 1;
  if (const char* env = std::getenv("MIXERBENCH_THREADS")) {
    try {
      n = std::max(1, std::stoi(env));
    } catch (...) {
      n = 1;
    }
  }
  set_threads(n);
  return n;
}

namespace {

constexpr std::int64_t kParallelWork = 1 << 15;

inline int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

template <class T>
void transpose_into(const T* src, std::int64_t rows, std::int64_t cols, T* dst) {
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// C[M,N] = A[M,K] B[K,N]; four rows share each streamed row of B.
template <class T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  const std::int64_t blocks = (M + 3) / 4;
#pragma omp parallel for schedule(static) if (M * N * K > kParallelWork)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::int64_t i0 = blk * 4;
    const std::int64_t rows = std::min<std::int64_t>(4, M - i0);
    std::fill(C + i0 * N, C + (i0 + rows) * N, T(0));
    if (rows == 4) {
      T* c0 = C + i0 * N;
      T* c1 = c0 + N;
      T* c2 = c1 + N;
      T* c3 = c2 + N;
      const T* a0 = A + i0 * K;
      const T* a1 = a0 + K;
      const T* a2 = a1 + K;
      const T* a3 = a2 + K;
      for (std::int64_t k = 0; k < K; ++k) {
        const T* b = B + k * N;
        const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
#pragma omp simd
        for (std::int64_t j = 0; j < N; ++j) {
          const T bj = b[j];
          c0[j] += v0 * bj;
          c1[j] += v1 * bj;
          c2[j] += v2 * bj;
          c3[j] += v3 * bj;
        }
      }
    } else {
      for (std::int64_t r = 0; r < rows; ++r) {
        T* c = C + (i0 + r) * N;
        const T* a = A + (i0 + r) * K;
        for (std::int64_t k = 0; k < K; ++k) {
          const T v = a[k];
          const T* b = B + k * N;
#pragma omp simd
          for (std::int64_t j = 0; j < N; ++j) c[j] += v * b[j];
        }
      }
    }
  }
}

// C[M,N] = A[K,M]^T B[K,N], blocked over rows of C.
template <class T>
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  constexpr std::int64_t kBlock = 8;
  const std::int64_t blocks = (M + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) if (M * N * K > kParallelWork)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::int64_t i0 = blk * kBlock;
    const std::int64_t i1 = std::min(M, i0 + kBlock);
    std::fill(C + i0 * N, C + i1 * N, T(0));
    for (std::int64_t k = 0; k < K; ++k) {
      const T* a = A + k * M;
      const T* b = B + k * N;
      for (std::int64_t i = i0; i < i1; ++i) {
        const T v = a[i];
        T* c = C + i * N;
#pragma omp simd
        for (std::int64_t j = 0; j < N; ++j) c[j] += v * b[j];
      }
    }
  }
}

}  // namespace

template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t M, std::int64_t N, std::int64_t K, const T* A,
          const T* B, T* C) {
  if (M == 0 || N == 0) return;
  if (K == 0) {
    std::fill(C, C + M * N, T(0));
    return;
  }
  if (!trans_b) {
    if (trans_a)
      gemm_tn(M, N, K, A, B, C);
    else
      gemm_nn(M, N, K, A, B, C);
    return;
  }
  // B is [N, K]: stage it as [K, N] so the inner loop streams contiguously.
  std::vector<T> bt(static_cast<std::size_t>(N * K));
  transpose_into(B, N, K, bt.data());
  if (trans_a)
    gemm_tn(M, N, K, A, bt.data(), C);
  else
    gemm_nn(M, N, K, A, bt.data(), C);
}

template <class T>
void softmax_rows(const T* x, T* y, std::int64_t rows, std::int64_t len) {
#pragma omp parallel for schedule(static) if (rows * len > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    T* yr = y + r * len;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t j = 0; j < len; ++j) mx = std::max(mx, xr[j]);
    T total = 0;
    for (std::int64_t j = 0; j < len; ++j) {
      const T e = std::exp(xr[j] - mx);
      yr[j] = e;
      total += e;
    }
    const T inv = T(1) / total;
    for (std::int64_t j = 0; j < len; ++j) yr[j] *= inv;
  }
}

template <class T>
void softmax_rows_backward(const T* y, const T* gy, T* gx, std::int64_t rows, std::int64_t len) {
#pragma omp parallel for schedule(static) if (rows * len > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* yr = y + r * len;
    const T* gr = gy + r * len;
    T* out = gx + r * len;
    T dot = 0;
    for (std::int64_t j = 0; j < len; ++j) dot += yr[j] * gr[j];
    for (std::int64_t j = 0; j < len; ++j) out[j] = yr[j] * (gr[j] - dot);
  }
}

template <class T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                     std::int64_t rows, std::int64_t len, double eps) {
#pragma omp parallel for schedule(static) if (rows * len > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    double m = 0;
    for (std::int64_t j = 0; j < len; ++j) m += xr[j];
    m /= static_cast<double>(len);
    double v = 0;
    for (std::int64_t j = 0; j < len; ++j) {
      const double d = xr[j] - m;
      v += d * d;
    }
    v /= static_cast<double>(len);
    const double rs = 1.0 / std::sqrt(v + eps);
    mean[r] = static_cast<T>(m);
    rstd[r] = static_cast<T>(rs);
    T* yr = y + r * len;
    for (std::int64_t j = 0; j < len; ++j)
      yr[j] = static_cast<T>((xr[j] - m) * rs) * gamma[j] + beta[j];
  }
}

template <class T>
void layer_norm_rows_backward(const T* x, const T* gamma, const T* mean, const T* rstd,
                              const T* gy, T* gx, T* ggamma, T* gbeta, std::int64_t rows,
                              std::int64_t len) {
#pragma omp parallel for schedule(static) if (rows * len > kParallelWork)
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    const T* gr = gy + r * len;
    const T m = mean[r], rs = rstd[r];
    double a = 0, b = 0;
    for (std::int64_t j = 0; j < len; ++j) {
      const double xhat = (xr[j] - m) * rs;
      const double dxhat = static_cast<double>(gr[j]) * gamma[j];
      a += dxhat;
      b += dxhat * xhat;
    }
    a /= static_cast<double>(len);
    b /= static_cast<double>(len);
    T* out = gx + r * len;
    for (std::int64_t j = 0; j < len; ++j) {
      const double xhat = (xr[j] - m) * rs;
      const double dxhat = static_cast<double>(gr[j]) * gamma[j];
      out[j] = static_cast<T>(rs * (dxhat - a - xhat * b));
    }
  }
  std::fill(ggamma, ggamma + len, T(0));
  std::fill(gbeta, gbeta + len, T(0));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x + r * len;
    const T* gr = gy + r * len;
    for (std::int64_t j = 0; j < len; ++j) {
      ggamma[j] += gr[j] * ((xr[j] - mean[r]) * rstd[r]);
      gbeta[j] += gr[j];
    }
  }
}

template <class T>
void depthwise_conv1d(const T* x, const T* w, const T* bias, T* y, std::int64_t batch,
                      std::int64_t n, std::int64_t c, std::int64_t k) {
  const std::int64_t half = k / 2;
#pragma omp parallel for schedule(static) if (batch * n * c * k > kParallelWork)
  for (std::int64_t bt = 0; bt < batch * n; ++bt) {
    const std::int64_t b = bt / n, t = bt % n;
    T* yr = y + bt * c;
    for (std::int64_t ch = 0; ch < c; ++ch) yr[ch] = bias ? bias[ch] : T(0);
    for (std::int64_t j = 0; j < k; ++j) {
      const std::int64_t src = t + j - half;
      if (src < 0 || src >= n) continue;
      const T* xr = x + (b * n + src) * c;
      for (std::int64_t ch = 0; ch < c; ++ch) yr[ch] += w[ch * k + j] * xr[ch];
    }
  }
}

template <class T>
void depthwise_conv1d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gbias,
                               std::int64_t batch, std::int64_t n, std::int64_t c, std::int64_t k) {
  const std::int64_t half = k / 2;
#pragma omp parallel for schedule(static) if (batch * n * c * k > kParallelWork)
  for (std::int64_t bt = 0; bt < batch * n; ++bt) {
    const std::int64_t b = bt / n, t = bt % n;
    T* gr = gx + bt * c;
    std::fill(gr, gr + c, T(0));
    // x[t] feeds y[t - j + half] through tap j.
    for (std::int64_t j = 0; j < k; ++j) {
      const std::int64_t dst = t - j + half;
      if (dst < 0 || dst >= n) continue;
      const T* g = gy + (b * n + dst) * c;
      for (std::int64_t ch = 0; ch < c; ++ch) gr[ch] += w[ch * k + j] * g[ch];
    }
  }
  std::fill(gw, gw + c * k, T(0));
  if (gbias) std::fill(gbias, gbias + c, T(0));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t t = 0; t < n; ++t) {
      const T* g = gy + (b * n + t) * c;
      if (gbias)
        for (std::int64_t ch = 0; ch < c; ++ch) gbias[ch] += g[ch];
      for (std::int64_t j = 0; j < k; ++j) {
        const std::int64_t src = t + j - half;
        if (src < 0 || src >= n) continue;
        const T* xr = x + (b * n + src) * c;
        for (std::int64_t ch = 0; ch < c; ++ch) gw[ch * k + j] += g[ch] * xr[ch];
      }
    }
}

template <class T>
void causal_conv_fft(const T* u, const T* h, T* y, std::int64_t batch, std::int64_t n,
                     std::int64_t c) {
  if (n == 0) return;
  const auto m = fft::next_pow2(static_cast<std::size_t>(2 * n - 1));
#pragma omp parallel
  {
    std::vector<fft::cplx> fh(m), fu(m);
#pragma omp for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::fill(fh.begin(), fh.end(), fft::cplx{});
      for (std::int64_t t = 0; t < n; ++t) fh[t] = static_cast<double>(h[t * c + ch]);
      fft::transform(fh, false);
      for (std::int64_t b = 0; b < batch; ++b) {
        const T* ub = u + b * n * c;
        std::fill(fu.begin(), fu.end(), fft::cplx{});
        for (std::int64_t t = 0; t < n; ++t) fu[t] = static_cast<double>(ub[t * c + ch]);
        fft::transform(fu, false);
        for (std::size_t f = 0; f < m; ++f) fu[f] *= fh[f];
        fft::transform(fu, true);
        T* yb = y + b * n * c;
        for (std::int64_t t = 0; t < n; ++t) yb[t * c + ch] = static_cast<T>(fu[t].real());
      }
    }
  }
}

template <class T>
void causal_conv_fft_backward(const T* u, const T* h, const T* gy, T* gu, T* gh,
                              std::int64_t batch, std::int64_t n, std::int64_t c) {
  if (n == 0) return;
  const auto m = fft::next_pow2(static_cast<std::size_t>(2 * n - 1));
#pragma omp parallel
  {
    std::vector<fft::cplx> fh(m), fg(m), fu(m), acc(m), work(m);
#pragma omp for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      std::fill(fh.begin(), fh.end(), fft::cplx{});
      for (std::int64_t t = 0; t < n; ++t) fh[t] = static_cast<double>(h[t * c + ch]);
      fft::transform(fh, false);
      std::fill(acc.begin(), acc.end(), fft::cplx{});
      for (std::int64_t b = 0; b < batch; ++b) {
        const std::int64_t off = b * n * c;
        std::fill(fg.begin(), fg.end(), fft::cplx{});
        std::fill(fu.begin(), fu.end(), fft::cplx{});
        for (std::int64_t t = 0; t < n; ++t) {
          fg[t] = static_cast<double>(gy[off + t * c + ch]);
          fu[t] = static_cast<double>(u[off + t * c + ch]);
        }
        fft::transform(fg, false);
        fft::transform(fu, false);
        for (std::size_t f = 0; f < m; ++f) {
          work[f] = fg[f] * std::conj(fh[f]);
          acc[f] += fg[f] * std::conj(fu[f]);
        }
        fft::transform(work, true);
        for (std::int64_t t = 0; t < n; ++t) gu[off + t * c + ch] = static_cast<T>(work[t].real());
      }
      fft::transform(acc, true);
      for (std::int64_t t = 0; t < n; ++t) gh[t * c + ch] = static_cast<T>(acc[t].real());
    }
  }
}

std::int64_t auto_scan_chunk(const ScanDims& dims) {
  const std::int64_t threads = max_threads();
  const std::int64_t columns = dims.batch * dims.channels;
  if (threads <= 1 || columns >= threads || dims.len < 64) return 0;
  const std::int64_t chunks = (threads + columns - 1) / columns;
  return (dims.len + chunks - 1) / chunks;
}

namespace {

// Runs the recurrence for one (batch, channel) column over [t0, t1) starting
// from state h (length s). Optionally writes y, states, and the decay product.
template <class T>
void scan_segment(const ScanDims& d, std::int64_t b, std::int64_t ch, std::int64_t t0,
                  std::int64_t t1, const T* u, const T* delta, const T* A, const T* Bm,
                  const T* Cm, T* h, T* y, T* states, T* decay_product) {
  const std::int64_t c = d.channels, s = d.state, n = d.len;
  const T* a_row = A + ch * s;
  for (std::int64_t t = t0; t < t1; ++t) {
    const std::int64_t bt = b * n + t;
    const T dt = delta[bt * c + ch];
    const T du = dt * u[bt * c + ch];
    const T* bv = Bm + bt * s;
    const T* cv = Cm + bt * s;
    T acc = 0;
    for (std::int64_t j = 0; j < s; ++j) {
      const T a = std::exp(dt * a_row[j]);
      h[j] = a * h[j] + du * bv[j];
      acc += cv[j] * h[j];
      if (decay_product) decay_product[j] *= a;
    }
    if (y) y[bt * c + ch] = acc;
    if (states) std::copy(h, h + s, states + (bt * c + ch) * s);
  }
}

}  // namespace

template <class T>
void selective_scan(const ScanDims& d, const T* u, const T* delta, const T* A, const T* Bm,
                    const T* Cm, T* y, T* states, std::int64_t chunk_len) {
  const std::int64_t n = d.len, s = d.state;
  const std::int64_t columns = d.batch * d.channels;
  if (n == 0 || columns == 0) return;
  if (chunk_len <= 0 || chunk_len >= n) {
#pragma omp parallel
    {
      std::vector<T> h(static_cast<std::size_t>(s));
#pragma omp for schedule(static)
      for (std::int64_t col = 0; col < columns; ++col) {
        std::fill(h.begin(), h.end(), T(0));
        scan_segment(d, col / d.channels, col % d.channels, 0, n, u, delta, A, Bm, Cm, h.data(),
                     y, states, static_cast<T*>(nullptr));
      }
    }
    return;
  }

  const std::int64_t chunks = (n + chunk_len - 1) / chunk_len;
  const std::int64_t units = columns * chunks;
  std::vector<T> end_state(static_cast<std::size_t>(units * s));
  std::vector<T> product(static_cast<std::size_t>(units * s));
  std::vector<T> carry(static_cast<std::size_t>(units * s));

  // Pass 1: every chunk from a zero state, tracking the product of decays.
#pragma omp parallel for schedule(static)
  for (std::int64_t unit = 0; unit < units; ++unit) {
    const std::int64_t col = unit / chunks, k = unit % chunks;
    T* h = end_state.data() + unit * s;
    T* p = product.data() + unit * s;
    std::fill(h, h + s, T(0));
    std::fill(p, p + s, T(1));
    scan_segment(d, col / d.channels, col % d.channels, k * chunk_len,
                 std::min(n, (k + 1) * chunk_len), u, delta, A, Bm, Cm, h,
                 static_cast<T*>(nullptr), static_cast<T*>(nullptr), p);
  }

  // Pass 2: carry_k = P_{k-1} carry_{k-1} + E_{k-1}.
#pragma omp parallel for schedule(static)
  for (std::int64_t col = 0; col < columns; ++col) {
    T* c0 = carry.data() + col * chunks * s;
    std::fill(c0, c0 + s, T(0));
    for (std::int64_t k = 1; k < chunks; ++k) {
      const T* prev = carry.data() + (col * chunks + k - 1) * s;
      const T* e = end_state.data() + (col * chunks + k - 1) * s;
      const T* p = product.data() + (col * chunks + k - 1) * s;
      T* cur = carry.data() + (col * chunks + k) * s;
      for (std::int64_t j = 0; j < s; ++j) cur[j] = p[j] * prev[j] + e[j];
    }
  }

  // Pass 3: rerun each chunk from its true incoming state.
#pragma omp parallel for schedule(static)
  for (std::int64_t unit = 0; unit < units; ++unit) {
    const std::int64_t col = unit / chunks, k = unit % chunks;
    T* h = carry.data() + unit * s;
    scan_segment(d, col / d.channels, col % d.channels, k * chunk_len,
                 std::min(n, (k + 1) * chunk_len), u, delta, A, Bm, Cm, h, y, states,
                 static_cast<T*>(nullptr));
  }
}

template <class T>
void selective_scan_backward(const ScanDims& d, const T* u, const T* delta, const T* A,
                             const T* Bm, const T* Cm, const T* states, const T* gy, T* gu,
                             T* gdelta, T* gA, T* gB, T* gC) {
  const std::int64_t n = d.len, c = d.channels, s = d.state, nb = d.batch;
  const std::size_t bs_size = static_cast<std::size_t>(nb * n * s);
  std::fill(gA, gA + c * s, T(0));
  std::fill(gB, gB + bs_size, T(0));
  std::fill(gC, gC + bs_size, T(0));
  const int threads = max_threads();
  // Per-thread partials for gB/gC, which every channel contributes to.
  std::vector<std::vector<T>> part_b(static_cast<std::size_t>(threads)), part_c(static_cast<std::size_t>(threads));

#pragma omp parallel
  {
    const int tid = thread_id();
    auto& pb = part_b[static_cast<std::size_t>(tid)];
    auto& pc = part_c[static_cast<std::size_t>(tid)];
    pb.assign(bs_size, T(0));
    pc.assign(bs_size, T(0));
    std::vector<T> gh(static_cast<std::size_t>(s));
#pragma omp for schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const T* a_row = A + ch * s;
      T* ga_row = gA + ch * s;
      for (std::int64_t b = 0; b < nb; ++b) {
        std::fill(gh.begin(), gh.end(), T(0));
        for (std::int64_t t = n - 1; t >= 0; --t) {
          const std::int64_t bt = b * n + t;
          const T dt = delta[bt * c + ch];
          const T ut = u[bt * c + ch];
          const T g = gy[bt * c + ch];
          const T* bv = Bm + bt * s;
          const T* cv = Cm + bt * s;
          const T* ht = states + (bt * c + ch) * s;
          const T* hp = t > 0 ? states + ((bt - 1) * c + ch) * s : nullptr;
          T* pbv = pb.data() + bt * s;
          T* pcv = pc.data() + bt * s;
          T gu_acc = 0, gd_acc = 0;
          for (std::int64_t j = 0; j < s; ++j) {
            const T hprev = hp ? hp[j] : T(0);
            gh[j] += cv[j] * g;
            pcv[j] += g * ht[j];
            const T a = std::exp(dt * a_row[j]);
            gu_acc += gh[j] * dt * bv[j];
            gd_acc += gh[j] * (bv[j] * ut + hprev * a * a_row[j]);
            pbv[j] += gh[j] * dt * ut;
            ga_row[j] += gh[j] * hprev * a * dt;
            gh[j] *= a;
          }
          gu[bt * c + ch] = gu_acc;
          gdelta[bt * c + ch] = gd_acc;
        }
      }
    }
  }
  for (int tid = 0; tid < threads; ++tid) {
    const auto& pb = part_b[static_cast<std::size_t>(tid)];
    const auto& pc = part_c[static_cast<std::size_t>(tid)];
    if (pb.empty()) continue;
    for (std::size_t i = 0; i < bs_size; ++i) {
      gB[i] += pb[i];
      gC[i] += pc[i];
    }
  }
}

#define MIXERBENCH_INSTANTIATE(T)                                                                \
  template void gemm<T>(bool, bool, std::int64_t, std::int64_t, std::int64_t, const T*,          \
                        const T*, T*);                                                           \
  template void softmax_rows<T>(const T*, T*, std::int64_t, std::int64_t);                       \
  template void softmax_rows_backward<T>(const T*, const T*, T*, std::int64_t, std::int64_t);    \
  template void layer_norm_rows<T>(const T*, const T*, const T*, T*, T*, T*, std::int64_t,       \
                                   std::int64_t, double);                                        \
  template void layer_norm_rows_backward<T>(const T*, const T*, const T*, const T*, const T*,    \
                                            T*, T*, T*, std::int64_t, std::int64_t);             \
  template void depthwise_conv1d<T>(const T*, const T*, const T*, T*, std::int64_t,              \
                                    std::int64_t, std::int64_t, std::int64_t);                   \
  template void depthwise_conv1d_backward<T>(const T*, const T*, const T*, T*, T*, T*,           \
                                             std::int64_t, std::int64_t, std::int64_t,           \
                                             std::int64_t);                                      \
  template void causal_conv_fft<T>(const T*, const T*, T*, std::int64_t, std::int64_t,           \
                                   std::int64_t);                                                \
  template void causal_conv_fft_backward<T>(const T*, const T*, const T*, T*, T*, std::int64_t,  \
                                            std::int64_t, std::int64_t);                         \
  template void selective_scan<T>(const ScanDims&, const T*, const T*, const T*, const T*,       \
                                  const T*, T*, T*, std::int64_t);                               \
  template void selective_scan_backward<T>(const ScanDims&, const T*, const T*, const T*,        \
                                           const T*, const T*, const T*, const T*, T*, T*, T*,   \
                                           T*, T*);

MIXERBENCH_INSTANTIATE(float)
MIXERBENCH_INSTANTIATE(double)

#undef MIXERBENCH_INSTANTIATE

}  // namespace mixerbench::kernels
