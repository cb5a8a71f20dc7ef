#pragma once

#include <cstdint>

// Raw compute kernels over contiguous row-major buffers. Loops are
// OpenMP-parallel over independent rows/channels; with one thread every
// kernel is bitwise deterministic. Serial oracles for each live in
// mixerbench/reference.hpp.
namespace mixerbench::kernels {

// Number of threads kernels may use (omp_get_max_threads, or 1 without OpenMP).
int max_threads();
// Pins the OpenMP thread count.
void set_threads(int n);
// Reads MIXERBENCH_THREADS (default 1) and applies it.
int apply_thread_env();

// C[M,N] = op(A) op(B), overwriting C. A is [M,K] ([K,M] when trans_a),
// B is [K,N] ([N,K] when trans_b).
template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t M, std::int64_t N, std::int64_t K, const T* A,
          const T* B, T* C);

// Row softmax over contiguous rows of length len.
template <class T>
void softmax_rows(const T* x, T* y, std::int64_t rows, std::int64_t len);

// gx = y * (gy - sum(gy * y)) per row.
template <class T>
void softmax_rows_backward(const T* y, const T* gy, T* gx, std::int64_t rows, std::int64_t len);

// y = (x - mean) * rstd * gamma + beta per row; writes mean and rstd per row.
template <class T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T* y, T* mean, T* rstd,
                     std::int64_t rows, std::int64_t len, double eps);

template <class T>
void layer_norm_rows_backward(const T* x, const T* gamma, const T* mean, const T* rstd,
                              const T* gy, T* gx, T* ggamma, T* gbeta, std::int64_t rows,
                              std::int64_t len);

// x, y: [B, n, c]; w: [c, k]; bias: [c] or nullptr. Symmetric zero padding.
template <class T>
void depthwise_conv1d(const T* x, const T* w, const T* bias, T* y, std::int64_t batch,
                      std::int64_t n, std::int64_t c, std::int64_t k);

template <class T>
void depthwise_conv1d_backward(const T* x, const T* w, const T* gy, T* gx, T* gw, T* gbias,
                               std::int64_t batch, std::int64_t n, std::int64_t c, std::int64_t k);

// Causal FFT convolution, per (batch, channel) column: u, y: [B, n, c]; h: [n, c].
template <class T>
void causal_conv_fft(const T* u, const T* h, T* y, std::int64_t batch, std::int64_t n,
                     std::int64_t c);

// Adjoints of causal_conv_fft (cross-correlations); gh is summed over batch.
template <class T>
void causal_conv_fft_backward(const T* u, const T* h, const T* gy, T* gu, T* gh,
                              std::int64_t batch, std::int64_t n, std::int64_t c);

struct ScanDims {
  std::int64_t batch = 1;
  std::int64_t len = 0;       // n
  std::int64_t channels = 0;  // c
  std::int64_t state = 0;     // s
};

// Selective scan with h_0 = 0:
//   h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t,   y_t = <C_t, h_t>.
// u, delta, y: [B, n, c]; A: [c, s]; Bm, Cm: [B, n, s]; states (optional):
// [B, n, c, s]. The sequence is split into chunks of chunk_len steps that are
// evaluated from a zero state in parallel, then stitched with the carried
// state and the running product of the decays. chunk_len <= 0 or >= n gives
// the plain sequential recurrence per channel.
template <class T>
void selective_scan(const ScanDims& dims, const T* u, const T* delta, const T* A, const T* Bm,
                    const T* Cm, T* y, T* states, std::int64_t chunk_len);

// Chunk length used when selective_scan is asked to choose.
std::int64_t auto_scan_chunk(const ScanDims& dims);

template <class T>
void selective_scan_backward(const ScanDims& dims, const T* u, const T* delta, const T* A,
                             const T* Bm, const T* Cm, const T* states, const T* gy, T* gu,
                             T* gdelta, T* gA, T* gB, T* gC);

}  // namespace mixerbench::kernels
