#pragma once

#include <cstdint>

// Straightforward serial implementations of the compute kernels. They share
// the buffer conventions of mixerbench/kernels.hpp and exist to check and
// benchmark the parallel versions; nothing in the library calls them.
namespace mixerbench::reference {

// Triple loop, i-j-k order, accumulating in T.
template <class T>
void gemm(bool trans_a, bool trans_b, std::int64_t M, std::int64_t N, std::int64_t K, const T* A,
          const T* B, T* C);

template <class T>
void softmax_rows(const T* x, T* y, std::int64_t rows, std::int64_t len);

// Two-pass mean/variance in long double.
template <class T>
void layer_norm_rows(const T* x, const T* gamma, const T* beta, T* y, std::int64_t rows,
                     std::int64_t len, double eps);

template <class T>
void depthwise_conv1d(const T* x, const T* w, const T* bias, T* y, std::int64_t batch,
                      std::int64_t n, std::int64_t c, std::int64_t k);

// O(n^2) causal convolution: y[t] = sum_{s<=t} h[s] u[t-s], per (batch, channel).
template <class T>
void causal_conv_direct(const T* u, const T* h, T* y, std::int64_t batch, std::int64_t n,
                        std::int64_t c);

// The recurrence exactly as written, one time step after another.
template <class T>
void selective_scan_sequential(std::int64_t batch, std::int64_t n, std::int64_t c, std::int64_t s,
                               const T* u, const T* delta, const T* A, const T* Bm, const T* Cm,
                               T* y);

}  // namespace mixerbench::reference
