#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mixerbench/tensor.hpp"

// Differentiable primitives. Each one records itself on the active tape when
// any input requires a gradient, and (while finite checks are enabled) throws
// NonFiniteError if its output contains NaN or Inf.
namespace mixerbench {

// --- elementwise, numpy-style broadcasting --------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor reciprocal(const Tensor& x);
Tensor square(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);  // erf form
Tensor softplus(const Tensor& x);

Shape broadcast_shapes(const Shape& a, const Shape& b);
// Sums `x` down to `shape` (the reverse of broadcasting). Not recorded.
Tensor sum_to(const Tensor& x, const Shape& shape);

// --- linear algebra ---------------------------------------------------------
// op(a) @ op(b) on the trailing two axes. Leading (batch) axes must match, or
// one side may be rank 2 and is then shared across the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
// x @ w (+ bias)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = {});

// --- shape -----------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor permute(const Tensor& x, const std::vector<int>& order);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t end);
Tensor pad(const Tensor& x, int axis, std::int64_t before, std::int64_t after);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// out.flat[i] = x.flat[index[i]], or 0 where index[i] < 0. The adjoint
// scatter-adds. Most layout transforms are expressed through this.
using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;
Tensor gather(const Tensor& x, Shape out_shape, IndexMap index);

// rows of `table` ([V, d]) selected by `indices` -> [len, d]
Tensor embedding(const Tensor& table, std::span<const std::int64_t> indices);

// --- reductions ------------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

// --- network primitives ----------------------------------------------------
Tensor softmax(const Tensor& x, int axis);
// Softmax over the last axis of x + bias. `bias` broadcasts against x, is not
// differentiated, and may hold -inf (those weights come out exactly 0).
Tensor masked_softmax(const Tensor& x, const Tensor& bias);
Tensor log_softmax(const Tensor& x, int axis);
// Normalises over the last axis; gamma and beta have the last axis's extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
// x: [B, n, c], w: [c, k] with odd k, zero "same" padding; bias [c] optional.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias = {});
// Causal linear convolution along n via FFT: y[b,t,c] = sum_{s<=t} h[s,c] u[b,t-s,c].
// u: [B, n, c] (or [n, c]), h: [n, c].
Tensor causal_conv(const Tensor& u, const Tensor& h);
// Selective scan. u, delta: [B, n, c]; A: [c, s] (strictly negative);
// Bm, Cm: [B, n, s]. Rank-2 u/delta/Bm/Cm are treated as B = 1.
// chunk_len 0 picks the evaluation strategy automatically.
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& Bm,
                      const Tensor& Cm, std::int64_t chunk_len = 0);
// Mean negative log-likelihood of labels under softmax(logits). logits [N, K].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels);
// Separable Gaussian blur over the spatial axes of [C, spatial...], zero
// padding, radius ceil(3 sigma).
Tensor gaussian_blur(const Tensor& x, double sigma);

// --- FLOP accounting -------------------------------------------------------
// Counts multiply-accumulate work (2 flops per MAC) performed by matmul,
// depthwise_conv1d, causal_conv (FFT butterflies + spectral products) and
// selective_scan. Elementwise, normalisation and softmax work is not counted.
std::uint64_t flop_counter();
void reset_flop_counter();

std::uint64_t fft_flops(std::int64_t size);  // one radix-2 transform
std::int64_t conv_fft_size(std::int64_t n);  // next power of two >= 2n-1

}  // namespace mixerbench
