#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

// Iterative radix-2 FFT. Sizes must be powers of two; callers zero-pad.
namespace mixerbench::fft {

using cplx = std::complex<double>;

bool is_pow2(std::size_t n);
std::size_t next_pow2(std::size_t n);

// In place. The inverse includes the 1/m scale.
void transform(std::span<cplx> a, bool inverse);

// x zero-padded to m (a power of two >= x.size()); returns the m/2 + 1
// non-redundant bins.
std::vector<cplx> rfft(std::span<const double> x, std::size_t m);
// Inverse of rfft: bins.size() == m/2 + 1, returns m real samples.
std::vector<double> irfft(std::span<const cplx> bins, std::size_t m);

// Causal linear convolution truncated to n = u.size():
// out[t] = sum_{s<=t} h[s] u[t-s]. Both inputs are padded to the next power
// of two >= 2n-1 so the circular product has no wrap-around.
std::vector<double> fft_linear_conv(std::span<const double> u, std::span<const double> h);

}  // namespace mixerbench::fft
