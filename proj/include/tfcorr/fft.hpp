#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace tfcorr::fft {

bool is_pow2(int64_t n);

// In-place iterative radix-2 transform; n must be a power of two. The inverse
// includes the 1/n factor. Always double precision.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

// Real-input transform: n samples -> n/2 + 1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> x);

// Hermitian inverse of rfft: n/2 + 1 bins -> n real samples.
std::vector<double> irfft(std::span<const std::complex<double>> bins, int64_t n);

}  // namespace tfcorr::fft
