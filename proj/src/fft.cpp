#include "tfcorr/fft.hpp"

#include <cmath>
#include <numbers>

#include "tfcorr/tensor.hpp"

namespace tfcorr::fft {

bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  TFC_CHECK(is_pow2(static_cast<int64_t>(n)), "fft: size " << n
                                                           << " is not a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) *
                       (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const int64_t n = static_cast<int64_t>(x.size());
  std::vector<std::complex<double>> a(x.begin(), x.end());
  fft_inplace(a, false);
  a.resize(static_cast<size_t>(n / 2 + 1));
  return a;
}

std::vector<double> irfft(std::span<const std::complex<double>> bins, int64_t n) {
  TFC_CHECK(static_cast<int64_t>(bins.size()) == n / 2 + 1,
            "irfft: expected " << n / 2 + 1 << " bins, got " << bins.size());
  std::vector<std::complex<double>> a(static_cast<size_t>(n));
  for (int64_t k = 0; k <= n / 2; ++k) a[static_cast<size_t>(k)] = bins[static_cast<size_t>(k)];
  for (int64_t k = n / 2 + 1; k < n; ++k)
    a[static_cast<size_t>(k)] = std::conj(bins[static_cast<size_t>(n - k)]);
  fft_inplace(a, true);
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)].real();
  return out;
}

}  // namespace tfcorr::fft
