#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "itsgw/core/error.hpp"

namespace itsgw::audio {

using Complex = std::complex<double>;

inline constexpr std::size_t kMinFftSize = 4;
inline constexpr std::size_t kMaxFftSize = 4096;

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Iterative in-place radix-2 decimation-in-time FFT, unnormalized forward
/// transform X[k] = sum_j x[j] exp(-2 pi i j k / n).
inline void fft_radix2_inplace(std::span<Complex> x) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n) || n < kMinFftSize || n > kMaxFftSize)
    fail(errc::not_power_of_two, "FFT size " + std::to_string(n) + " must be a power of two in [4, 4096]");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // twiddles computed directly rather than by recurrence to avoid drift
        const Complex w = std::polar(1.0, angle * static_cast<double>(k));
        const Complex even = x[start + k];
        const Complex odd = x[start + k + half] * w;
        x[start + k] = even + odd;
        x[start + k + half] = even - odd;
      }
    }
  }
}

inline std::vector<Complex> fft_radix2(std::span<const Complex> signal, std::size_t n) {
  if (signal.size() != n) fail(errc::invalid_argument, "signal length must equal n");
  std::vector<Complex> out(signal.begin(), signal.end());
  fft_radix2_inplace(out);
  return out;
}

}  // namespace itsgw::audio
