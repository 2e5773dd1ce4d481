#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <numbers>
#include <vector>

#include "pnr/errors.hpp"

namespace pnr::fft {

using Complex = std::complex<double>;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace detail {

// Twiddle tables are cached per transform size. thread_local keeps hot loops
// lock-free while workers run concurrently.
inline const std::vector<Complex>& twiddles(std::size_t n) {
  thread_local std::map<std::size_t, std::vector<Complex>> cache;
  auto& table = cache[n];
  if (table.empty()) {
    table.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      table[k] = Complex(std::cos(a), std::sin(a));
    }
  }
  return table;
}

// Chirp exp(-i pi k^2 / n) for Bluestein; k^2 is reduced mod 2n to keep the
// phase argument small.
inline const std::vector<Complex>& chirp(std::size_t n) {
  thread_local std::map<std::size_t, std::vector<Complex>> cache;
  auto& table = cache[n];
  if (table.empty()) {
    table.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t sq = (static_cast<std::uint64_t>(k) * k) % (2 * n);
      const double a = -std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n);
      table[k] = Complex(std::cos(a), std::sin(a));
    }
  }
  return table;
}

}  // namespace detail

/// In-place iterative radix-2 transform. The size must be a power of two;
/// the inverse includes the 1/n factor.
inline void transform_pow2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (!is_pow2(n)) throw ConfigError("fft: transform_pow2 requires a power-of-two size");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const auto& tw = detail::twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        Complex w = tw[k * step];
        if (inverse) w = std::conj(w);
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& z : a) z *= scale;
  }
}

/// Discrete Fourier transform of any length; Bluestein's algorithm handles
/// sizes that are not powers of two.
inline void transform(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n <= 1) return;
  if (is_pow2(n)) {
    transform_pow2(a, inverse);
    return;
  }
  if (inverse) {
    // inverse via conjugation: ifft(x) = conj(fft(conj(x))) / n
    for (auto& z : a) z = std::conj(z);
    transform(a, false);
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& z : a) z = std::conj(z) * scale;
    return;
  }

  const auto& ch = detail::chirp(n);
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<Complex> x(m, Complex(0.0));
  std::vector<Complex> y(m, Complex(0.0));
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * ch[k];
  y[0] = Complex(1.0);
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(ch[k]);
  transform_pow2(x, false);
  transform_pow2(y, false);
  for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
  transform_pow2(x, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * ch[k];
}

/// Complex spectrum of a real sequence.
inline std::vector<Complex> forward_real(const std::vector<double>& x) {
  std::vector<Complex> a(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) a[i] = Complex(x[i], 0.0);
  transform(a, false);
  return a;
}

/// Full linear convolution, naive evaluation. O(n m); the reference path.
inline std::vector<double> convolve_direct(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw ConfigError("convolve: inputs must be non-empty");
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += ai * b[j];
  }
  return out;
}

/// Full linear convolution via zero-padded power-of-two FFTs.
inline std::vector<double> convolve_fft(const std::vector<double>& a,
                                        const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw ConfigError("convolve: inputs must be non-empty");
  const std::size_t out_size = a.size() + b.size() - 1;
  const std::size_t m = next_pow2(out_size);
  std::vector<Complex> fa(m, Complex(0.0));
  std::vector<Complex> fb(m, Complex(0.0));
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = Complex(a[i], 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = Complex(b[i], 0.0);
  transform_pow2(fa, false);
  transform_pow2(fb, false);
  for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
  transform_pow2(fa, true);
  std::vector<double> out(out_size);
  for (std::size_t i = 0; i < out_size; ++i) out[i] = fa[i].real();
  return out;
}

/// Convolution with the kernel `b`: direct for kernels of at most 64 taps,
/// FFT otherwise. The two paths agree to better than 1e-9 relative.
inline std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
  return b.size() <= 64 ? convolve_direct(a, b) : convolve_fft(a, b);
}

/// Repeated convolution with a fixed kernel and input length. Caches the
/// kernel spectrum and reuses scratch buffers; one instance per worker.
class Convolver {
 public:
  Convolver(std::vector<double> kernel, std::size_t input_size)
      : kernel_(std::move(kernel)), input_size_(input_size) {
    if (kernel_.empty()) throw ConfigError("Convolver: kernel must be non-empty");
    if (input_size_ == 0) throw ConfigError("Convolver: input size must be positive");
    out_size_ = input_size_ + kernel_.size() - 1;
    if (kernel_.size() <= 64) return;  // direct path
    fft_size_ = next_pow2(out_size_);
    kernel_spectrum_.assign(fft_size_, Complex(0.0));
    for (std::size_t i = 0; i < kernel_.size(); ++i) kernel_spectrum_[i] = Complex(kernel_[i], 0.0);
    transform_pow2(kernel_spectrum_, false);
  }

  std::size_t output_size() const { return out_size_; }

  void apply(const std::vector<double>& in, std::vector<double>& out) {
    if (in.size() != input_size_) throw ConfigError("Convolver: input size mismatch");
    if (fft_size_ == 0) {
      out = convolve_direct(in, kernel_);
      return;
    }
    buf_.assign(fft_size_, Complex(0.0));
    for (std::size_t i = 0; i < in.size(); ++i) buf_[i] = Complex(in[i], 0.0);
    transform_pow2(buf_, false);
    for (std::size_t i = 0; i < fft_size_; ++i) buf_[i] *= kernel_spectrum_[i];
    transform_pow2(buf_, true);
    out.resize(out_size_);
    for (std::size_t i = 0; i < out_size_; ++i) out[i] = buf_[i].real();
  }

 private:
  std::vector<double> kernel_;
  std::size_t input_size_ = 0;
  std::size_t out_size_ = 0;
  std::size_t fft_size_ = 0;  // 0 selects the direct path
  std::vector<Complex> kernel_spectrum_;
  std::vector<Complex> buf_;
};

}  // namespace pnr::fft
