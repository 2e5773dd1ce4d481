#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "pnr/errors.hpp"
#include "pnr/fft.hpp"
#include "pnr/signal_model.hpp"
#include "pnr/trace.hpp"

namespace pnr {

enum class KernelNormalization { unit_energy, unit_peak, raw };

inline const char* to_string(KernelNormalization n) {
  switch (n) {
    case KernelNormalization::unit_energy: return "unit_energy";
    case KernelNormalization::unit_peak: return "unit_peak";
    case KernelNormalization::raw: return "raw";
  }
  return "unit_energy";
}

inline KernelNormalization kernel_normalization_from_string(const std::string& s) {
  if (s == "unit_energy") return KernelNormalization::unit_energy;
  if (s == "unit_peak") return KernelNormalization::unit_peak;
  if (s == "raw") return KernelNormalization::raw;
  throw ConfigError("unknown kernel normalization '" + s + "'");
}

/// Discrete FIR impulse response.
struct FilterKernel {
  std::vector<double> taps;
  double sample_rate = kDefaultSampleRate;
  KernelNormalization normalization = KernelNormalization::unit_energy;

  double duration() const { return static_cast<double>(taps.size()) / sample_rate; }

  void validate() const {
    if (taps.empty()) throw ConfigError("kernel: taps must be non-empty");
    if (!(sample_rate > 0.0)) throw ConfigError("kernel: sample_rate must be positive");
    double energy = 0.0;
    for (double t : taps) {
      if (!std::isfinite(t)) throw ConfigError("kernel: taps must be finite");
      energy += t * t;
    }
    if (normalization == KernelNormalization::unit_energy && std::abs(energy - 1.0) > 1e-9)
      throw ConfigError("kernel: unit_energy taps must satisfy sum(taps^2) = 1");
  }
};

namespace detail {

// Fraction of the total pulse energy contained in [0, T], in closed form:
// integral of (e^{-t/tf} - e^{-t/tr})^2.
inline double pulse_energy_fraction(double tau_rise, double tau_fall, double duration) {
  const double tr = tau_rise, tf = tau_fall, T = duration;
  const double cross = 2.0 * tr * tf / (tr + tf);
  const double total = tf / 2.0 + tr / 2.0 - cross;
  const double upto = tf / 2.0 * (1.0 - std::exp(-2.0 * T / tf)) +
                      tr / 2.0 * (1.0 - std::exp(-2.0 * T / tr)) -
                      cross * (1.0 - std::exp(-T * (tr + tf) / (tr * tf)));
  return upto / total;
}

}  // namespace detail

/// Matched template: the time-reversed sampled unit pulse. The modeled shape
/// does not depend on the photon number, so one template serves every n;
/// callers that want per-n templates can build or load their own kernels.
inline FilterKernel build_matched_template(const PulseShape& shape,
                                           double sample_rate = kDefaultSampleRate,
                                           double duration = 125e-9,
                                           KernelNormalization normalization =
                                               KernelNormalization::unit_energy) {
  if (!(shape.tau_rise > 0.0) || !(shape.tau_fall > 0.0) || !(shape.tau_rise < shape.tau_fall))
    throw ConfigError("matched template: need 0 < tau_rise < tau_fall");
  if (!(sample_rate > 0.0)) throw ConfigError("matched template: sample_rate must be positive");
  if (!(duration > 0.0)) throw ConfigError("matched template: duration must be positive");

  const double captured = detail::pulse_energy_fraction(shape.tau_rise, shape.tau_fall, duration);
  if (captured < 0.99)
    throw ConfigError("matched template: duration too short, captures " +
                      std::to_string(captured * 100.0) + "% of the pulse energy (>= 99% required)");

  const auto taps_count = static_cast<std::size_t>(std::llround(duration * sample_rate));
  if (taps_count < 2) throw ConfigError("matched template: fewer than 2 taps");

  FilterKernel kernel;
  kernel.sample_rate = sample_rate;
  kernel.normalization = normalization;
  kernel.taps.resize(taps_count);
  const double peak = shape.peak_value();
  for (std::size_t k = 0; k < taps_count; ++k) {
    const double t = static_cast<double>(taps_count - 1 - k) / sample_rate;
    kernel.taps[k] = shape.unit_value(t) / peak;
  }

  if (normalization == KernelNormalization::unit_energy) {
    double energy = 0.0;
    for (double t : kernel.taps) energy += t * t;
    const double inv = 1.0 / std::sqrt(energy);
    for (double& t : kernel.taps) t *= inv;
  } else if (normalization == KernelNormalization::unit_peak) {
    double peak_tap = 0.0;
    for (double t : kernel.taps) peak_tap = std::max(peak_tap, std::abs(t));
    for (double& t : kernel.taps) t /= peak_tap;
  }
  return kernel;
}

/// Full convolution of the trace with the kernel (length n + m - 1). The
/// output start time is shifted by -(m - 1)/fs, which places the correlation
/// peak of an isolated pulse on the pulse onset time; repeated pulses
/// therefore map to consistent arrival times.
inline Trace apply_filter(const Trace& trace, const FilterKernel& kernel) {
  trace.validate();
  kernel.validate();
  const double rel = std::abs(trace.sample_rate - kernel.sample_rate) /
                     std::max(trace.sample_rate, kernel.sample_rate);
  if (rel > 1e-9)
    throw ConfigError("apply_filter: trace and kernel sample rates differ");

  Trace out;
  out.sample_rate = trace.sample_rate;
  out.start_time =
      trace.start_time - static_cast<double>(kernel.taps.size() - 1) / trace.sample_rate;
  out.samples = fft::convolve(trace.samples, kernel.taps);
  return out;
}

enum class LowpassKind { brickwall_fft, single_pole };

inline const char* to_string(LowpassKind k) {
  return k == LowpassKind::brickwall_fft ? "brickwall_fft" : "single_pole";
}

inline LowpassKind lowpass_kind_from_string(const std::string& s) {
  if (s == "brickwall_fft") return LowpassKind::brickwall_fft;
  if (s == "single_pole") return LowpassKind::single_pole;
  throw ConfigError("unknown lowpass kind '" + s + "'");
}

namespace detail {

inline void brickwall_inplace(std::vector<double>& x, double sample_rate, double cutoff_hz) {
  const std::size_t n = x.size();
  std::vector<fft::Complex> spec(n);
  for (std::size_t i = 0; i < n; ++i) spec[i] = fft::Complex(x[i], 0.0);
  fft::transform(spec, false);
  const double keep = cutoff_hz * (1.0 + 1e-12);
  for (std::size_t k = 0; k < n; ++k) {
    const double idx = k <= n / 2 ? static_cast<double>(k)
                                  : static_cast<double>(k) - static_cast<double>(n);
    const double f = std::abs(idx) * sample_rate / static_cast<double>(n);
    if (f > keep) spec[k] = fft::Complex(0.0);
  }
  fft::transform(spec, true);
  for (std::size_t i = 0; i < n; ++i) x[i] = spec[i].real();
}

inline void single_pole_inplace(std::vector<double>& x, double sample_rate, double cutoff_hz) {
  // alpha chosen so the recursion has its -3 dB point exactly at the cutoff:
  // solve |H(e^{jw})|^2 = 1/2 for y[i] = y[i-1] + alpha (x[i] - y[i-1]).
  const double w = 2.0 * std::numbers::pi * cutoff_hz / sample_rate;
  const double c = 1.0 - std::cos(w);
  const double alpha = -c + std::sqrt(c * c + 2.0 * c);
  double y = x.empty() ? 0.0 : x.front();  // settle on the first sample so DC passes exactly
  for (double& v : x) {
    y += alpha * (v - y);
    v = y;
  }
}

}  // namespace detail

/// Low-pass filter. brickwall_fft zeroes every spectral bin strictly above
/// the cutoff; single_pole is a causal first-order recursion with its -3 dB
/// point at the cutoff.
inline Trace apply_lowpass(const Trace& trace, double cutoff_hz, LowpassKind kind) {
  trace.validate();
  const double nyquist = trace.sample_rate / 2.0;
  if (!(cutoff_hz > 0.0) || cutoff_hz > nyquist * (1.0 + 1e-12))
    throw ConfigError("apply_lowpass: cutoff must lie in (0, Nyquist]");
  Trace out = trace;
  if (kind == LowpassKind::brickwall_fft)
    detail::brickwall_inplace(out.samples, out.sample_rate, cutoff_hz);
  else
    detail::single_pole_inplace(out.samples, out.sample_rate, cutoff_hz);
  return out;
}

/// One-sided amplitude spectral density on a uniform frequency grid.
struct Spectrum {
  std::vector<double> frequencies;  // Hz, from 0 towards Nyquist
  std::vector<double> magnitudes;   // mV / sqrt(Hz)

  void validate() const {
    if (frequencies.size() != magnitudes.size())
      throw ConfigError("spectrum: frequency and magnitude counts differ");
    if (frequencies.empty()) throw ConfigError("spectrum: must be non-empty");
    for (std::size_t i = 1; i < frequencies.size(); ++i)
      if (!(frequencies[i] > frequencies[i - 1]))
        throw ConfigError("spectrum: frequencies must be strictly increasing");
    for (double m : magnitudes)
      if (!(m >= 0.0)) throw ConfigError("spectrum: magnitudes must be >= 0");
  }
};

/// Welch-style averaged spectrum. With one segment the full record is used
/// with a rectangular window, so Parseval holds exactly; with more segments
/// a periodic Hann window and 50% overlap are used and the segment length is
/// the largest L with (segments + 1) L / 2 <= n.
inline Spectrum power_spectrum(const Trace& trace, int averaging_segments = 1) {
  trace.validate();
  if (averaging_segments < 1) throw ConfigError("power_spectrum: segments must be >= 1");
  const std::size_t n = trace.samples.size();
  const auto segments = static_cast<std::size_t>(averaging_segments);
  if (n < segments) throw DataError("power_spectrum: trace shorter than segment count");

  std::size_t seg_len = segments == 1 ? n : (2 * n / (segments + 1)) & ~std::size_t(1);
  if (seg_len < 2) throw DataError("power_spectrum: segments too short");
  const std::size_t hop = segments == 1 ? 0 : seg_len / 2;

  std::vector<double> window(seg_len, 1.0);
  if (segments > 1) {
    for (std::size_t i = 0; i < seg_len; ++i)
      window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                        static_cast<double>(seg_len)));
  }
  double window_power = 0.0;
  for (double w : window) window_power += w * w;

  const std::size_t bins = seg_len / 2 + 1;
  std::vector<double> psd(bins, 0.0);
  std::vector<fft::Complex> buf(seg_len);
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t off = s * hop;
    for (std::size_t i = 0; i < seg_len; ++i)
      buf[i] = fft::Complex(trace.samples[off + i] * window[i], 0.0);
    fft::transform(buf, false);
    for (std::size_t k = 0; k < bins; ++k) {
      const bool unpaired = k == 0 || (seg_len % 2 == 0 && k == seg_len / 2);
      const double factor = unpaired ? 1.0 : 2.0;
      psd[k] += factor * std::norm(buf[k]) / (trace.sample_rate * window_power);
    }
  }

  Spectrum out;
  out.frequencies.resize(bins);
  out.magnitudes.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    out.frequencies[k] =
        static_cast<double>(k) * trace.sample_rate / static_cast<double>(seg_len);
    out.magnitudes[k] = std::sqrt(psd[k] / static_cast<double>(segments));
  }
  return out;
}

/// Lowest frequency where the signal magnitude first falls to the noise
/// magnitude, linearly interpolated between bins.
inline double characteristic_frequency(const Spectrum& signal, const Spectrum& noise) {
  signal.validate();
  noise.validate();
  if (signal.frequencies.size() != noise.frequencies.size())
    throw ConfigError("characteristic_frequency: spectra must share a frequency grid");
  for (std::size_t i = 0; i < signal.frequencies.size(); ++i) {
    const double rel = std::abs(signal.frequencies[i] - noise.frequencies[i]);
    if (rel > 1e-6 * std::max(1.0, std::abs(signal.frequencies[i])))
      throw ConfigError("characteristic_frequency: spectra must share a frequency grid");
  }
  if (!(signal.magnitudes.front() > noise.magnitudes.front()))
    throw NoCrossing("characteristic_frequency: signal does not exceed noise at the lowest bin");
  for (std::size_t i = 1; i < signal.magnitudes.size(); ++i) {
    const double d_prev = signal.magnitudes[i - 1] - noise.magnitudes[i - 1];
    const double d = signal.magnitudes[i] - noise.magnitudes[i];
    if (d <= 0.0) {
      const double f_prev = signal.frequencies[i - 1];
      const double f = signal.frequencies[i];
      return f_prev + d_prev * (f - f_prev) / (d_prev - d);
    }
  }
  throw NoCrossing("characteristic_frequency: spectra do not cross in band");
}

}  // namespace pnr
