#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pnr/errors.hpp"
#include "pnr/rng.hpp"
#include "pnr/trace.hpp"

namespace pnr {

inline constexpr double kDefaultSampleRate = 5e9;        // samples/s
inline constexpr double kDefaultTraceDuration = 200e-9;  // seconds

/// Bi-exponential pulse template with per-photon-number peak amplitudes.
///
/// The n-photon waveform is
///     s_n(t) = C_n * (exp(-t / tau_fall) - exp(-t / tau_rise)),  t >= 0,
/// a positive-going pulse that rises on tau_rise and decays on tau_fall.
/// With peak_normalized set (the default) C_n is chosen so the continuous-time
/// maximum of s_n equals amplitudes.at(n); otherwise C_n = amplitudes.at(n)
/// and the true maximum is amplitudes.at(n) * peak_value().
struct PulseShape {
  double tau_rise = 0.21e-9;         // seconds
  double tau_fall = 25e-9;           // seconds
  std::map<int, double> amplitudes;  // photon number n -> peak amplitude, mV
  bool peak_normalized = true;

  void validate() const {
    if (!(tau_rise > 0.0)) throw ConfigError("pulse: tau_rise must be positive");
    if (!(tau_fall > 0.0)) throw ConfigError("pulse: tau_fall must be positive");
    if (!(tau_rise < tau_fall)) throw ConfigError("pulse: tau_rise must be smaller than tau_fall");
    double prev = 0.0;
    for (const auto& [n, a] : amplitudes) {
      if (n < 1) throw ConfigError("pulse: photon numbers must be >= 1");
      if (!(a > prev))
        throw ConfigError("pulse: amplitudes must be positive and strictly increasing in n");
      prev = a;
    }
  }

  /// Location of the maximum of the unit waveform u(t) = e^{-t/tf} - e^{-t/tr}.
  double peak_time() const {
    return std::log(tau_fall / tau_rise) * tau_rise * tau_fall / (tau_fall - tau_rise);
  }

  /// Value of the unit waveform at its maximum (< 1).
  double peak_value() const { return unit_value(peak_time()); }

  /// Unit waveform; zero before the arrival at t = 0.
  double unit_value(double t) const {
    if (t < 0.0) return 0.0;
    return std::exp(-t / tau_fall) - std::exp(-t / tau_rise);
  }

  double amplitude(int n) const {
    const auto it = amplitudes.find(n);
    if (it == amplitudes.end())
      throw ConfigError("pulse: no amplitude entry for photon number " + std::to_string(n));
    return it->second;
  }

  /// Scale C_n applied to the unit waveform.
  double scale(int n) const {
    const double a = amplitude(n);
    return peak_normalized ? a / peak_value() : a;
  }

  int max_photon_number() const {
    return amplitudes.empty() ? 0 : amplitudes.rbegin()->first;
  }

  /// Linear amplitude table A_n = n * A_1 for n = 1..n_max.
  static std::map<int, double> linear_amplitudes(double a1_mv, int n_max) {
    std::map<int, double> out;
    for (int n = 1; n <= n_max; ++n) out[n] = n * a1_mv;
    return out;
  }
};

/// Additive stationary white Gaussian noise.
struct NoiseModel {
  double sigma = 0.40;      // mV per sample
  std::uint64_t seed = 1;

  void validate() const {
    if (!(sigma >= 0.0)) throw ConfigError("noise: sigma must be >= 0");
  }
};

/// Electrical model of the series array readout.
struct ReadoutConfig {
  int num_pixels = 6;
  double bias_current = 10e-6;     // amperes
  double line_impedance = 50.0;    // ohms
  double shunt_resistance = 52.0;  // ohms

  void validate() const {
    if (num_pixels < 1) throw ConfigError("readout: num_pixels must be >= 1");
    if (!(bias_current > 0.0)) throw ConfigError("readout: bias_current must be positive");
    if (!(line_impedance > 0.0)) throw ConfigError("readout: line_impedance must be positive");
    if (!(shunt_resistance > 0.0)) throw ConfigError("readout: shunt_resistance must be positive");
  }
};

struct TimedEvent {
  double time = 0.0;  // seconds
  int photon_number = 1;
};

/// Arrival times with photon numbers; times must be non-decreasing.
struct EventSchedule {
  std::vector<TimedEvent> events;

  void validate() const {
    double prev = -1e300;
    for (const auto& ev : events) {
      if (!(ev.time >= prev)) throw ConfigError("schedule: event times must be non-decreasing");
      if (ev.photon_number < 1) throw ConfigError("schedule: photon numbers must be >= 1");
      prev = ev.time;
    }
  }
};

/// Output amplitude of an n-pixel detection,
/// V_n = n * I_B * Z0 / (N + Z0 / R_S), in millivolts.
inline double electrical_amplitude(const ReadoutConfig& cfg, int n) {
  cfg.validate();
  if (n < 1 || n > cfg.num_pixels)
    throw ConfigError("electrical_amplitude: n must lie in [1, num_pixels]");
  const double volts = static_cast<double>(n) * cfg.bias_current * cfg.line_impedance /
                       (cfg.num_pixels + cfg.line_impedance / cfg.shunt_resistance);
  return volts * 1e3;
}

/// Noiseless trace: the sample-wise sum of one time-shifted pulse per event.
/// The record covers [0, duration) at the given rate.
inline Trace synthesize_trace(const PulseShape& shape, const EventSchedule& schedule,
                              double sample_rate = kDefaultSampleRate,
                              double duration = kDefaultTraceDuration) {
  if (!(shape.tau_rise > 0.0) || !(shape.tau_fall > 0.0) || !(shape.tau_rise < shape.tau_fall))
    throw ConfigError("synthesize_trace: need 0 < tau_rise < tau_fall");
  if (!(sample_rate > 0.0)) throw ConfigError("synthesize_trace: sample_rate must be positive");
  if (!(duration > 0.0)) throw ConfigError("synthesize_trace: duration must be positive");
  schedule.validate();

  const auto count = static_cast<std::size_t>(std::llround(duration * sample_rate));
  if (count == 0) throw ConfigError("synthesize_trace: duration shorter than one sample");

  Trace out;
  out.sample_rate = sample_rate;
  out.start_time = 0.0;
  out.samples.assign(count, 0.0);

  for (const auto& ev : schedule.events) {
    if (!(ev.time >= 0.0) || !(ev.time < duration))
      throw ConfigError("synthesize_trace: event at t = " + std::to_string(ev.time) +
                        " s lies outside [0, duration)");
    const double c = shape.scale(ev.photon_number);
    // unit_value() is zero for t < 0, so starting a little early is harmless
    std::size_t i0 = 0;
    if (ev.time > 0.0) {
      const double first = std::floor(ev.time * sample_rate);
      i0 = first <= 0.0 ? 0 : static_cast<std::size_t>(first);
    }
    for (std::size_t i = i0; i < count; ++i) {
      const double t = static_cast<double>(i) / sample_rate - ev.time;
      out.samples[i] += c * shape.unit_value(t);
    }
  }
  return out;
}

/// Single n-photon pulse arriving at t = 0.
inline Trace synthesize_pulse(const PulseShape& shape, int n,
                              double sample_rate = kDefaultSampleRate,
                              double duration = kDefaultTraceDuration) {
  if (duration < 10.0 * shape.tau_rise)
    throw ConfigError("synthesize_pulse: duration must cover the rising edge (>= 10 * tau_rise)");
  if (duration < shape.tau_fall)
    throw ConfigError("synthesize_pulse: duration must cover at least one tau_fall");
  return synthesize_trace(shape, EventSchedule{{TimedEvent{0.0, n}}}, sample_rate, duration);
}

/// Adds sigma * g[i] to x[i], g i.i.d. standard normal from `rng`.
inline void add_noise_inplace(std::vector<double>& samples, double sigma, Rng& rng) {
  for (double& v : samples) v += sigma * rng.gaussian();
}

/// r(t) = s(t) + g(t). Deterministic: the same seed and sigma always produce
/// the same noise sequence, bit for bit.
inline Trace add_noise(const Trace& trace, const NoiseModel& noise) {
  noise.validate();
  Trace out = trace;
  if (noise.sigma == 0.0) return out;
  Rng rng(noise.seed);
  add_noise_inplace(out.samples, noise.sigma, rng);
  return out;
}

}  // namespace pnr
