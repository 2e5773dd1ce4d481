#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pnr/discrimination.hpp"
#include "pnr/errors.hpp"
#include "pnr/filtering.hpp"
#include "pnr/parallel.hpp"
#include "pnr/rng.hpp"
#include "pnr/signal_model.hpp"

namespace pnr {

enum class FilterType { none, matched, lowpass, custom };

inline const char* to_string(FilterType t) {
  switch (t) {
    case FilterType::none: return "none";
    case FilterType::matched: return "matched";
    case FilterType::lowpass: return "lowpass";
    case FilterType::custom: return "custom";
  }
  return "none";
}

inline FilterType filter_type_from_string(const std::string& s) {
  if (s == "none") return FilterType::none;
  if (s == "matched") return FilterType::matched;
  if (s == "lowpass") return FilterType::lowpass;
  if (s == "custom") return FilterType::custom;
  throw ConfigError("unknown filter type '" + s + "'");
}

/// Which filter an experiment applies before peak extraction.
struct FilterSpec {
  FilterType type = FilterType::matched;
  double lowpass_cutoff_hz = 65e6;
  LowpassKind lowpass_kind = LowpassKind::brickwall_fft;
  double template_duration = 125e-9;  // matched template length, seconds
  KernelNormalization normalization = KernelNormalization::unit_energy;
  std::optional<FilterKernel> custom_kernel;         // user-supplied template
  std::map<int, FilterKernel> per_photon_templates;  // optional per-n override

  void validate(double sample_rate) const {
    if (type == FilterType::lowpass) {
      if (!(lowpass_cutoff_hz > 0.0) || lowpass_cutoff_hz > sample_rate / 2.0 * (1.0 + 1e-12))
        throw ConfigError("filter: lowpass cutoff must lie in (0, Nyquist]");
    }
    if (type == FilterType::custom && !custom_kernel && per_photon_templates.empty())
      throw ConfigError("filter: custom filter requires a kernel");
    if (type == FilterType::matched && !(template_duration > 0.0))
      throw ConfigError("filter: template_duration must be positive");
  }
};

/// Everything one simulated study needs. Trials are independent: trial i
/// draws from the RNG substream (seed, i), so reports are bit-identical for
/// any worker count.
struct ExperimentConfig {
  PulseShape shape;
  NoiseModel noise;
  ReadoutConfig readout;
  FilterSpec filter;
  int trials = 10000;
  std::uint64_t seed = 1;
  double sample_rate = kDefaultSampleRate;
  double duration = kDefaultTraceDuration;
  double arrival_time = 40e-9;     // pulse start within each record
  double mean_photon_number = 5.7; // used by discrimination-style runs
  int threads = 0;                 // 0 = hardware, capped by PNR_THREADS

  void validate() const {
    shape.validate();
    noise.validate();
    readout.validate();
    filter.validate(sample_rate);
    if (trials < 1) throw ConfigError("experiment: trials must be >= 1");
    if (!(sample_rate > 0.0)) throw ConfigError("experiment: sample_rate must be positive");
    if (!(duration > 0.0)) throw ConfigError("experiment: duration must be positive");
    if (!(arrival_time >= 0.0) || !(arrival_time < duration))
      throw ConfigError("experiment: arrival_time must lie in [0, duration)");
  }
};

/// Kernel used for photon number n under this spec.
inline FilterKernel resolve_template(const FilterSpec& spec, const PulseShape& shape,
                                     double sample_rate, int n) {
  const auto it = spec.per_photon_templates.find(n);
  if (it != spec.per_photon_templates.end()) return it->second;
  if (spec.custom_kernel) return *spec.custom_kernel;
  return build_matched_template(shape, sample_rate, spec.template_duration, spec.normalization);
}

namespace detail {

// Applies the configured filter to raw sample buffers of a fixed length.
// Keeps the kernel spectrum and scratch buffers, so one instance serves a
// whole worker loop; copy per worker, the instances are independent.
class PulseProcessor {
 public:
  PulseProcessor(const ExperimentConfig& cfg, int n, std::size_t input_size)
      : type_(cfg.filter.type),
        sample_rate_(cfg.sample_rate),
        cutoff_(cfg.filter.lowpass_cutoff_hz),
        kind_(cfg.filter.lowpass_kind) {
    if (type_ == FilterType::matched || type_ == FilterType::custom) {
      FilterKernel kernel = resolve_template(cfg.filter, cfg.shape, cfg.sample_rate, n);
      kernel.validate();
      const double rel = std::abs(kernel.sample_rate - cfg.sample_rate) /
                         std::max(kernel.sample_rate, cfg.sample_rate);
      if (rel > 1e-9) throw ConfigError("filter: kernel sample rate differs from the trace rate");
      start_shift_ = -static_cast<double>(kernel.taps.size() - 1) / cfg.sample_rate;
      convolver_.emplace(std::move(kernel.taps), input_size);
    }
  }

  /// Seconds to add to the input start time to timestamp the output.
  double start_shift() const { return start_shift_; }

  const std::vector<double>& process(const std::vector<double>& in) {
    switch (type_) {
      case FilterType::none:
        out_ = in;
        break;
      case FilterType::lowpass:
        out_ = in;
        if (kind_ == LowpassKind::brickwall_fft)
          brickwall_inplace(out_, sample_rate_, cutoff_);
        else
          single_pole_inplace(out_, sample_rate_, cutoff_);
        break;
      case FilterType::matched:
      case FilterType::custom:
        convolver_->apply(in, out_);
        break;
    }
    return out_;
  }

 private:
  FilterType type_;
  double sample_rate_;
  double cutoff_;
  LowpassKind kind_;
  double start_shift_ = 0.0;
  std::optional<fft::Convolver> convolver_;
  std::vector<double> out_;
};

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;
};

inline MeanStd mean_and_sample_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  MeanStd out;
  out.mean = mean;
  out.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return out;
}

}  // namespace detail

/// Monte Carlo SNR of n-photon detections: the filtered value at the known
/// template-overlap peak, averaged over noisy trials, divided by its spread.
/// The peak position comes from the noiseless reference, which is where the
/// signal and template overlap completely.
inline double monte_carlo_snr(const ExperimentConfig& config, int n) {
  config.validate();
  if (config.trials < 100) throw ConfigError("monte_carlo_snr: trials must be >= 100");
  if (config.noise.sigma == 0.0)
    throw InfiniteResult("monte_carlo_snr: sigma = 0 makes the SNR infinite");

  const Trace clean = synthesize_trace(
      config.shape, EventSchedule{{TimedEvent{config.arrival_time, n}}}, config.sample_rate,
      config.duration);
  detail::PulseProcessor reference_proc(config, n, clean.samples.size());
  const std::vector<double> clean_out = reference_proc.process(clean.samples);
  const std::size_t ref_index = static_cast<std::size_t>(
      std::max_element(clean_out.begin(), clean_out.end()) - clean_out.begin());

  const auto trials = static_cast<std::size_t>(config.trials);
  std::vector<double> peaks(trials);
  parallel_chunks(trials, resolve_thread_count(config.threads),
                  [&](std::size_t begin, std::size_t end) {
                    detail::PulseProcessor proc(config, n, clean.samples.size());
                    std::vector<double> noisy;
                    for (std::size_t i = begin; i < end; ++i) {
                      noisy = clean.samples;
                      Rng rng = Rng::stream(config.seed, i);
                      add_noise_inplace(noisy, config.noise.sigma, rng);
                      peaks[i] = proc.process(noisy)[ref_index];
                    }
                  });

  const auto stats = detail::mean_and_sample_std(peaks);
  if (stats.stddev == 0.0)
    throw InfiniteResult("monte_carlo_snr: zero variance across trials");
  return stats.mean / stats.stddev;
}

/// FWHM jitter of (measured - reference) arrival times over noisy trials.
/// Unfiltered runs time the rising edge with a threshold; filtered runs use
/// the refined peak time. The default threshold sits at the maximum-slope
/// point of the noiseless pulse. Trials whose measurement fails are dropped;
/// the method minimum must survive.
inline double run_jitter_experiment(const ExperimentConfig& config, int n, JitterMethod method,
                                    std::optional<double> threshold_mv = std::nullopt) {
  config.validate();
  if (config.trials < 1000) throw ConfigError("run_jitter_experiment: trials must be >= 1000");

  // snap the arrival onto the sample grid so discretization adds no spread
  const double arrival =
      std::round(config.arrival_time * config.sample_rate) / config.sample_rate;
  ExperimentConfig cfg = config;
  cfg.arrival_time = arrival;

  const Trace clean = synthesize_trace(cfg.shape, EventSchedule{{TimedEvent{arrival, n}}},
                                       cfg.sample_rate, cfg.duration);
  detail::PulseProcessor reference_proc(cfg, n, clean.samples.size());
  Trace clean_out;
  clean_out.sample_rate = cfg.sample_rate;
  clean_out.start_time = clean.start_time + reference_proc.start_shift();
  clean_out.samples = reference_proc.process(clean.samples);

  const bool use_threshold = cfg.filter.type == FilterType::none;
  double reference_time = 0.0;
  double threshold = 0.0;
  double win_begin = 0.0, win_end = 0.0;

  if (use_threshold) {
    // default threshold: midpoint of the steepest sample step of the clean edge
    const auto arr_idx = static_cast<std::size_t>(std::llround(arrival * cfg.sample_rate));
    std::size_t steepest = arr_idx;
    double best_step = -std::numeric_limits<double>::infinity();
    const std::size_t search_end =
        std::min(clean.samples.size() - 1,
                 arr_idx + static_cast<std::size_t>(std::llround(
                               10.0 * cfg.shape.tau_rise * cfg.sample_rate)) + 2);
    for (std::size_t i = arr_idx; i < search_end; ++i) {
      const double step = clean.samples[i + 1] - clean.samples[i];
      if (step > best_step) {
        best_step = step;
        steepest = i;
      }
    }
    threshold = threshold_mv.value_or(
        0.5 * (clean.samples[steepest] + clean.samples[steepest + 1]));
    win_begin = arrival;
    win_end = std::min(clean.end_time(), arrival + 10e-9);
    reference_time = threshold_crossing_time(clean, threshold, Edge::rising, win_begin, win_end);
  } else {
    const auto ref_peak = detect_peak(clean_out);
    reference_time = ref_peak.peak_time;
    win_begin = std::max(clean_out.start_time, reference_time - 5e-9);
    win_end = std::min(clean_out.end_time(), reference_time + 5e-9);
  }

  const auto trials = static_cast<std::size_t>(cfg.trials);
  constexpr double kFailed = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> delays(trials, kFailed);
  parallel_chunks(trials, resolve_thread_count(cfg.threads),
                  [&](std::size_t begin, std::size_t end) {
                    detail::PulseProcessor proc(cfg, n, clean.samples.size());
                    Trace work;
                    work.sample_rate = cfg.sample_rate;
                    for (std::size_t i = begin; i < end; ++i) {
                      std::vector<double> noisy = clean.samples;
                      Rng rng = Rng::stream(cfg.seed, i);
                      add_noise_inplace(noisy, cfg.noise.sigma, rng);
                      try {
                        if (use_threshold) {
                          work.start_time = clean.start_time;
                          work.samples = std::move(noisy);
                          delays[i] = threshold_crossing_time(work, threshold, Edge::rising,
                                                              win_begin, win_end) -
                                      reference_time;
                        } else {
                          work.start_time = clean.start_time + proc.start_shift();
                          work.samples = proc.process(noisy);
                          delays[i] =
                              detect_peak(work, win_begin, win_end).peak_time - reference_time;
                        }
                      } catch (const DataError&) {
                        // no crossing or unbracketed peak in this trial; dropped below
                      }
                    }
                  });

  std::vector<double> usable;
  usable.reserve(trials);
  for (double d : delays)
    if (!std::isnan(d)) usable.push_back(d);
  const std::size_t min_count = method == JitterMethod::gaussian_fit ? 100 : 1000;
  if (usable.size() < min_count)
    throw DataError("run_jitter_experiment: insufficient crossings/peaks (" +
                    std::to_string(usable.size()) + " usable trials)");
  return timing_jitter(usable, method);
}

/// Full amplitude-discrimination study on one configuration.
struct DiscriminationReport {
  AmplitudeHistogram histogram;
  MixtureFit fit;
  std::vector<double> spacings;          // S_{n,n+1} for adjacent components
  std::vector<double> per_photon_snr;    // fitted mean / fitted sigma per component
  double mu_estimate = 0.0;
  std::map<int, std::uint64_t> fired_counts;  // classified counts, k = 0..N
  std::uint64_t total_pulses = 0;
  std::uint64_t zero_photon_pulses = 0;
  int histogram_bins = 0;
};

/// Simulates `trials` optical pulses at mean photon number mu: draws the
/// fired-pixel count per pulse, synthesizes and filters the record, extracts
/// the peak, fits a k = N mixture to the amplitude histogram and closes the
/// loop with a maximum-likelihood estimate of mu from the classified counts.
inline DiscriminationReport run_discrimination_experiment(const ExperimentConfig& config,
                                                          double mu) {
  config.validate();
  if (!(mu > 0.0)) throw ConfigError("run_discrimination_experiment: mu must be positive");
  const int pixels = config.readout.num_pixels;
  for (int k = 1; k <= pixels; ++k) config.shape.amplitude(k);  // amplitudes must cover 1..N

  const PhotonStatistics stats = fired_pixel_distribution(mu, pixels);
  std::vector<double> cdf(stats.fired_probabilities.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += stats.fired_probabilities[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;

  // clean records and detection windows per fired-pixel count
  std::vector<Trace> clean(static_cast<std::size_t>(pixels) + 1);
  std::vector<double> win_begin(clean.size(), 0.0), win_end(clean.size(), 0.0);
  for (int k = 1; k <= pixels; ++k) {
    clean[static_cast<std::size_t>(k)] =
        synthesize_trace(config.shape, EventSchedule{{TimedEvent{config.arrival_time, k}}},
                         config.sample_rate, config.duration);
    detail::PulseProcessor proc(config, k, clean[static_cast<std::size_t>(k)].samples.size());
    Trace out;
    out.sample_rate = config.sample_rate;
    out.start_time = clean[static_cast<std::size_t>(k)].start_time + proc.start_shift();
    out.samples = proc.process(clean[static_cast<std::size_t>(k)].samples);
    const double peak_time = detect_peak(out).peak_time;
    win_begin[static_cast<std::size_t>(k)] = std::max(out.start_time, peak_time - 20e-9);
    win_end[static_cast<std::size_t>(k)] = std::min(out.end_time(), peak_time + 20e-9);
  }

  const auto pulses = static_cast<std::size_t>(config.trials);
  constexpr double kNoPulse = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> amplitudes(pulses, kNoPulse);
  parallel_chunks(
      pulses, resolve_thread_count(config.threads), [&](std::size_t begin, std::size_t end) {
        std::vector<detail::PulseProcessor> procs;
        procs.reserve(static_cast<std::size_t>(pixels));
        for (int k = 1; k <= pixels; ++k)
          procs.emplace_back(config, k, clean[static_cast<std::size_t>(k)].samples.size());
        Trace work;
        work.sample_rate = config.sample_rate;
        for (std::size_t i = begin; i < end; ++i) {
          Rng rng = Rng::stream(config.seed, i);
          const double u = rng.uniform01();
          int fired = 0;
          while (fired < pixels && u >= cdf[static_cast<std::size_t>(fired)]) ++fired;
          if (fired == 0) continue;  // fires no pixel, leaves no record
          const auto& base = clean[static_cast<std::size_t>(fired)];
          std::vector<double> noisy = base.samples;
          add_noise_inplace(noisy, config.noise.sigma, rng);
          auto& proc = procs[static_cast<std::size_t>(fired - 1)];
          work.start_time = base.start_time + proc.start_shift();
          work.samples = proc.process(noisy);
          amplitudes[i] = detect_peak(work, win_begin[static_cast<std::size_t>(fired)],
                                      win_end[static_cast<std::size_t>(fired)])
                              .peak_amplitude;
        }
      });

  DiscriminationReport report;
  report.total_pulses = pulses;
  std::vector<double> detected;
  detected.reserve(pulses);
  for (double a : amplitudes) {
    if (std::isnan(a))
      ++report.zero_photon_pulses;
    else
      detected.push_back(a);
  }
  if (detected.empty())
    throw DataError("run_discrimination_experiment: no pulse fired any pixel");

  report.histogram_bins = histogram_bins_for_mixture(detected, pixels);
  report.histogram = build_histogram(detected, report.histogram_bins);
  report.fit = fit_gaussian_mixture(report.histogram, pixels);
  report.spacings = normalized_spacing(report.fit);
  for (const auto& c : report.fit.components)
    report.per_photon_snr.push_back(c.mean / c.stddev);

  report.fired_counts[0] = report.zero_photon_pulses;
  for (int k = 1; k <= pixels; ++k) report.fired_counts[k] = 0;
  for (double a : detected) ++report.fired_counts[classify_amplitude(a, report.fit)];
  report.mu_estimate = estimate_mean_photon_number(report.fired_counts, pixels);
  return report;
}

struct SweepPoint {
  double cutoff_hz = 0.0;
  double s12 = 0.0;
  double jitter = 0.0;  // seconds
};

/// Low-pass cutoff sweep with the matched filter as the reference line.
struct SweepResult {
  std::vector<SweepPoint> points;
  double best_cutoff_hz = 0.0;  // argmax of s12 over the sweep
  double matched_s12 = 0.0;
  double matched_jitter = 0.0;  // seconds

  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i > 0 && !(points[i].cutoff_hz > points[i - 1].cutoff_hz))
        throw ConfigError("sweep: cutoffs must be strictly increasing");
      if (!(points[i].s12 >= 0.0) || !(points[i].jitter >= 0.0))
        throw ConfigError("sweep: s12 and jitter must be >= 0");
    }
  }
};

/// Runs the discrimination and single-photon jitter experiments once per
/// cutoff (same master seed everywhere, so curves share noise realizations)
/// and once with the matched filter for the reference line.
inline SweepResult sweep_lowpass(const ExperimentConfig& config,
                                 const std::vector<double>& cutoffs) {
  config.validate();
  if (cutoffs.size() < 3) throw ConfigError("sweep_lowpass: need at least 3 cutoffs");
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (!(cutoffs[i] > 0.0) || cutoffs[i] > config.sample_rate / 2.0 * (1.0 + 1e-12))
      throw ConfigError("sweep_lowpass: cutoffs must lie in (0, Nyquist]");
    if (i > 0 && !(cutoffs[i] > cutoffs[i - 1]))
      throw ConfigError("sweep_lowpass: cutoffs must be strictly increasing");
  }

  SweepResult result;
  for (const double cutoff : cutoffs) {
    ExperimentConfig cfg = config;
    cfg.filter.type = FilterType::lowpass;
    cfg.filter.lowpass_cutoff_hz = cutoff;
    SweepPoint point;
    point.cutoff_hz = cutoff;
    point.s12 = run_discrimination_experiment(cfg, config.mean_photon_number).spacings.front();
    point.jitter = run_jitter_experiment(cfg, 1, JitterMethod::gaussian_fit);
    result.points.push_back(point);
  }

  ExperimentConfig matched = config;
  matched.filter.type = FilterType::matched;
  result.matched_s12 =
      run_discrimination_experiment(matched, config.mean_photon_number).spacings.front();
  result.matched_jitter = run_jitter_experiment(matched, 1, JitterMethod::gaussian_fit);

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.points.size(); ++i)
    if (result.points[i].s12 > result.points[best].s12) best = i;
  result.best_cutoff_hz = result.points[best].cutoff_hz;
  result.validate();
  return result;
}

/// Largest array size N' whose extrapolated spacing stays at or above 1,
/// using spacing proportional to 1 / (N' + Z0/R_S):
/// N' = floor(S_min (N + Z0/R_S) - Z0/R_S).
inline int estimate_max_array_size(double s_min, int num_pixels, double line_impedance_ohm = 50.0,
                                   double shunt_resistance_ohm = 52.0) {
  if (!(s_min > 0.0)) throw ConfigError("estimate_max_array_size: S_min must be positive");
  if (num_pixels < 1) throw ConfigError("estimate_max_array_size: N must be >= 1");
  if (!(line_impedance_ohm > 0.0) || !(shunt_resistance_ohm > 0.0))
    throw ConfigError("estimate_max_array_size: impedances must be positive");
  const double ratio = line_impedance_ohm / shunt_resistance_ohm;
  const double projected = s_min * (num_pixels + ratio) - ratio;
  if (projected < 1.0)
    throw ConfigError("estimate_max_array_size: no array size of at least 1 pixel "
                      "keeps the spacing above 1");
  // guard against floor() flipping on values that are integers up to rounding
  const double guarded = projected + 1e-9 * std::max(1.0, std::abs(projected));
  return static_cast<int>(std::floor(guarded));
}

}  // namespace pnr
