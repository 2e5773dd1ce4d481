#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pnr/errors.hpp"
#include "pnr/trace.hpp"

namespace pnr {

/// FWHM of a Gaussian divided by its sigma.
inline constexpr double kFwhmPerSigma = 2.355;

/// One extracted detection: refined peak amplitude and sub-sample peak time.
struct DetectionEvent {
  double peak_amplitude = 0.0;        // mV
  double peak_time = 0.0;             // seconds
  std::optional<int> assigned_n;      // photon number after classification
};

/// Discrete argmax in [window_begin, window_end] refined by a parabola
/// through the three samples around it. The matched-filter output is locally
/// quadratic at its peak, so this refinement is unbiased there.
inline DetectionEvent detect_peak(const Trace& trace, double window_begin, double window_end) {
  trace.validate();
  const double dt = trace.dt();
  if (window_begin < trace.start_time - 0.5 * dt || window_end > trace.end_time() + 0.5 * dt)
    throw ConfigError("detect_peak: window lies outside the trace");
  if (!(window_begin < window_end)) throw ConfigError("detect_peak: empty window");

  const double rel_begin = (window_begin - trace.start_time) * trace.sample_rate;
  const double rel_end = (window_end - trace.start_time) * trace.sample_rate;
  const auto n = trace.samples.size();
  std::size_t i0 = rel_begin <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(rel_begin - 1e-9));
  std::size_t i1 = rel_end < 0.0 ? 0 : static_cast<std::size_t>(std::floor(rel_end + 1e-9));
  i0 = std::min(i0, n - 1);
  i1 = std::min(i1, n - 1);
  if (i1 - i0 + 1 < 3) throw ConfigError("detect_peak: window must span at least 3 samples");

  std::size_t best = i0;
  for (std::size_t i = i0 + 1; i <= i1; ++i)
    if (trace.samples[i] > trace.samples[best]) best = i;
  if (best == i0 || best == i1)
    throw PeakNotBracketed("detect_peak: argmax on the window boundary");

  const double y1 = trace.samples[best - 1];
  const double y2 = trace.samples[best];
  const double y3 = trace.samples[best + 1];
  const double curv = y1 - 2.0 * y2 + y3;  // 2a of the interpolating parabola
  DetectionEvent ev;
  if (curv == 0.0) {
    ev.peak_amplitude = y2;
    ev.peak_time = trace.time_at(best);
  } else {
    const double shift = (y1 - y3) / (2.0 * curv);  // vertex offset in samples
    const double b = (y3 - y1) / 2.0;
    ev.peak_amplitude = y2 + 0.5 * b * shift;
    ev.peak_time = trace.time_at(best) + shift * dt;
  }
  return ev;
}

inline DetectionEvent detect_peak(const Trace& trace) {
  return detect_peak(trace, trace.start_time, trace.end_time());
}

enum class Edge { rising, falling };

/// First threshold crossing in the window, linearly interpolated between the
/// bracketing samples.
inline double threshold_crossing_time(const Trace& trace, double threshold_mv,
                                      Edge direction, double window_begin, double window_end) {
  trace.validate();
  const double dt = trace.dt();
  if (window_begin < trace.start_time - 0.5 * dt || window_end > trace.end_time() + 0.5 * dt)
    throw ConfigError("threshold_crossing_time: window lies outside the trace");
  const double rel_begin = (window_begin - trace.start_time) * trace.sample_rate;
  const double rel_end = (window_end - trace.start_time) * trace.sample_rate;
  const auto n = trace.samples.size();
  std::size_t i0 = rel_begin <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(rel_begin - 1e-9));
  std::size_t i1 = rel_end < 0.0 ? 0 : static_cast<std::size_t>(std::floor(rel_end + 1e-9));
  i0 = std::min(i0, n - 1);
  i1 = std::min(i1, n - 1);

  for (std::size_t i = i0; i < i1; ++i) {
    const double a = trace.samples[i];
    const double b = trace.samples[i + 1];
    const bool crosses = direction == Edge::rising ? (a < threshold_mv && b >= threshold_mv)
                                                   : (a > threshold_mv && b <= threshold_mv);
    if (crosses) return trace.time_at(i) + dt * (threshold_mv - a) / (b - a);
  }
  throw NoCrossing("threshold_crossing_time: trace does not cross the threshold in the window");
}

inline double threshold_crossing_time(const Trace& trace, double threshold_mv,
                                      Edge direction = Edge::rising) {
  return threshold_crossing_time(trace, threshold_mv, direction, trace.start_time,
                                 trace.end_time());
}

/// Uniform-bin amplitude histogram.
struct AmplitudeHistogram {
  std::vector<double> bin_edges;       // size bins + 1
  std::vector<std::uint64_t> counts;   // size bins

  std::size_t bins() const { return counts.size(); }
  double bin_width() const { return bin_edges[1] - bin_edges[0]; }
  double center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }

  void validate() const {
    if (bin_edges.size() != counts.size() + 1)
      throw ConfigError("histogram: edge count must be bin count + 1");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
      if (!(bin_edges[i] > bin_edges[i - 1]))
        throw ConfigError("histogram: edges must be strictly increasing");
  }
};

/// Uniform bins spanning [min, max]; the top edge is inclusive. A single
/// repeated value gets a unit-width range centred on it.
inline AmplitudeHistogram build_histogram(const std::vector<double>& values, int bin_count) {
  if (values.empty()) throw NoInput("build_histogram: no values");
  if (bin_count < 2) throw ConfigError("build_histogram: bin_count must be >= 2");

  double lo = values.front(), hi = values.front();
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }

  AmplitudeHistogram h;
  h.bin_edges.resize(bin_count + 1);
  for (int i = 0; i <= bin_count; ++i)
    h.bin_edges[i] = lo + (hi - lo) * static_cast<double>(i) / bin_count;
  h.counts.assign(bin_count, 0);
  const double scale = bin_count / (hi - lo);
  for (double v : values) {
    auto idx = static_cast<long long>((v - lo) * scale);
    idx = std::clamp<long long>(idx, 0, bin_count - 1);
    ++h.counts[static_cast<std::size_t>(idx)];
  }
  return h;
}

/// Freedman-Diaconis bin count with a floor; the floor keeps narrow peaks
/// resolvable when the data range is small.
inline int freedman_diaconis_bin_count(std::vector<double> values, int min_bins = 50) {
  if (values.empty()) throw NoInput("freedman_diaconis_bin_count: no values");
  const std::size_t n = values.size();
  auto q = [&](double p) {
    const auto k = static_cast<std::size_t>(p * static_cast<double>(n - 1));
    std::nth_element(values.begin(), values.begin() + static_cast<long>(k), values.end());
    return values[k];
  };
  const double q1 = q(0.25);
  const double q3 = q(0.75);
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double range = *hi_it - *lo_it;
  const double iqr = q3 - q1;
  if (!(iqr > 0.0) || !(range > 0.0)) return min_bins;
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
  const auto bins = static_cast<int>(std::ceil(range / width));
  return std::clamp(bins, min_bins, 100000);
}

/// Bin count for a k-component mixture fit: Freedman-Diaconis with the usual
/// floor, doubled until (a) the nonzero bins can support 3k parameters with
/// headroom and (b) the tallest peak spans at least 4 bins at half height.
/// Narrow well-separated peaks otherwise collapse into single bins, which
/// starves the least-squares fit of width information.
inline int histogram_bins_for_mixture(const std::vector<double>& values, int k,
                                      int min_bins = 50) {
  int bins = freedman_diaconis_bin_count(values, min_bins);
  for (;;) {
    const AmplitudeHistogram hist = build_histogram(values, bins);
    std::size_t nonzero = 0;
    for (auto c : hist.counts)
      if (c > 0) ++nonzero;
    const std::size_t peak = static_cast<std::size_t>(
        std::max_element(hist.counts.begin(), hist.counts.end()) - hist.counts.begin());
    const double half = static_cast<double>(hist.counts[peak]) / 2.0;
    std::size_t left = peak;
    while (left > 0 && static_cast<double>(hist.counts[left - 1]) > half) --left;
    std::size_t right = peak;
    while (right + 1 < hist.bins() && static_cast<double>(hist.counts[right + 1]) > half) ++right;
    const std::size_t peak_width = right - left + 1;
    if ((nonzero >= static_cast<std::size_t>(6 * k) && peak_width >= 4) || bins >= 16384 ||
        static_cast<std::size_t>(bins) >= 4 * values.size())
      return bins;
    bins *= 2;
  }
}

struct GaussianComponent {
  double weight = 0.0;  // peak height of the component, counts
  double mean = 0.0;    // mV
  double stddev = 0.0;  // mV
};

/// Multi-Gaussian histogram fit, components sorted by mean.
struct MixtureFit {
  std::vector<GaussianComponent> components;
  double residual_norm = 0.0;  // |model - counts|_2 / |counts|_2
  int iterations = 0;

  double evaluate(double x) const {
    double y = 0.0;
    for (const auto& c : components) {
      const double z = (x - c.mean) / c.stddev;
      y += c.weight * std::exp(-0.5 * z * z);
    }
    return y;
  }
};

/// Thrown when the least-squares iteration stalls; carries the best fit seen.
class FitNonConvergence : public NumericalError {
 public:
  FitNonConvergence(const std::string& msg, MixtureFit best_fit)
      : NumericalError(msg), best(std::move(best_fit)) {}
  MixtureFit best;
};

namespace detail {

// Solves A x = b for symmetric positive definite A (row-major, in place).
// Returns false when the factorization breaks down.
inline bool cholesky_solve(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[i * n + j];
      for (int k = 0; k < j; ++k) sum -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (!(sum > 0.0)) return false;
        a[i * n + j] = std::sqrt(sum);
      } else {
        a[i * n + j] = sum / a[j * n + j];
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    double sum = b[i];
    for (int k = 0; k < i; ++k) sum -= a[i * n + k] * b[k];
    b[i] = sum / a[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double sum = b[i];
    for (int k = i + 1; k < n; ++k) sum -= a[k * n + i] * b[k];
    b[i] = sum / a[i * n + i];
  }
  return true;
}

inline std::vector<GaussianComponent> initial_mixture_guess(const AmplitudeHistogram& hist,
                                                            int k) {
  const std::size_t bins = hist.bins();
  const double lo = hist.bin_edges.front();
  const double hi = hist.bin_edges.back();
  const double range = hi - lo;

  if (k == 1) {
    // moment-based start for the single-component case
    double total = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      total += static_cast<double>(hist.counts[i]);
      mean += static_cast<double>(hist.counts[i]) * hist.center(i);
    }
    mean /= total;
    double var = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      const double d = hist.center(i) - mean;
      var += static_cast<double>(hist.counts[i]) * d * d;
    }
    var /= total;
    const double sigma = std::max(std::sqrt(var), hist.bin_width());
    const double peak = static_cast<double>(
        *std::max_element(hist.counts.begin(), hist.counts.end()));
    return {GaussianComponent{peak, mean, sigma}};
  }

  // local maxima of a 5-bin moving average
  std::vector<double> smooth(bins, 0.0);
  for (std::size_t i = 0; i < bins; ++i) {
    const std::size_t a = i >= 2 ? i - 2 : 0;
    const std::size_t b = std::min(bins - 1, i + 2);
    double sum = 0.0;
    for (std::size_t j = a; j <= b; ++j) sum += static_cast<double>(hist.counts[j]);
    smooth[i] = sum / static_cast<double>(b - a + 1);
  }
  std::vector<std::pair<double, std::size_t>> maxima;  // (smoothed value, bin)
  for (std::size_t i = 1; i + 1 < bins; ++i)
    if (smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1] && smooth[i] > 0.0)
      maxima.emplace_back(smooth[i], i);
  std::sort(maxima.begin(), maxima.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });

  // greedy pick by height with an exclusion zone, so one broad cluster cannot
  // claim several seeds while a sparse cluster goes unseeded
  const std::size_t min_sep =
      std::max<std::size_t>(3, bins / (3 * static_cast<std::size_t>(k)));
  std::vector<std::pair<double, std::size_t>> picked;
  for (const auto& cand : maxima) {
    bool clear = true;
    for (const auto& p : picked) {
      const std::size_t d = cand.second > p.second ? cand.second - p.second
                                                   : p.second - cand.second;
      if (d < min_sep) {
        clear = false;
        break;
      }
    }
    if (clear) picked.push_back(cand);
    if (picked.size() == static_cast<std::size_t>(k)) break;
  }

  std::vector<GaussianComponent> init;
  if (picked.size() == static_cast<std::size_t>(k)) {
    std::sort(picked.begin(), picked.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    for (const auto& [value, bin] : picked) {
      // width seed from the half-height extent of the smoothed peak
      const double half = value / 2.0;
      std::size_t left = bin;
      while (left > 0 && smooth[left - 1] > half) --left;
      std::size_t right = bin;
      while (right + 1 < bins && smooth[right + 1] > half) ++right;
      const double fwhm_bins = std::max<double>(1.0, static_cast<double>(right - left));
      const double sigma0 = std::clamp(fwhm_bins * hist.bin_width() / kFwhmPerSigma,
                                       hist.bin_width(), range / 2.0);
      init.push_back(GaussianComponent{value, hist.center(bin), sigma0});
    }
  } else {
    // evenly spaced fallback
    for (int j = 0; j < k; ++j) {
      const double mean = lo + range * (j + 0.5) / k;
      const auto bin = std::min<std::size_t>(
          bins - 1, static_cast<std::size_t>((mean - lo) / hist.bin_width()));
      const double height =
          std::max(1.0, static_cast<double>(hist.counts[bin]));
      init.push_back(GaussianComponent{height, mean,
                                       std::max(range / (6.0 * k), 2.0 * hist.bin_width())});
    }
  }
  return init;
}

}  // namespace detail

namespace detail {

struct LmOutcome {
  std::vector<GaussianComponent> components;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Gauss-Newton on the histogram residuals. Steps are accepted only
// when they lower the cost, so the result can never be worse than the seed.
inline LmOutcome lm_minimize(std::vector<GaussianComponent> comps, const std::vector<double>& x,
                             const std::vector<double>& y, double sigma_min, double range,
                             double lo_edge, double hi_edge, int max_iterations) {
  const int k = static_cast<int>(comps.size());
  const int np = 3 * k;
  const std::size_t bins = x.size();
  for (auto& c : comps) c.stddev = std::clamp(std::abs(c.stddev), sigma_min, range);

  auto cost_of = [&](const std::vector<GaussianComponent>& cs) {
    double cost = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      double model = 0.0;
      for (const auto& c : cs) {
        const double z = (x[i] - c.mean) / c.stddev;
        model += c.weight * std::exp(-0.5 * z * z);
      }
      const double r = model - y[i];
      cost += r * r;
    }
    return cost;
  };

  LmOutcome out;
  double cost = cost_of(comps);
  double lambda = 1e-3;
  std::vector<double> jtj(static_cast<std::size_t>(np) * np);
  std::vector<double> jtr(np);
  std::vector<double> row(np);

  int iterations = 0;
  bool converged = false;
  for (; iterations < max_iterations && !converged; ++iterations) {
    if (cost == 0.0) {
      converged = true;
      break;
    }
    std::fill(jtj.begin(), jtj.end(), 0.0);
    std::fill(jtr.begin(), jtr.end(), 0.0);
    for (std::size_t i = 0; i < bins; ++i) {
      double model = 0.0;
      for (int c = 0; c < k; ++c) {
        const auto& g = comps[static_cast<std::size_t>(c)];
        const double z = (x[i] - g.mean) / g.stddev;
        const double e = std::exp(-0.5 * z * z);
        model += g.weight * e;
        row[3 * c + 0] = e;
        row[3 * c + 1] = g.weight * e * z / g.stddev;
        row[3 * c + 2] = g.weight * e * z * z / g.stddev;
      }
      const double r = model - y[i];
      for (int a = 0; a < np; ++a) {
        jtr[a] += row[static_cast<std::size_t>(a)] * r;
        for (int b = a; b < np; ++b)
          jtj[static_cast<std::size_t>(a) * np + b] +=
              row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(b)];
      }
    }
    for (int a = 0; a < np; ++a)
      for (int b = 0; b < a; ++b)
        jtj[static_cast<std::size_t>(a) * np + b] = jtj[static_cast<std::size_t>(b) * np + a];

    bool accepted = false;
    for (int attempt = 0; attempt < 25 && !accepted; ++attempt) {
      std::vector<double> lhs = jtj;
      std::vector<double> rhs(np);
      for (int a = 0; a < np; ++a) {
        lhs[static_cast<std::size_t>(a) * np + a] *= 1.0 + lambda;
        lhs[static_cast<std::size_t>(a) * np + a] += 1e-12;
        rhs[a] = -jtr[a];
      }
      if (cholesky_solve(lhs, rhs, np)) {
        std::vector<GaussianComponent> trial = comps;
        for (int c = 0; c < k; ++c) {
          auto& g = trial[static_cast<std::size_t>(c)];
          g.weight = std::max(0.0, g.weight + rhs[3 * c + 0]);
          g.mean = std::clamp(g.mean + rhs[3 * c + 1], lo_edge, hi_edge);
          g.stddev = std::clamp(std::abs(g.stddev + rhs[3 * c + 2]), sigma_min, range);
        }
        const double trial_cost = cost_of(trial);
        if (trial_cost <= cost) {
          const double rel_change = (cost - trial_cost) / std::max(cost, 1e-300);
          comps = std::move(trial);
          cost = trial_cost;
          lambda = std::max(lambda / 3.0, 1e-12);
          accepted = true;
          if (rel_change < 1e-8) converged = true;
          break;
        }
      }
      lambda = std::min(lambda * 4.0, 1e12);
    }
    if (!accepted) converged = true;  // stationary point, no step improves
  }

  out.components = std::move(comps);
  out.cost = cost;
  out.iterations = iterations;
  out.converged = converged;
  return out;
}

}  // namespace detail

/// Nonlinear least-squares fit of sum_k a_k exp(-(x - p_k)^2 / (2 s_k^2)) to
/// the bin counts at the bin centers (Levenberg-Marquardt). Converges when
/// the relative residual change drops below 1e-8; gives up after 500
/// iterations and throws FitNonConvergence carrying the best fit found.
/// Components whose weight collapses to zero are re-seeded once at the
/// largest under-fitted bin, which recovers sparse clusters missed by the
/// initial guess.
inline MixtureFit fit_gaussian_mixture(const AmplitudeHistogram& hist, int k,
                                       const std::optional<std::vector<GaussianComponent>>& init =
                                           std::nullopt) {
  hist.validate();
  if (k < 1) throw ConfigError("fit_gaussian_mixture: component count must be >= 1");
  std::size_t nonzero = 0;
  for (auto c : hist.counts)
    if (c > 0) ++nonzero;
  if (nonzero < static_cast<std::size_t>(3 * k))
    throw ConfigError("fit_gaussian_mixture: k too large for data (need >= 3k nonzero bins)");

  const std::size_t bins = hist.bins();
  std::vector<double> x(bins), y(bins);
  double y_norm2 = 0.0;
  double y_max = 0.0;
  for (std::size_t i = 0; i < bins; ++i) {
    x[i] = hist.center(i);
    y[i] = static_cast<double>(hist.counts[i]);
    y_norm2 += y[i] * y[i];
    y_max = std::max(y_max, y[i]);
  }

  std::vector<GaussianComponent> seeds =
      init.has_value() ? *init : detail::initial_mixture_guess(hist, k);
  if (seeds.size() != static_cast<std::size_t>(k))
    throw ConfigError("fit_gaussian_mixture: init must supply one seed per component");

  const double sigma_min = hist.bin_width() / 2.0;
  const double range = hist.bin_edges.back() - hist.bin_edges.front();
  const double lo_edge = hist.bin_edges.front() - 0.02 * range;
  const double hi_edge = hist.bin_edges.back() + 0.02 * range;

  detail::LmOutcome best = detail::lm_minimize(std::move(seeds), x, y, sigma_min, range, lo_edge,
                                               hi_edge, 500);
  int total_iterations = best.iterations;

  // rescue pass: a component that died (vanishing weight), flattened into a
  // floor (width comparable to the whole range), or collapsed onto a twin is
  // re-seeded at the largest under-fitted bin and the fit is re-run; the
  // retry is kept only when it lowers the cost
  auto find_lost = [&](const std::vector<GaussianComponent>& cs) {
    for (std::size_t c = 0; c < cs.size(); ++c)
      if (cs[c].weight < 1e-4 * y_max || cs[c].stddev >= 0.45 * range) return c;
    for (std::size_t a = 0; a < cs.size(); ++a)
      for (std::size_t b = a + 1; b < cs.size(); ++b)
        if (std::abs(cs[a].mean - cs[b].mean) < 0.5 * hist.bin_width())
          return cs[a].weight <= cs[b].weight ? a : b;
    return cs.size();
  };
  for (int rescue = 0; rescue < k; ++rescue) {
    const std::size_t lost = find_lost(best.components);
    if (lost == best.components.size()) break;

    std::vector<GaussianComponent> retry = best.components;
    std::size_t worst_bin = 0;
    double worst_residual = -1e300;
    for (std::size_t i = 0; i < bins; ++i) {
      double model = 0.0;
      for (const auto& c : retry) {
        const double z = (x[i] - c.mean) / c.stddev;
        model += c.weight * std::exp(-0.5 * z * z);
      }
      if (y[i] - model > worst_residual) {
        worst_residual = y[i] - model;
        worst_bin = i;
      }
    }
    if (worst_residual <= 0.0) break;
    retry[lost].mean = x[worst_bin];
    retry[lost].stddev = 2.0 * hist.bin_width();
    retry[lost].weight = worst_residual;
    detail::LmOutcome attempt =
        detail::lm_minimize(std::move(retry), x, y, sigma_min, range, lo_edge, hi_edge, 500);
    total_iterations += attempt.iterations;
    if (attempt.cost < best.cost)
      best = std::move(attempt);
    else
      break;
  }

  MixtureFit fit;
  fit.components = best.components;
  std::sort(fit.components.begin(), fit.components.end(),
            [](const GaussianComponent& a, const GaussianComponent& b) { return a.mean < b.mean; });
  fit.residual_norm = std::sqrt(best.cost) / std::max(std::sqrt(y_norm2), 1e-300);
  fit.iterations = total_iterations;
  if (!best.converged)
    throw FitNonConvergence("fit_gaussian_mixture: no convergence after 500 iterations "
                            "(residual_norm = " + std::to_string(fit.residual_norm) + ")",
                            fit);
  return fit;
}

/// Normalized spacing between adjacent fitted peaks:
/// S_{n,n+1} = (p_{n+1} - p_n) / (2.355 (s_{n+1} + s_n) / 2).
inline std::vector<double> normalized_spacing(const MixtureFit& fit) {
  if (fit.components.size() < 2)
    throw ConfigError("normalized_spacing: need at least 2 components");
  std::vector<double> out;
  out.reserve(fit.components.size() - 1);
  for (std::size_t i = 0; i + 1 < fit.components.size(); ++i) {
    const auto& a = fit.components[i];
    const auto& b = fit.components[i + 1];
    out.push_back((b.mean - a.mean) / (kFwhmPerSigma * 0.5 * (a.stddev + b.stddev)));
  }
  return out;
}

enum class JitterMethod { gaussian_fit, direct_fwhm };

inline const char* to_string(JitterMethod m) {
  return m == JitterMethod::gaussian_fit ? "gaussian_fit" : "direct_fwhm";
}

inline JitterMethod jitter_method_from_string(const std::string& s) {
  if (s == "gaussian_fit") return JitterMethod::gaussian_fit;
  if (s == "direct_fwhm") return JitterMethod::direct_fwhm;
  throw ConfigError("unknown jitter method '" + s + "'");
}

/// FWHM timing jitter of a set of delays. gaussian_fit returns 2.355 times
/// the sigma of a Gaussian fitted to the delay histogram; direct_fwhm
/// interpolates the width at half the histogram maximum. Identical delays
/// give zero for both methods.
inline double timing_jitter(const std::vector<double>& delays, JitterMethod method) {
  const std::size_t min_count = method == JitterMethod::gaussian_fit ? 100 : 1000;
  if (delays.size() < min_count)
    throw ConfigError("timing_jitter: need at least " + std::to_string(min_count) + " samples");
  const auto [lo, hi] = std::minmax_element(delays.begin(), delays.end());
  if (*lo == *hi) return 0.0;

  const auto hist = build_histogram(delays, freedman_diaconis_bin_count(delays));

  if (method == JitterMethod::gaussian_fit) {
    const MixtureFit fit = fit_gaussian_mixture(hist, 1);
    return kFwhmPerSigma * fit.components.front().stddev;
  }

  const std::size_t peak_bin = static_cast<std::size_t>(
      std::max_element(hist.counts.begin(), hist.counts.end()) - hist.counts.begin());
  const double half = static_cast<double>(hist.counts[peak_bin]) / 2.0;

  // walk outwards from the peak and interpolate the half-max crossings
  double left = hist.center(0);
  for (std::size_t i = peak_bin; i-- > 0;) {
    if (static_cast<double>(hist.counts[i]) < half) {
      const double y0 = static_cast<double>(hist.counts[i]);
      const double y1 = static_cast<double>(hist.counts[i + 1]);
      left = hist.center(i) + (half - y0) / (y1 - y0) * hist.bin_width();
      break;
    }
  }
  double right = hist.center(hist.bins() - 1);
  for (std::size_t i = peak_bin + 1; i < hist.bins(); ++i) {
    if (static_cast<double>(hist.counts[i]) < half) {
      const double y0 = static_cast<double>(hist.counts[i - 1]);
      const double y1 = static_cast<double>(hist.counts[i]);
      right = hist.center(i - 1) + (y0 - half) / (y0 - y1) * hist.bin_width();
      break;
    }
  }
  return right - left;
}

/// Fired-pixel statistics of Poisson light spread uniformly over N pixels.
struct PhotonStatistics {
  int num_pixels = 0;
  double mean_photon_number = 0.0;
  std::vector<double> fired_probabilities;  // P(k fired), k = 0..N

  void validate() const {
    if (num_pixels < 1) throw ConfigError("photon statistics: num_pixels must be >= 1");
    if (fired_probabilities.size() != static_cast<std::size_t>(num_pixels) + 1)
      throw ConfigError("photon statistics: probability count must be N + 1");
    double sum = 0.0;
    for (double p : fired_probabilities) {
      if (!(p >= 0.0) || !(p <= 1.0))
        throw ConfigError("photon statistics: probabilities must lie in [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("photon statistics: probabilities must sum to 1");
  }
};

/// Multiple photons can hit the same pixel, which fires only once. With
/// uniform illumination each pixel fires with q = 1 - exp(-mu/N), so the
/// fired count is Binomial(N, q).
inline PhotonStatistics fired_pixel_distribution(double mu, int num_pixels) {
  if (!(mu >= 0.0)) throw ConfigError("fired_pixel_distribution: mu must be >= 0");
  if (num_pixels < 1) throw ConfigError("fired_pixel_distribution: N must be >= 1");
  const double q = -std::expm1(-mu / num_pixels);
  PhotonStatistics out;
  out.num_pixels = num_pixels;
  out.mean_photon_number = mu;
  out.fired_probabilities.resize(static_cast<std::size_t>(num_pixels) + 1);
  double binom = 1.0;  // C(N, k), updated iteratively
  for (int k = 0; k <= num_pixels; ++k) {
    out.fired_probabilities[static_cast<std::size_t>(k)] =
        binom * std::pow(q, k) * std::pow(1.0 - q, num_pixels - k);
    binom *= static_cast<double>(num_pixels - k) / static_cast<double>(k + 1);
  }
  return out;
}

/// Maximum-likelihood mean photon number from observed fired-pixel counts,
/// found by one-dimensional search to a relative tolerance of 1e-6.
inline double estimate_mean_photon_number(const std::map<int, std::uint64_t>& fired_counts,
                                          int num_pixels) {
  if (num_pixels < 1) throw ConfigError("estimate_mean_photon_number: N must be >= 1");
  std::vector<double> counts(static_cast<std::size_t>(num_pixels) + 1, 0.0);
  double total = 0.0;
  for (const auto& [k, c] : fired_counts) {
    if (k < 0 || k > num_pixels)
      throw ConfigError("estimate_mean_photon_number: fired count index out of range");
    counts[static_cast<std::size_t>(k)] += static_cast<double>(c);
    total += static_cast<double>(c);
  }
  if (total == 0.0) throw DataError("estimate_mean_photon_number: all counts are zero");
  if (counts[static_cast<std::size_t>(num_pixels)] == total)
    throw Saturated("estimate_mean_photon_number: every record fired all pixels; "
                    "the likelihood grows without bound");
  double fired_sum = 0.0;
  for (int k = 1; k <= num_pixels; ++k)
    fired_sum += static_cast<double>(k) * counts[static_cast<std::size_t>(k)];
  if (fired_sum == 0.0) return 0.0;

  // log-likelihood up to a mu-independent constant; ln(1 - q) = -mu/N exactly
  auto loglik = [&](double mu) {
    const double q = -std::expm1(-mu / num_pixels);
    double ll = 0.0;
    for (int k = 0; k <= num_pixels; ++k) {
      const double c = counts[static_cast<std::size_t>(k)];
      if (c == 0.0) continue;
      ll += c * (k * std::log(q) - (num_pixels - k) * mu / num_pixels);
    }
    return ll;
  };

  // bracket the maximum by doubling, then golden-section
  double hi = 1.0;
  while (loglik(2.0 * hi) > loglik(hi)) {
    hi *= 2.0;
    if (hi > 1e9) throw Saturated("estimate_mean_photon_number: likelihood keeps increasing");
  }
  double a = 0.0, b = 2.0 * hi;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = loglik(c), fd = loglik(d);
  while (b - a > 1e-6 * std::max(1.0, b)) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = loglik(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = loglik(d);
    }
  }
  return 0.5 * (a + b);
}

enum class ClassifyMode { likelihood, midpoint };

/// 1-based index of the component that best explains the amplitude. The
/// likelihood mode scores a_k exp(-(x - p_k)^2 / (2 s_k^2)); ties go to the
/// lower component.
inline int classify_amplitude(double amplitude_mv, const MixtureFit& fit,
                              ClassifyMode mode = ClassifyMode::likelihood) {
  if (fit.components.empty()) throw ConfigError("classify: fit has no components");
  if (mode == ClassifyMode::midpoint) {
    int idx = 1;
    for (std::size_t i = 0; i + 1 < fit.components.size(); ++i) {
      const double boundary = 0.5 * (fit.components[i].mean + fit.components[i + 1].mean);
      if (amplitude_mv > boundary) idx = static_cast<int>(i) + 2;
    }
    return idx;
  }
  int best = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fit.components.size(); ++i) {
    const auto& c = fit.components[i];
    const double z = (amplitude_mv - c.mean) / c.stddev;
    const double score =
        (c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity()) -
        0.5 * z * z;
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(i) + 1;
    }
  }
  return best;
}

inline std::vector<DetectionEvent> classify_events(std::vector<DetectionEvent> events,
                                                   const MixtureFit& fit,
                                                   ClassifyMode mode = ClassifyMode::likelihood) {
  for (auto& ev : events) ev.assigned_n = classify_amplitude(ev.peak_amplitude, fit, mode);
  return events;
}

}  // namespace pnr
