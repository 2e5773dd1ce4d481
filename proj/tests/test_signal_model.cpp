#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pnr/signal_model.hpp"
#include "test_util.hpp"

using namespace pnr;
using Catch::Approx;
using testutil::series_shape;

TEST_CASE("pulse peak location and value match a dense grid search", "[signal]") {
  const PulseShape shape = series_shape();

  // analytic stationary point of the bi-exponential
  const double t_star = shape.peak_time();
  REQUIRE(t_star == Approx(1.0122e-9).epsilon(1e-3));

  // oracle: dense grid search over the continuous-time waveform
  double best_t = 0.0, best_v = -1.0;
  const double step = 1e-12;  // 1 ps grid
  for (double t = 0.0; t <= 5e-9; t += step) {
    const double v = shape.unit_value(t);
    if (v > best_v) {
      best_v = v;
      best_t = t;
    }
  }
  REQUIRE(std::abs(best_t - t_star) <= step);
  REQUIRE(shape.peak_value() == Approx(best_v).epsilon(1e-8));

  // peak_normalized scaling puts the continuous-time maximum at A_n
  const double a1 = shape.amplitude(1);
  REQUIRE(shape.scale(1) * shape.unit_value(t_star) == Approx(a1).epsilon(1e-12));

  // sampled trace maximum approaches A_n from below
  const Trace pulse = synthesize_pulse(shape, 1, 5e9, 200e-9);
  double max_sample = 0.0;
  for (double v : pulse.samples) max_sample = std::max(max_sample, v);
  REQUIRE(max_sample <= a1 * (1.0 + 1e-12));
  REQUIRE(max_sample == Approx(a1).epsilon(1e-3));
}

TEST_CASE("zero amplitude synthesizes an all-zero trace", "[signal]") {
  PulseShape shape = series_shape();
  shape.amplitudes = {{1, 0.0}};
  const Trace t = synthesize_pulse(shape, 1, 5e9, 100e-9);
  for (double v : t.samples) REQUIRE(v == 0.0);
}

TEST_CASE("photon-number family is the same waveform scaled by A_n", "[signal]") {
  const PulseShape shape = series_shape();
  const Trace base = synthesize_pulse(shape, 1, 5e9, 200e-9);
  for (int n = 2; n <= 6; ++n) {
    const Trace t = synthesize_pulse(shape, n, 5e9, 200e-9);
    const double ratio = shape.amplitude(n) / shape.amplitude(1);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < t.samples.size(); ++i)
      max_dev = std::max(max_dev, std::abs(t.samples[i] / shape.amplitude(n) -
                                           base.samples[i] / shape.amplitude(1)));
    REQUIRE(max_dev < 1e-12);  // normalized shapes identical
    double max_n = 0.0, max_base = 0.0;
    for (double v : t.samples) max_n = std::max(max_n, v);
    for (double v : base.samples) max_base = std::max(max_base, v);
    REQUIRE(max_n == Approx(ratio * max_base).epsilon(1e-12));
    REQUIRE(max_n > max_base);
  }
}

TEST_CASE("synthesize_trace superposition is exact", "[signal]") {
  const PulseShape shape = series_shape();
  const double rate = 5e9, duration = 400e-9;

  SECTION("empty schedule gives a zero trace") {
    const Trace t = synthesize_trace(shape, EventSchedule{}, rate, duration);
    for (double v : t.samples) REQUIRE(v == 0.0);
  }

  SECTION("a single event at t = 0 equals synthesize_pulse bit for bit") {
    const Trace a = synthesize_trace(shape, EventSchedule{{TimedEvent{0.0, 1}}}, rate, duration);
    const Trace b = synthesize_pulse(shape, 1, rate, duration);
    REQUIRE(a.samples == b.samples);
  }

  SECTION("multiple events equal the sample-wise sum of single-event traces") {
    const EventSchedule schedule{
        {TimedEvent{0.0, 1}, TimedEvent{100e-9, 1}, TimedEvent{310e-9, 4}}};
    const Trace combined = synthesize_trace(shape, schedule, rate, duration);
    std::vector<double> expected(combined.samples.size(), 0.0);
    for (const auto& ev : schedule.events) {
      const Trace single = synthesize_trace(shape, EventSchedule{{ev}}, rate, duration);
      for (std::size_t i = 0; i < expected.size(); ++i) expected[i] += single.samples[i];
    }
    REQUIRE(combined.samples == expected);  // exact superposition

    // value at 100 ns + t*: second pulse peak riding on the first pulse tail
    const double t_star = shape.peak_time();
    const auto idx = static_cast<std::size_t>(std::llround((100e-9 + t_star) * rate));
    const Trace first =
        synthesize_trace(shape, EventSchedule{{schedule.events[0]}}, rate, duration);
    const Trace second =
        synthesize_trace(shape, EventSchedule{{schedule.events[1]}}, rate, duration);
    REQUIRE(combined.samples[idx] ==
            Approx(first.samples[idx] + second.samples[idx]).margin(1e-9));
    REQUIRE(second.samples[idx] == Approx(shape.amplitude(1)).epsilon(1e-3));
  }
}

TEST_CASE("synthesis rejects bad inputs", "[signal]") {
  const PulseShape shape = series_shape();
  REQUIRE_THROWS_AS(synthesize_pulse(shape, 9, 5e9, 200e-9), ConfigError);  // unknown n
  REQUIRE_THROWS_AS(synthesize_pulse(shape, 1, 5e9, 1e-9), ConfigError);    // under one tau_fall
  REQUIRE_THROWS_AS(synthesize_pulse(shape, 1, 5e9, 0.1e-9), ConfigError);  // clipped rising edge
  REQUIRE_THROWS_AS(
      synthesize_trace(shape, EventSchedule{{TimedEvent{300e-9, 1}}}, 5e9, 200e-9),
      ConfigError);  // event outside the window

  PulseShape bad = shape;
  bad.tau_rise = bad.tau_fall;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
  PulseShape unordered = shape;
  unordered.amplitudes[3] = unordered.amplitudes[2];
  REQUIRE_THROWS_AS(unordered.validate(), ConfigError);
}

TEST_CASE("add_noise is Gaussian, seeded, and exact for sigma = 0", "[signal]") {
  Trace zero;
  zero.sample_rate = 5e9;
  zero.samples.assign(std::size_t(1) << 20, 0.0);

  SECTION("sigma = 0 returns the input unchanged") {
    const Trace out = add_noise(zero, NoiseModel{0.0, 123});
    REQUIRE(out.samples == zero.samples);
  }

  SECTION("sample standard deviation matches sigma = 0.40 mV") {
    const Trace out = add_noise(zero, NoiseModel{0.40, 20260809});
    double mean = 0.0;
    for (double v : out.samples) mean += v;
    mean /= static_cast<double>(out.samples.size());
    double ss = 0.0;
    for (double v : out.samples) ss += (v - mean) * (v - mean);
    const double std_dev = std::sqrt(ss / static_cast<double>(out.samples.size() - 1));
    REQUIRE(std_dev >= 0.399);
    REQUIRE(std_dev <= 0.401);
  }

  SECTION("identical seeds give bit-identical noise, different seeds differ") {
    const Trace a = add_noise(zero, NoiseModel{0.40, 7});
    const Trace b = add_noise(zero, NoiseModel{0.40, 7});
    const Trace c = add_noise(zero, NoiseModel{0.40, 8});
    REQUIRE(a.samples == b.samples);
    REQUIRE(a.samples != c.samples);
  }

  SECTION("autocorrelation at nonzero lags is consistent with white noise") {
    const Trace out = add_noise(zero, NoiseModel{0.40, 99});
    const std::size_t n = out.samples.size();
    double energy = 0.0;
    for (double v : out.samples) energy += v * v;
    const double bound = 5.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t lag : {1u, 2u, 3u, 5u, 10u, 100u, 1000u, 10000u}) {
      double acc = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i) acc += out.samples[i] * out.samples[i + lag];
      REQUIRE(std::abs(acc / energy) < bound);
    }
  }
}

TEST_CASE("electrical amplitude follows the series readout model", "[signal]") {
  ReadoutConfig cfg;
  cfg.num_pixels = 6;
  cfg.bias_current = 10e-6;
  cfg.line_impedance = 50.0;
  cfg.shunt_resistance = 52.0;

  // direct formula evaluation: 10 uA * 50 / (6 + 50/52), in millivolts
  REQUIRE(electrical_amplitude(cfg, 1) == Approx(0.0718232).epsilon(1e-5));

  // linear in n
  REQUIRE(electrical_amplitude(cfg, 3) ==
          Approx(3.0 * electrical_amplitude(cfg, 1)).epsilon(1e-12));

  // doubling N roughly halves the signal
  ReadoutConfig big = cfg;
  big.num_pixels = 100;
  ReadoutConfig half = cfg;
  half.num_pixels = 50;
  const double ratio = electrical_amplitude(big, 1) / electrical_amplitude(half, 1);
  const double expected = (50.0 + 50.0 / 52.0) / (100.0 + 50.0 / 52.0);
  REQUIRE(ratio == Approx(expected).epsilon(0.02));

  // strictly increasing in n, strictly decreasing in N
  for (int n = 2; n <= 6; ++n)
    REQUIRE(electrical_amplitude(cfg, n) > electrical_amplitude(cfg, n - 1));
  ReadoutConfig one = cfg;
  one.num_pixels = 1;
  double prev = electrical_amplitude(one, 1);
  for (int pixels = 2; pixels <= 64; pixels *= 2) {
    ReadoutConfig c = cfg;
    c.num_pixels = pixels;
    const double v = electrical_amplitude(c, 1);
    REQUIRE(v < prev);
    prev = v;
  }

  REQUIRE_THROWS_AS(electrical_amplitude(cfg, 0), ConfigError);
  REQUIRE_THROWS_AS(electrical_amplitude(cfg, 7), ConfigError);
}
