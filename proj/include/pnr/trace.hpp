#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pnr/errors.hpp"

namespace pnr {

/// Uniformly sampled voltage record. Samples are millivolts, times seconds.
struct Trace {
  double sample_rate = 0.0;  // samples per second
  double start_time = 0.0;   // time of samples[0]
  std::vector<double> samples;

  double dt() const { return 1.0 / sample_rate; }
  std::size_t size() const { return samples.size(); }
  double time_at(std::size_t i) const {
    return start_time + static_cast<double>(i) / sample_rate;
  }
  double end_time() const { return samples.empty() ? start_time : time_at(samples.size() - 1); }

  void validate() const {
    if (!(sample_rate > 0.0)) throw ConfigError("trace: sample_rate must be positive");
    if (samples.empty()) throw ConfigError("trace: samples must be non-empty");
    for (double v : samples)
      if (!std::isfinite(v)) throw ConfigError("trace: samples must be finite");
  }
};

}  // namespace pnr
