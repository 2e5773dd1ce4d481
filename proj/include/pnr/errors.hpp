#pragma once

#include <stdexcept>
#include <string>

namespace pnr {

/// Base type for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments, violated invariants, or unusable configuration.
/// The CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, malformed, or insufficient input data. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Input bytes do not match the expected file format.
class BadFormat : public DataError {
 public:
  using DataError::DataError;
};

/// No usable input was found.
class NoInput : public DataError {
 public:
  using DataError::DataError;
};

/// A trace never crosses the requested level, or two spectra never intersect.
class NoCrossing : public DataError {
 public:
  using DataError::DataError;
};

/// The sample argmax sits on a window edge, so no 3-point refinement exists.
class PeakNotBracketed : public DataError {
 public:
  using DataError::DataError;
};

/// Every record fired all pixels; the photon-number likelihood is unbounded.
class Saturated : public DataError {
 public:
  using DataError::DataError;
};

/// Iterative numerics failed. CLI exit code 4.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The requested statistic diverges (for example SNR with zero noise).
class InfiniteResult : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace pnr
