#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pnr/discrimination.hpp"
#include "pnr/errors.hpp"
#include "pnr/filtering.hpp"
#include "pnr/trace.hpp"

namespace pnr {

// Trace files: magic "PNRT", u32 version = 1, f64 sample_rate, f64 start_time,
// u64 count, then count f64 samples. All fields little-endian. A two-column
// CSV (time_s, mV) with a header line is accepted as an alternative input.

inline constexpr std::array<char, 4> kTraceMagic = {'P', 'N', 'R', 'T'};
inline constexpr std::uint32_t kTraceVersion = 1;

namespace detail {

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T read_le(std::istream& in, const std::string& file, std::uint64_t& offset) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
    throw BadFormat(file + ": truncated at byte offset " + std::to_string(offset));
  offset += sizeof(T);
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

// shortest round-trip formatting for doubles in text outputs
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline void write_trace(const std::filesystem::path& path, const Trace& trace) {
  trace.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(kTraceMagic.data(), kTraceMagic.size());
  detail::write_le(out, kTraceVersion);
  detail::write_le(out, trace.sample_rate);
  detail::write_le(out, trace.start_time);
  detail::write_le(out, static_cast<std::uint64_t>(trace.samples.size()));
  for (double v : trace.samples) detail::write_le(out, v);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline Trace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw BadFormat(path.string() + ": empty CSV");
  // header line, e.g. "time_s,amplitude_mv"
  std::vector<double> times, values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw BadFormat(path.string() + ": line " + std::to_string(line_no) +
                      " is not two comma-separated columns");
    try {
      times.push_back(std::stod(line.substr(0, comma)));
      values.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw BadFormat(path.string() + ": line " + std::to_string(line_no) +
                      " is not numeric");
    }
  }
  if (times.size() < 2) throw BadFormat(path.string() + ": need at least 2 rows");
  const double step = times[1] - times[0];
  if (!(step > 0.0)) throw BadFormat(path.string() + ": time column must increase");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double d = times[i] - times[i - 1];
    if (std::abs(d - step) > 1e-6 * step)
      throw BadFormat(path.string() + ": time column is not uniformly sampled");
  }
  Trace trace;
  trace.sample_rate = 1.0 / step;
  trace.start_time = times.front();
  trace.samples = std::move(values);
  trace.validate();
  return trace;
}

inline void write_trace_csv(const std::filesystem::path& path, const Trace& trace) {
  trace.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "time_s,amplitude_mv\n";
  for (std::size_t i = 0; i < trace.samples.size(); ++i)
    out << detail::format_double(trace.time_at(i)) << ','
        << detail::format_double(trace.samples[i]) << '\n';
}

/// Reads a trace file; binary records are recognized by their magic, anything
/// else is parsed as two-column CSV.
inline Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kTraceMagic) {
    if (path.extension() == ".csv") return read_trace_csv(path);
    throw BadFormat(path.string() + ": bad magic at byte offset 0");
  }
  std::uint64_t offset = 4;
  const auto version = detail::read_le<std::uint32_t>(in, path.string(), offset);
  if (version != kTraceVersion)
    throw BadFormat(path.string() + ": unsupported version " + std::to_string(version));
  Trace trace;
  trace.sample_rate = detail::read_le<double>(in, path.string(), offset);
  trace.start_time = detail::read_le<double>(in, path.string(), offset);
  const auto count = detail::read_le<std::uint64_t>(in, path.string(), offset);
  if (count == 0 || count > (std::uint64_t(1) << 32))
    throw BadFormat(path.string() + ": implausible sample count at byte offset 16");
  trace.samples.resize(count);
  for (std::uint64_t i = 0; i < count; ++i)
    trace.samples[i] = detail::read_le<double>(in, path.string(), offset);
  try {
    trace.validate();
  } catch (const ConfigError& e) {
    throw BadFormat(path.string() + ": " + e.what());
  }
  return trace;
}

// Kernel CSV: comment header carrying the metadata, then one tap per line.

inline void write_kernel_csv(const std::filesystem::path& path, const FilterKernel& kernel) {
  kernel.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "# pnr-kernel v1\n";
  out << "# sample_rate_hz = " << detail::format_double(kernel.sample_rate) << '\n';
  out << "# normalization = " << to_string(kernel.normalization) << '\n';
  for (double t : kernel.taps) out << detail::format_double(t) << '\n';
}

inline FilterKernel read_kernel_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  FilterKernel kernel;
  kernel.sample_rate = 0.0;
  std::string line;
  std::size_t line_no = 0;
  bool saw_norm = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t#");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "sample_rate_hz") {
        kernel.sample_rate = std::stod(value);
      } else if (key == "normalization") {
        kernel.normalization = kernel_normalization_from_string(value);
        saw_norm = true;
      }
      continue;
    }
    try {
      kernel.taps.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw BadFormat(path.string() + ": line " + std::to_string(line_no) + " is not a tap value");
    }
  }
  if (kernel.taps.empty()) throw BadFormat(path.string() + ": no taps");
  if (!(kernel.sample_rate > 0.0))
    throw BadFormat(path.string() + ": missing '# sample_rate_hz = ...' header");
  if (!saw_norm) throw BadFormat(path.string() + ": missing '# normalization = ...' header");
  kernel.validate();
  return kernel;
}

// Event list CSV: peak_mV,time_s,assigned_n (assigned_n empty when unset).

inline void write_events_csv(const std::filesystem::path& path,
                             const std::vector<DetectionEvent>& events) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "peak_mV,time_s,assigned_n\n";
  for (const auto& ev : events) {
    out << detail::format_double(ev.peak_amplitude) << ',' << detail::format_double(ev.peak_time)
        << ',';
    if (ev.assigned_n) out << *ev.assigned_n;
    out << '\n';
  }
}

inline void write_histogram_csv(const std::filesystem::path& path,
                                const AmplitudeHistogram& hist) {
  hist.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << "bin_lo_mV,bin_hi_mV,count\n";
  for (std::size_t i = 0; i < hist.bins(); ++i)
    out << detail::format_double(hist.bin_edges[i]) << ','
        << detail::format_double(hist.bin_edges[i + 1]) << ',' << hist.counts[i] << '\n';
}

}  // namespace pnr
