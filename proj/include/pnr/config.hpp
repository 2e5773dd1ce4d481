#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pnr/errors.hpp"
#include "pnr/experiments.hpp"
#include "pnr/io.hpp"

namespace pnr {

/// Minimal INI reader: [section] headers, key = value lines, comments with
/// '#' or ';'. Order is preserved for reporting.
struct IniFile {
  using Section = std::vector<std::pair<std::string, std::string>>;
  std::vector<std::pair<std::string, Section>> sections;

  static IniFile parse(std::istream& in, const std::string& name) {
    IniFile file;
    std::string line;
    std::string current;
    std::size_t line_no = 0;
    auto trim = [](const std::string& s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty() || t.front() == '#' || t.front() == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError(name + ":" + std::to_string(line_no) + ": malformed section header");
        current = trim(t.substr(1, t.size() - 2));
        file.sections.emplace_back(current, Section{});
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(name + ":" + std::to_string(line_no) + ": expected key = value");
      if (current.empty())
        throw ConfigError(name + ":" + std::to_string(line_no) + ": key outside any section");
      file.sections.back().second.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return file;
  }

  static IniFile parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path.string() + "'");
    return parse(in, path.filename().string());
  }

  /// Latest value wins when a section or key repeats.
  const std::string* find(const std::string& section, const std::string& key) const {
    const std::string* found = nullptr;
    for (const auto& [name, entries] : sections) {
      if (name != section) continue;
      for (const auto& [k, v] : entries)
        if (k == key) found = &v;
    }
    return found;
  }
};

/// Settings of the `simulate` subcommand.
struct SimulateConfig {
  int num_traces = 100;
  std::optional<int> fixed_photon_number;  // unset: draw from the fired-pixel mixture
};

/// Full resolved tool configuration.
struct ToolConfig {
  ExperimentConfig experiment;
  SimulateConfig simulate;
  std::optional<std::string> template_csv;           // custom matched template, if any
  std::map<int, std::string> per_photon_template_csv;  // per-n template overrides
};

namespace detail {

inline double parse_double(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + where + " = '" + value + "' is not a number");
  }
}

inline std::int64_t parse_int(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + where + " = '" + value + "' is not an integer");
  }
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + where + " = '" + value + "' is not an unsigned integer");
  }
}

inline bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config: " + where + " = '" + value + "' is not a boolean");
}

inline std::vector<double> parse_double_list(const std::string& value, const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(parse_double(item.substr(b, e - b + 1), where));
  }
  if (out.empty()) throw ConfigError("config: " + where + " is an empty list");
  return out;
}

}  // namespace detail

/// Builds the resolved configuration from an INI file. All physical keys
/// carry their unit in the name. Unknown keys are rejected so typos cannot
/// silently fall back to defaults.
inline ToolConfig load_tool_config(const IniFile& ini) {
  static const std::map<std::string, std::set<std::string>> known = {
      {"pulse", {"tau_rise_ns", "tau_fall_ns", "peak_normalized", "amplitudes_mv", "a1_mv"}},
      {"noise", {"sigma_mv"}},
      {"readout",
       {"num_pixels", "bias_current_ua", "line_impedance_ohm", "shunt_resistance_ohm"}},
      {"sampling", {"sample_rate_gsps", "duration_ns"}},
      {"filter",
       {"kind", "lowpass_cutoff_mhz", "lowpass_kind", "template_duration_ns", "normalization",
        "template_csv"}},
      {"run", {"seed", "trials", "arrival_time_ns", "mu"}},
      {"simulate", {"num_traces", "photon_number"}},
  };
  // per-photon-number template overrides use dynamic keys template_csv_n<k>
  const auto is_per_photon_template = [](const std::string& section, const std::string& key) {
    if (section != "filter" || key.rfind("template_csv_n", 0) != 0) return false;
    const std::string suffix = key.substr(14);
    return !suffix.empty() &&
           suffix.find_first_not_of("0123456789") == std::string::npos;
  };
  for (const auto& [section, entries] : ini.sections) {
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : entries)
      if (!it->second.count(key) && !is_per_photon_template(section, key))
        throw ConfigError("config: unknown key " + section + "." + key);
  }

  ToolConfig cfg;
  ExperimentConfig& ex = cfg.experiment;

  auto get = [&](const char* section, const char* key) { return ini.find(section, key); };

  if (const auto* v = get("readout", "num_pixels"))
    ex.readout.num_pixels = static_cast<int>(detail::parse_int(*v, "readout.num_pixels"));
  if (const auto* v = get("readout", "bias_current_ua"))
    ex.readout.bias_current = detail::parse_double(*v, "readout.bias_current_ua") * 1e-6;
  if (const auto* v = get("readout", "line_impedance_ohm"))
    ex.readout.line_impedance = detail::parse_double(*v, "readout.line_impedance_ohm");
  if (const auto* v = get("readout", "shunt_resistance_ohm"))
    ex.readout.shunt_resistance = detail::parse_double(*v, "readout.shunt_resistance_ohm");

  if (const auto* v = get("pulse", "tau_rise_ns"))
    ex.shape.tau_rise = detail::parse_double(*v, "pulse.tau_rise_ns") * 1e-9;
  if (const auto* v = get("pulse", "tau_fall_ns"))
    ex.shape.tau_fall = detail::parse_double(*v, "pulse.tau_fall_ns") * 1e-9;
  if (const auto* v = get("pulse", "peak_normalized"))
    ex.shape.peak_normalized = detail::parse_bool(*v, "pulse.peak_normalized");

  // amplitude table: explicit list wins, then the linear A_n = n * a1 model,
  // then the electrical readout estimate
  if (const auto* v = get("pulse", "amplitudes_mv")) {
    const auto values = detail::parse_double_list(*v, "pulse.amplitudes_mv");
    for (std::size_t i = 0; i < values.size(); ++i)
      ex.shape.amplitudes[static_cast<int>(i) + 1] = values[i];
  } else if (const auto* v2 = get("pulse", "a1_mv")) {
    ex.shape.amplitudes = PulseShape::linear_amplitudes(
        detail::parse_double(*v2, "pulse.a1_mv"), ex.readout.num_pixels);
  } else {
    ex.shape.amplitudes = PulseShape::linear_amplitudes(electrical_amplitude(ex.readout, 1),
                                                        ex.readout.num_pixels);
  }

  if (const auto* v = get("noise", "sigma_mv"))
    ex.noise.sigma = detail::parse_double(*v, "noise.sigma_mv");

  if (const auto* v = get("sampling", "sample_rate_gsps"))
    ex.sample_rate = detail::parse_double(*v, "sampling.sample_rate_gsps") * 1e9;
  if (const auto* v = get("sampling", "duration_ns"))
    ex.duration = detail::parse_double(*v, "sampling.duration_ns") * 1e-9;

  if (const auto* v = get("filter", "kind")) ex.filter.type = filter_type_from_string(*v);
  if (const auto* v = get("filter", "lowpass_cutoff_mhz"))
    ex.filter.lowpass_cutoff_hz = detail::parse_double(*v, "filter.lowpass_cutoff_mhz") * 1e6;
  if (const auto* v = get("filter", "lowpass_kind"))
    ex.filter.lowpass_kind = lowpass_kind_from_string(*v);
  if (const auto* v = get("filter", "template_duration_ns"))
    ex.filter.template_duration = detail::parse_double(*v, "filter.template_duration_ns") * 1e-9;
  if (const auto* v = get("filter", "normalization"))
    ex.filter.normalization = kernel_normalization_from_string(*v);
  if (const auto* v = get("filter", "template_csv")) {
    cfg.template_csv = *v;
    ex.filter.custom_kernel = read_kernel_csv(*v);
    if (ex.filter.type == FilterType::matched) ex.filter.type = FilterType::custom;
  }
  for (const auto& [section, entries] : ini.sections) {
    if (section != "filter") continue;
    for (const auto& [key, value] : entries) {
      if (!is_per_photon_template(section, key)) continue;
      const int n = static_cast<int>(detail::parse_int(key.substr(14), "filter." + key));
      if (n < 1) throw ConfigError("config: filter." + key + " needs a photon number >= 1");
      cfg.per_photon_template_csv[n] = value;
      ex.filter.per_photon_templates[n] = read_kernel_csv(value);
    }
  }

  if (const auto* v = get("run", "seed")) ex.seed = detail::parse_u64(*v, "run.seed");
  if (const auto* v = get("run", "trials"))
    ex.trials = static_cast<int>(detail::parse_int(*v, "run.trials"));
  if (const auto* v = get("run", "arrival_time_ns"))
    ex.arrival_time = detail::parse_double(*v, "run.arrival_time_ns") * 1e-9;
  if (const auto* v = get("run", "mu"))
    ex.mean_photon_number = detail::parse_double(*v, "run.mu");

  if (const auto* v = get("simulate", "num_traces"))
    cfg.simulate.num_traces = static_cast<int>(detail::parse_int(*v, "simulate.num_traces"));
  if (const auto* v = get("simulate", "photon_number"))
    cfg.simulate.fixed_photon_number =
        static_cast<int>(detail::parse_int(*v, "simulate.photon_number"));

  ex.validate();
  if (cfg.simulate.num_traces < 1)
    throw ConfigError("config: simulate.num_traces must be >= 1");
  if (cfg.simulate.fixed_photon_number &&
      (*cfg.simulate.fixed_photon_number < 1 ||
       *cfg.simulate.fixed_photon_number > ex.readout.num_pixels))
    throw ConfigError("config: simulate.photon_number must lie in [1, num_pixels]");
  return cfg;
}

inline ToolConfig load_tool_config(const std::filesystem::path& path) {
  return load_tool_config(IniFile::parse_file(path));
}

}  // namespace pnr
