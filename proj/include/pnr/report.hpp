#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "pnr/config.hpp"
#include "pnr/discrimination.hpp"
#include "pnr/experiments.hpp"
#include "pnr/manifest.hpp"

namespace pnr {

// JSON report emission. ordered_json keeps key order fixed and nlohmann's
// number formatting is value-deterministic, so identical results serialize
// to identical bytes.
using Json = nlohmann::ordered_json;

inline Json mixture_fit_json(const MixtureFit& fit) {
  Json components = Json::array();
  for (const auto& c : fit.components) {
    Json entry;
    entry["weight"] = c.weight;
    entry["mean_mv"] = c.mean;
    entry["stddev_mv"] = c.stddev;
    components.push_back(entry);
  }
  Json out;
  out["components"] = components;
  out["residual_norm"] = fit.residual_norm;
  out["iterations"] = fit.iterations;
  return out;
}

inline Json discrimination_report_json(const DiscriminationReport& report) {
  Json out;
  out["total_pulses"] = report.total_pulses;
  out["zero_photon_pulses"] = report.zero_photon_pulses;
  out["histogram_bins"] = report.histogram_bins;
  out["fit"] = mixture_fit_json(report.fit);
  out["spacings"] = report.spacings;
  out["per_photon_snr"] = report.per_photon_snr;
  out["mu_estimate"] = report.mu_estimate;
  Json counts = Json::object();
  for (const auto& [k, c] : report.fired_counts) counts[std::to_string(k)] = c;
  out["fired_counts"] = counts;
  return out;
}

inline Json sweep_result_json(const SweepResult& result) {
  Json points = Json::array();
  for (const auto& p : result.points) {
    Json entry;
    entry["cutoff_hz"] = p.cutoff_hz;
    entry["s12"] = p.s12;
    entry["jitter_s"] = p.jitter;
    points.push_back(entry);
  }
  Json out;
  out["points"] = points;
  out["best_cutoff_hz"] = result.best_cutoff_hz;
  out["matched_s12"] = result.matched_s12;
  out["matched_jitter_s"] = result.matched_jitter;
  return out;
}

inline Json config_json(const ToolConfig& cfg) {
  const ExperimentConfig& ex = cfg.experiment;
  Json out;
  Json pulse;
  pulse["tau_rise_s"] = ex.shape.tau_rise;
  pulse["tau_fall_s"] = ex.shape.tau_fall;
  pulse["peak_normalized"] = ex.shape.peak_normalized;
  Json amplitudes = Json::object();
  for (const auto& [n, a] : ex.shape.amplitudes) amplitudes[std::to_string(n)] = a;
  pulse["amplitudes_mv"] = amplitudes;
  out["pulse"] = pulse;

  Json noise;
  noise["sigma_mv"] = ex.noise.sigma;
  out["noise"] = noise;

  Json readout;
  readout["num_pixels"] = ex.readout.num_pixels;
  readout["bias_current_a"] = ex.readout.bias_current;
  readout["line_impedance_ohm"] = ex.readout.line_impedance;
  readout["shunt_resistance_ohm"] = ex.readout.shunt_resistance;
  out["readout"] = readout;

  Json filter;
  filter["kind"] = to_string(ex.filter.type);
  filter["lowpass_cutoff_hz"] = ex.filter.lowpass_cutoff_hz;
  filter["lowpass_kind"] = to_string(ex.filter.lowpass_kind);
  filter["template_duration_s"] = ex.filter.template_duration;
  filter["normalization"] = to_string(ex.filter.normalization);
  if (cfg.template_csv) filter["template_csv"] = *cfg.template_csv;
  if (!cfg.per_photon_template_csv.empty()) {
    Json per_photon = Json::object();
    for (const auto& [n, path] : cfg.per_photon_template_csv)
      per_photon[std::to_string(n)] = path;
    filter["per_photon_template_csv"] = per_photon;
  }
  out["filter"] = filter;

  Json run;
  run["sample_rate_hz"] = ex.sample_rate;
  run["duration_s"] = ex.duration;
  run["arrival_time_s"] = ex.arrival_time;
  run["trials"] = ex.trials;
  run["seed"] = ex.seed;
  run["mu"] = ex.mean_photon_number;
  out["run"] = run;

  Json simulate;
  simulate["num_traces"] = cfg.simulate.num_traces;
  if (cfg.simulate.fixed_photon_number)
    simulate["photon_number"] = *cfg.simulate.fixed_photon_number;
  out["simulate"] = simulate;
  return out;
}

inline ToolConfig config_from_json(const Json& j) {
  ToolConfig cfg;
  ExperimentConfig& ex = cfg.experiment;
  const Json& pulse = j.at("pulse");
  ex.shape.tau_rise = pulse.at("tau_rise_s").get<double>();
  ex.shape.tau_fall = pulse.at("tau_fall_s").get<double>();
  ex.shape.peak_normalized = pulse.at("peak_normalized").get<bool>();
  ex.shape.amplitudes.clear();
  for (const auto& [key, value] : pulse.at("amplitudes_mv").items())
    ex.shape.amplitudes[std::stoi(key)] = value.get<double>();

  ex.noise.sigma = j.at("noise").at("sigma_mv").get<double>();

  const Json& readout = j.at("readout");
  ex.readout.num_pixels = readout.at("num_pixels").get<int>();
  ex.readout.bias_current = readout.at("bias_current_a").get<double>();
  ex.readout.line_impedance = readout.at("line_impedance_ohm").get<double>();
  ex.readout.shunt_resistance = readout.at("shunt_resistance_ohm").get<double>();

  const Json& filter = j.at("filter");
  ex.filter.type = filter_type_from_string(filter.at("kind").get<std::string>());
  ex.filter.lowpass_cutoff_hz = filter.at("lowpass_cutoff_hz").get<double>();
  ex.filter.lowpass_kind = lowpass_kind_from_string(filter.at("lowpass_kind").get<std::string>());
  ex.filter.template_duration = filter.at("template_duration_s").get<double>();
  ex.filter.normalization =
      kernel_normalization_from_string(filter.at("normalization").get<std::string>());
  if (filter.contains("template_csv")) {
    cfg.template_csv = filter.at("template_csv").get<std::string>();
    ex.filter.custom_kernel = read_kernel_csv(*cfg.template_csv);
  }
  if (filter.contains("per_photon_template_csv")) {
    for (const auto& [key, value] : filter.at("per_photon_template_csv").items()) {
      const int n = std::stoi(key);
      cfg.per_photon_template_csv[n] = value.get<std::string>();
      ex.filter.per_photon_templates[n] = read_kernel_csv(value.get<std::string>());
    }
  }

  const Json& run = j.at("run");
  ex.sample_rate = run.at("sample_rate_hz").get<double>();
  ex.duration = run.at("duration_s").get<double>();
  ex.arrival_time = run.at("arrival_time_s").get<double>();
  ex.trials = run.at("trials").get<int>();
  ex.seed = run.at("seed").get<std::uint64_t>();
  ex.mean_photon_number = run.at("mu").get<double>();

  const Json& simulate = j.at("simulate");
  cfg.simulate.num_traces = simulate.at("num_traces").get<int>();
  if (simulate.contains("photon_number"))
    cfg.simulate.fixed_photon_number = simulate.at("photon_number").get<int>();

  ex.validate();
  return cfg;
}

inline Json manifest_json(const RunManifest& manifest) {
  Json out;
  out["tool"] = manifest.tool;
  out["version"] = manifest.version;
  out["command"] = manifest.command;
  out["timestamp_utc"] = manifest.timestamp_utc;
  out["master_seed"] = manifest.master_seed;
  out["config"] = config_json(manifest.config);
  Json args = Json::object();
  for (const auto& [k, v] : manifest.args) args[k] = v;
  out["args"] = args;
  Json digests = Json::object();
  for (const auto& [k, v] : manifest.input_digests) digests[k] = v;
  out["input_digests"] = digests;
  return out;
}

inline RunManifest manifest_from_json(const Json& j) {
  RunManifest m;
  m.tool = j.at("tool").get<std::string>();
  m.version = j.at("version").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.timestamp_utc = j.at("timestamp_utc").get<std::string>();
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.config = config_from_json(j.at("config"));
  for (const auto& [k, v] : j.at("args").items()) m.args[k] = v.get<std::string>();
  for (const auto& [k, v] : j.at("input_digests").items())
    m.input_digests[k] = v.get<std::string>();
  return m;
}

}  // namespace pnr
