// pnrsim: simulate series-array detector pulse records, filter and analyze
// them, and run low-pass cutoff sweeps. Every report embeds a manifest that
// the `report` subcommand can replay byte for byte.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pnr/pnr.hpp"

namespace fs = std::filesystem;
using pnr::Json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string filter_flag;
};

void apply_filter_flag(pnr::ToolConfig& cfg, const std::string& flag) {
  if (flag.empty()) return;
  if (flag == "matched") {
    cfg.experiment.filter.type =
        cfg.experiment.filter.custom_kernel ? pnr::FilterType::custom : pnr::FilterType::matched;
  } else if (flag == "none") {
    cfg.experiment.filter.type = pnr::FilterType::none;
  } else if (flag.rfind("lowpass:", 0) == 0) {
    cfg.experiment.filter.type = pnr::FilterType::lowpass;
    try {
      cfg.experiment.filter.lowpass_cutoff_hz = std::stod(flag.substr(8));
    } catch (const std::exception&) {
      throw pnr::ConfigError("--filter lowpass:<hz> needs a numeric cutoff");
    }
  } else {
    throw pnr::ConfigError("--filter must be matched, lowpass:<hz>, or none");
  }
  cfg.experiment.validate();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw pnr::DataError("cannot open '" + path.string() + "' for writing");
  out << text;
}

void write_json_file(const fs::path& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string trace_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "trace_%05zu.pnrt", index);
  return buf;
}

// ---------------------------------------------------------------------------
// simulate

int run_simulate(const pnr::ToolConfig& cfg, const pnr::RunManifest& manifest,
                 const fs::path& out_dir) {
  const pnr::ExperimentConfig& ex = cfg.experiment;
  fs::create_directories(out_dir);

  const pnr::PhotonStatistics stats =
      pnr::fired_pixel_distribution(ex.mean_photon_number, ex.readout.num_pixels);
  std::vector<double> cdf(stats.fired_probabilities.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += stats.fired_probabilities[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;

  std::ostringstream events;
  events << "index,file,true_time_s,true_n\n";
  const auto count = static_cast<std::size_t>(cfg.simulate.num_traces);
  for (std::size_t i = 0; i < count; ++i) {
    pnr::Rng rng = pnr::Rng::stream(ex.seed, i);
    int fired;
    if (cfg.simulate.fixed_photon_number) {
      fired = *cfg.simulate.fixed_photon_number;
    } else {
      const double u = rng.uniform01();
      fired = 0;
      while (fired < ex.readout.num_pixels && u >= cdf[static_cast<std::size_t>(fired)]) ++fired;
    }
    if (fired == 0) {
      events << i << ",," << pnr::detail::format_double(ex.arrival_time) << ",0\n";
      continue;
    }
    pnr::Trace trace = pnr::synthesize_trace(
        ex.shape, pnr::EventSchedule{{pnr::TimedEvent{ex.arrival_time, fired}}}, ex.sample_rate,
        ex.duration);
    pnr::add_noise_inplace(trace.samples, ex.noise.sigma, rng);
    const std::string name = trace_file_name(i);
    pnr::write_trace(out_dir / name, trace);
    events << i << ',' << name << ',' << pnr::detail::format_double(ex.arrival_time) << ','
           << fired << '\n';
  }
  write_text_file(out_dir / "true_events.csv", events.str());
  write_json_file(out_dir / "manifest.json", pnr::manifest_json(manifest));
  std::cout << "simulate: wrote " << count << " records to " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze

struct RefEvent {
  double time = 0.0;
  int true_n = 0;
  std::string file;  // empty when no pixel fired
};

std::vector<RefEvent> read_ref_times(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw pnr::DataError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw pnr::BadFormat(path.string() + ": empty file");
  std::vector<RefEvent> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string index, file, time, n;
    if (!std::getline(ss, index, ',') || !std::getline(ss, file, ',') ||
        !std::getline(ss, time, ',') || !std::getline(ss, n))
      throw pnr::BadFormat(path.string() + ": line " + std::to_string(line_no) +
                           " needs index,file,true_time_s,true_n");
    RefEvent ev;
    ev.file = file;
    try {
      ev.time = std::stod(time);
      ev.true_n = std::stoi(n);
    } catch (const std::exception&) {
      throw pnr::BadFormat(path.string() + ": line " + std::to_string(line_no) +
                           " is not numeric");
    }
    out.push_back(ev);
  }
  return out;
}

std::vector<fs::path> collect_trace_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& input : inputs) {
    const fs::path p(input);
    if (fs::is_directory(p)) {
      std::vector<fs::path> entries;
      for (const auto& entry : fs::directory_iterator(p))
        if (entry.is_regular_file() && entry.path().extension() == ".pnrt")
          entries.push_back(entry.path());
      std::sort(entries.begin(), entries.end());
      files.insert(files.end(), entries.begin(), entries.end());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw pnr::NoInput("input '" + input + "' is neither a file nor a directory");
    }
  }
  if (files.empty()) throw pnr::NoInput("no trace files found");
  return files;
}

int run_analyze(const pnr::ToolConfig& cfg, pnr::RunManifest manifest,
                const std::vector<std::string>& inputs, const std::string& ref_times_path,
                int components, const fs::path& out_dir) {
  const pnr::ExperimentConfig& ex = cfg.experiment;
  const std::vector<fs::path> files = collect_trace_files(inputs);
  fs::create_directories(out_dir);

  std::optional<pnr::FilterKernel> kernel;
  if (ex.filter.type == pnr::FilterType::matched)
    kernel = pnr::build_matched_template(ex.shape, ex.sample_rate, ex.filter.template_duration,
                                         ex.filter.normalization);
  else if (ex.filter.type == pnr::FilterType::custom)
    kernel = ex.filter.custom_kernel;

  std::vector<pnr::DetectionEvent> detections(files.size());
  pnr::parallel_chunks(
      files.size(), pnr::resolve_thread_count(ex.threads), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          pnr::Trace trace = pnr::read_trace(files[i]);
          if (kernel)
            trace = pnr::apply_filter(trace, *kernel);
          else if (ex.filter.type == pnr::FilterType::lowpass)
            trace = pnr::apply_lowpass(trace, ex.filter.lowpass_cutoff_hz,
                                       ex.filter.lowpass_kind);
          const double guard = 2.0 * trace.dt();
          try {
            detections[i] =
                pnr::detect_peak(trace, trace.start_time + guard, trace.end_time() - guard);
          } catch (const pnr::DataError& e) {
            throw pnr::DataError(files[i].string() + ": " + e.what());
          }
        }
      });

  std::vector<double> amplitudes;
  amplitudes.reserve(detections.size());
  for (const auto& ev : detections) amplitudes.push_back(ev.peak_amplitude);

  const int bins = pnr::histogram_bins_for_mixture(amplitudes, components);
  const pnr::AmplitudeHistogram hist = pnr::build_histogram(amplitudes, bins);

  bool fit_converged = true;
  std::string fit_warning;
  pnr::MixtureFit fit;
  try {
    fit = pnr::fit_gaussian_mixture(hist, components);
  } catch (const pnr::FitNonConvergence& e) {
    fit = e.best;
    fit_converged = false;
    fit_warning = e.what();
    std::cerr << "warning: " << e.what() << " (writing partial report)\n";
  }

  std::vector<double> spacings;
  if (fit.components.size() >= 2) spacings = pnr::normalized_spacing(fit);
  for (auto& ev : detections) ev.assigned_n = pnr::classify_amplitude(ev.peak_amplitude, fit);

  // reference times: timing jitter, and the zero-pulse count for the mu estimate
  std::optional<double> jitter_gaussian, jitter_fwhm;
  std::optional<double> mu_estimate;
  std::uint64_t zero_pulses = 0;
  if (!ref_times_path.empty()) {
    const auto refs = read_ref_times(ref_times_path);
    std::map<std::string, double> true_time_by_file;
    for (const auto& r : refs) {
      if (r.file.empty())
        ++zero_pulses;
      else
        true_time_by_file[r.file] = r.time;
    }
    std::vector<double> delays;
    for (std::size_t i = 0; i < files.size(); ++i) {
      const auto it = true_time_by_file.find(files[i].filename().string());
      if (it != true_time_by_file.end()) delays.push_back(detections[i].peak_time - it->second);
    }
    if (delays.size() >= 100) {
      jitter_gaussian = pnr::timing_jitter(delays, pnr::JitterMethod::gaussian_fit);
      if (delays.size() >= 1000)
        jitter_fwhm = pnr::timing_jitter(delays, pnr::JitterMethod::direct_fwhm);
    } else {
      std::cerr << "warning: only " << delays.size()
                << " reference-matched events, skipping jitter (need >= 100)\n";
    }
    std::map<int, std::uint64_t> fired_counts;
    fired_counts[0] = zero_pulses;
    for (const auto& ev : detections) ++fired_counts[*ev.assigned_n];
    try {
      mu_estimate = pnr::estimate_mean_photon_number(fired_counts, ex.readout.num_pixels);
    } catch (const pnr::Error& e) {
      std::cerr << "warning: mu estimate failed: " << e.what() << "\n";
    }
  }

  pnr::write_events_csv(out_dir / "events.csv", detections);
  pnr::write_histogram_csv(out_dir / "histogram.csv", hist);

  Json report;
  report["manifest"] = pnr::manifest_json(manifest);
  report["num_traces"] = files.size();
  report["histogram_bins"] = bins;
  report["fit"] = pnr::mixture_fit_json(fit);
  report["fit_converged"] = fit_converged;
  if (!fit_warning.empty()) report["fit_warning"] = fit_warning;
  report["spacings"] = spacings;
  if (jitter_gaussian) report["jitter_gaussian_fit_s"] = *jitter_gaussian;
  if (jitter_fwhm) report["jitter_direct_fwhm_s"] = *jitter_fwhm;
  if (mu_estimate) report["mu_estimate"] = *mu_estimate;
  write_json_file(out_dir / "report.json", report);
  write_json_file(out_dir / "manifest.json", pnr::manifest_json(manifest));

  std::cout << "analyze: " << files.size() << " traces, " << fit.components.size()
            << " components, report in " << out_dir.string() << "\n";
  return fit_converged ? 0 : 4;
}

// ---------------------------------------------------------------------------
// sweep

std::vector<double> parse_cutoff_list(const std::string& text) {
  std::vector<double> cutoffs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      cutoffs.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw pnr::ConfigError("--cutoffs: '" + item + "' is not a frequency in Hz");
    }
  }
  return cutoffs;
}

int run_sweep(const pnr::ToolConfig& cfg, const pnr::RunManifest& manifest,
              const std::vector<double>& cutoffs, const fs::path& out_dir) {
  if (cutoffs.size() < 3)
    throw pnr::ConfigError("sweep needs at least 3 cutoffs (got " +
                           std::to_string(cutoffs.size()) + ")");
  const pnr::SweepResult result = pnr::sweep_lowpass(cfg.experiment, cutoffs);
  fs::create_directories(out_dir);

  std::ostringstream csv;
  csv << "cutoff_hz,s12,jitter_s\n";
  for (const auto& p : result.points)
    csv << pnr::detail::format_double(p.cutoff_hz) << ',' << pnr::detail::format_double(p.s12)
        << ',' << pnr::detail::format_double(p.jitter) << '\n';
  write_text_file(out_dir / "sweep.csv", csv.str());

  Json report;
  report["manifest"] = pnr::manifest_json(manifest);
  report["sweep"] = pnr::sweep_result_json(result);
  write_json_file(out_dir / "report.json", report);
  write_json_file(out_dir / "manifest.json", pnr::manifest_json(manifest));

  std::cout << "sweep: best cutoff " << result.best_cutoff_hz << " Hz, matched S12 "
            << result.matched_s12 << ", report in " << out_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report (replay from a manifest)

int run_report(const fs::path& manifest_path, const fs::path& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw pnr::DataError("cannot open '" + manifest_path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw pnr::BadFormat(manifest_path.string() + ": " + e.what());
  }
  if (j.contains("manifest")) j = j.at("manifest");  // accept a full report too
  const pnr::RunManifest manifest = pnr::manifest_from_json(j);

  if (manifest.command == "simulate") return run_simulate(manifest.config, manifest, out_dir);

  if (manifest.command == "analyze") {
    std::vector<std::string> inputs;
    std::stringstream ss(manifest.args.at("inputs"));
    std::string item;
    while (std::getline(ss, item, ';'))
      if (!item.empty()) inputs.push_back(item);
    // inputs must be byte-identical to the recorded run
    for (const auto& [path, digest] : manifest.input_digests) {
      if (!fs::exists(path))
        throw pnr::DataError("replay input '" + path + "' is missing");
      if (pnr::digest_file(path) != digest)
        throw pnr::DataError("replay input '" + path + "' does not match its recorded digest");
    }
    const auto ref_it = manifest.args.find("ref_times");
    const std::string ref = ref_it == manifest.args.end() ? std::string() : ref_it->second;
    const int components = std::stoi(manifest.args.at("components"));
    return run_analyze(manifest.config, manifest, inputs, ref, components, out_dir);
  }

  if (manifest.command == "sweep")
    return run_sweep(manifest.config, manifest, parse_cutoff_list(manifest.args.at("cutoffs")),
                     out_dir);

  throw pnr::BadFormat("manifest command '" + manifest.command + "' is not replayable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"series-array single-photon detector pulse simulation and matched-filter analysis"};
  app.set_version_flag("--version", std::string(pnr::kToolName) + " " + pnr::kToolVersion);
  app.require_subcommand(1);

  CommonArgs sim_args, ana_args, swp_args;
  std::vector<std::string> analyze_inputs;
  std::string ref_times;
  int components = 0;  // 0: use num_pixels
  std::string cutoffs_text;
  std::string report_manifest, report_out;

  auto* sim = app.add_subcommand("simulate", "synthesize detector pulse records");
  sim->add_option("--config", sim_args.config_path, "INI config file")->required();
  sim->add_option("--out", sim_args.out_dir, "output directory")->required();
  sim->add_option("--seed", sim_args.seed, "master seed override");
  sim->add_option("--filter", sim_args.filter_flag, "matched | lowpass:<hz> | none");

  auto* ana = app.add_subcommand("analyze", "filter recorded traces and fit the amplitude mixture");
  ana->add_option("traces", analyze_inputs, "trace files or directories")->required();
  ana->add_option("--config", ana_args.config_path, "INI config file")->required();
  ana->add_option("--out", ana_args.out_dir, "output directory")->required();
  ana->add_option("--seed", ana_args.seed, "master seed override");
  ana->add_option("--filter", ana_args.filter_flag, "matched | lowpass:<hz> | none");
  ana->add_option("--ref-times", ref_times, "CSV of true arrival times for jitter");
  ana->add_option("--components", components, "mixture component count (default: num_pixels)");

  auto* swp = app.add_subcommand("sweep", "low-pass cutoff sweep with matched-filter reference");
  swp->add_option("--config", swp_args.config_path, "INI config file")->required();
  swp->add_option("--out", swp_args.out_dir, "output directory")->required();
  swp->add_option("--seed", swp_args.seed, "master seed override");
  swp->add_option("--cutoffs", cutoffs_text, "comma-separated cutoff list in Hz")->required();

  auto* rep = app.add_subcommand("report", "regenerate outputs from a manifest, byte for byte");
  rep->add_option("--manifest", report_manifest, "manifest.json or report.json")->required();
  rep->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto make_manifest = [](const CommonArgs& args, const std::string& command,
                            pnr::ToolConfig& cfg) {
      cfg = pnr::load_tool_config(args.config_path);
      if (args.seed) cfg.experiment.seed = *args.seed;
      apply_filter_flag(cfg, args.filter_flag);
      pnr::RunManifest manifest;
      manifest.command = command;
      manifest.timestamp_utc = pnr::current_utc_timestamp();
      manifest.master_seed = cfg.experiment.seed;
      manifest.config = cfg;
      manifest.input_digests[args.config_path] = pnr::digest_file(args.config_path);
      if (cfg.template_csv)
        manifest.input_digests[*cfg.template_csv] = pnr::digest_file(*cfg.template_csv);
      for (const auto& [n, path] : cfg.per_photon_template_csv)
        manifest.input_digests[path] = pnr::digest_file(path);
      return manifest;
    };

    if (sim->parsed()) {
      pnr::ToolConfig cfg;
      const pnr::RunManifest manifest = make_manifest(sim_args, "simulate", cfg);
      return run_simulate(cfg, manifest, sim_args.out_dir);
    }

    if (ana->parsed()) {
      pnr::ToolConfig cfg;
      pnr::RunManifest manifest = make_manifest(ana_args, "analyze", cfg);
      const int k = components > 0 ? components : cfg.experiment.readout.num_pixels;
      std::vector<std::string> absolute;
      std::string joined;
      for (const auto& input : analyze_inputs) {
        absolute.push_back(fs::weakly_canonical(fs::absolute(input)).string());
        if (!joined.empty()) joined += ';';
        joined += absolute.back();
      }
      manifest.args["inputs"] = joined;
      manifest.args["components"] = std::to_string(k);
      if (!ref_times.empty()) {
        manifest.args["ref_times"] = fs::weakly_canonical(fs::absolute(ref_times)).string();
        manifest.input_digests[manifest.args["ref_times"]] =
            pnr::digest_file(manifest.args["ref_times"]);
      }
      for (const auto& file : collect_trace_files(absolute))
        manifest.input_digests[file.string()] = pnr::digest_file(file);
      const auto ref_arg =
          manifest.args.count("ref_times") ? manifest.args["ref_times"] : std::string();
      return run_analyze(cfg, manifest, absolute, ref_arg, k, ana_args.out_dir);
    }

    if (swp->parsed()) {
      pnr::ToolConfig cfg;
      pnr::RunManifest manifest = make_manifest(swp_args, "sweep", cfg);
      manifest.args["cutoffs"] = cutoffs_text;
      return run_sweep(cfg, manifest, parse_cutoff_list(cutoffs_text), swp_args.out_dir);
    }

    if (rep->parsed()) return run_report(report_manifest, report_out);
  } catch (const pnr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const pnr::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const pnr::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
