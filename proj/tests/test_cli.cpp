#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "pnr/io.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "pnr_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

CliResult run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path log = work_dir() / ("cli_" + std::to_string(counter++) + ".log");
  std::string cmd = env.empty() ? std::string() : env + " ";
  cmd += std::string(PNRSIM_BIN) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliResult result;
  result.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  result.output = ss.str();
  return result;
}

fs::path write_config(const std::string& name, const std::string& extra = "") {
  const fs::path path = work_dir() / name;
  std::ofstream out(path);
  out << "[pulse]\n"
         "tau_rise_ns = 0.21\n"
         "tau_fall_ns = 25\n"
         "a1_mv = 2.0\n"
         "[noise]\n"
         "sigma_mv = 0.4\n"
         "[readout]\n"
         "num_pixels = 6\n"
         "[sampling]\n"
         "sample_rate_gsps = 5\n"
         "duration_ns = 204.8\n"
         "[filter]\n"
         "kind = matched\n"
         "template_duration_ns = 125\n"
         "[run]\n"
         "seed = 1234\n"
         "trials = 1200\n"
         "arrival_time_ns = 40\n"
         "mu = 5.7\n"
         "[simulate]\n"
         "num_traces = 400\n";
  out << extra;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simulate writes readable, reproducible traces", "[cli]") {
  const fs::path cfg = write_config("sim.ini");
  const fs::path out1 = work_dir() / "sim1";
  const fs::path out2 = work_dir() / "sim2";

  const CliResult r1 = run_cli("simulate --config " + cfg.string() + " --out " + out1.string());
  REQUIRE(r1.code == 0);
  REQUIRE(fs::exists(out1 / "manifest.json"));
  REQUIRE(fs::exists(out1 / "true_events.csv"));
  REQUIRE(fs::exists(out1 / "trace_00000.pnrt"));

  // round trip through the reader
  const pnr::Trace trace = pnr::read_trace(out1 / "trace_00000.pnrt");
  REQUIRE(trace.sample_rate == 5e9);
  REQUIRE(trace.samples.size() == 1024);

  // identical config and seed give byte-identical traces
  const CliResult r2 = run_cli("simulate --config " + cfg.string() + " --out " + out2.string());
  REQUIRE(r2.code == 0);
  REQUIRE(slurp(out1 / "trace_00000.pnrt") == slurp(out2 / "trace_00000.pnrt"));
  REQUIRE(slurp(out1 / "true_events.csv") == slurp(out2 / "true_events.csv"));

  // a different seed changes the bytes
  const fs::path out3 = work_dir() / "sim3";
  const CliResult r3 = run_cli("simulate --config " + cfg.string() + " --seed 999 --out " +
                               out3.string());
  REQUIRE(r3.code == 0);
  REQUIRE(slurp(out1 / "trace_00000.pnrt") != slurp(out3 / "trace_00000.pnrt"));
}

TEST_CASE("config violations exit with code 2 and name the constraint", "[cli]") {
  const fs::path bad = write_config("bad.ini", "[pulse]\ntau_rise_ns = 30\n");
  const CliResult r =
      run_cli("simulate --config " + bad.string() + " --out " + (work_dir() / "x").string());
  REQUIRE(r.code == 2);
  REQUIRE(r.output.find("tau_rise") != std::string::npos);
}

TEST_CASE("analyze produces the full report chain", "[cli]") {
  const fs::path cfg = write_config("ana.ini");
  const fs::path sim = work_dir() / "ana_sim";
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + sim.string()).code == 0);

  const fs::path out = work_dir() / "ana_out";
  const CliResult r = run_cli("analyze " + sim.string() + " --config " + cfg.string() +
                              " --out " + out.string() + " --ref-times " +
                              (sim / "true_events.csv").string());
  REQUIRE(r.code == 0);
  REQUIRE(fs::exists(out / "events.csv"));
  REQUIRE(fs::exists(out / "histogram.csv"));
  REQUIRE(fs::exists(out / "report.json"));

  const Json report = Json::parse(slurp(out / "report.json"));
  REQUIRE(report.at("fit").at("components").size() == 6);
  REQUIRE(report.at("spacings").size() == 5);
  REQUIRE(report.contains("mu_estimate"));
  REQUIRE(report.contains("jitter_gaussian_fit_s"));
  REQUIRE(report.at("manifest").at("command") == "analyze");

  // events.csv row per analyzed trace
  std::ifstream events(out / "events.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(events, line))
    if (!line.empty()) ++rows;
  std::size_t traces = 0;
  for (const auto& entry : fs::directory_iterator(sim))
    if (entry.path().extension() == ".pnrt") ++traces;
  REQUIRE(rows == traces + 1);  // header included
}

TEST_CASE("analyze data errors exit with code 3", "[cli]") {
  const fs::path cfg = write_config("err.ini");
  const fs::path empty = work_dir() / "empty_dir";
  fs::create_directories(empty);
  const CliResult none = run_cli("analyze " + empty.string() + " --config " + cfg.string() +
                                 " --out " + (work_dir() / "err_out").string());
  REQUIRE(none.code == 3);

  const fs::path corrupt_dir = work_dir() / "corrupt_dir";
  fs::create_directories(corrupt_dir);
  {
    std::ofstream out(corrupt_dir / "broken.pnrt", std::ios::binary);
    out << "NOTAPNRTRECORD";
  }
  const CliResult bad = run_cli("analyze " + corrupt_dir.string() + " --config " + cfg.string() +
                                " --out " + (work_dir() / "err_out2").string());
  REQUIRE(bad.code == 3);
  REQUIRE(bad.output.find("broken.pnrt") != std::string::npos);
}

TEST_CASE("sweep validates its cutoff list and reports the argmax", "[cli]") {
  const fs::path cfg = write_config("swp.ini");

  const CliResult usage = run_cli("sweep --config " + cfg.string() + " --out " +
                                  (work_dir() / "swp_bad").string() + " --cutoffs 10e6");
  REQUIRE(usage.code == 2);

  const fs::path out = work_dir() / "swp_out";
  const CliResult r = run_cli("sweep --config " + cfg.string() + " --out " + out.string() +
                              " --cutoffs 10e6,40e6,200e6,800e6");
  REQUIRE(r.code == 0);

  std::ifstream csv(out / "sweep.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 5);  // header + one row per cutoff

  const Json report = Json::parse(slurp(out / "report.json"));
  REQUIRE(report.at("sweep").at("points").size() == 4);
  REQUIRE(report.at("sweep").at("best_cutoff_hz").get<double>() > 0.0);
  REQUIRE(report.at("sweep").at("matched_s12").get<double>() > 0.0);
}

TEST_CASE("replay regenerates reports byte for byte across thread counts", "[cli]") {
  const fs::path cfg = write_config("rep.ini");
  const fs::path out = work_dir() / "rep_sweep";
  REQUIRE(run_cli("sweep --config " + cfg.string() + " --out " + out.string() +
                  " --cutoffs 10e6,40e6,200e6")
              .code == 0);

  const fs::path rep1 = work_dir() / "rep1";
  const fs::path rep8 = work_dir() / "rep8";
  REQUIRE(run_cli("report --manifest " + (out / "manifest.json").string() + " --out " +
                      rep1.string(),
                  "PNR_THREADS=1")
              .code == 0);
  REQUIRE(run_cli("report --manifest " + (out / "manifest.json").string() + " --out " +
                      rep8.string(),
                  "PNR_THREADS=8")
              .code == 0);
  REQUIRE(slurp(rep1 / "report.json") == slurp(out / "report.json"));
  REQUIRE(slurp(rep8 / "report.json") == slurp(out / "report.json"));
  REQUIRE(slurp(rep1 / "sweep.csv") == slurp(out / "sweep.csv"));
  REQUIRE(slurp(rep8 / "sweep.csv") == slurp(out / "sweep.csv"));
}

TEST_CASE("filter flag parsing", "[cli]") {
  const fs::path cfg = write_config("flt.ini");
  const fs::path sim = work_dir() / "flt_sim";
  REQUIRE(run_cli("simulate --config " + cfg.string() + " --out " + sim.string()).code == 0);

  const CliResult lp = run_cli("analyze " + sim.string() + " --config " + cfg.string() +
                               " --filter lowpass:50e6 --out " +
                               (work_dir() / "flt_lp").string());
  REQUIRE(lp.code == 0);

  const CliResult bad = run_cli("analyze " + sim.string() + " --config " + cfg.string() +
                                " --filter bandstop --out " +
                                (work_dir() / "flt_bad").string());
  REQUIRE(bad.code == 2);
}

TEST_CASE("usage and version flags", "[cli]") {
  REQUIRE(run_cli("--help").code == 0);
  REQUIRE(run_cli("--version").code == 0);
  REQUIRE(run_cli("").code == 2);                 // missing subcommand
  REQUIRE(run_cli("simulate").code == 2);         // missing required flags
  REQUIRE(run_cli("frobnicate --x y").code == 2); // unknown subcommand
}
