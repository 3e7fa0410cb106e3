#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "apa/harness/certify.hpp"
#include "apa/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace apa;
using namespace apa::harness;

namespace {

int config_error(const std::string& path, const ConfigError& e) {
  if (e.line() > 0) {
    std::cerr << fmt::format("{}:{}: error: {}\n", path, e.line(), e.what());
  } else {
    std::cerr << fmt::format("{}: error: {}\n", path, e.what());
  }
  return 2;
}

void report_runs(const std::vector<RunRecord>& records, const fs::path& output) {
  std::size_t converged = 0;
  for (const auto& r : records) {
    if (r.result.converged()) {
      ++converged;
    } else {
      std::cerr << fmt::format("note: {} ended with status {} after {} iterations{}\n", r.run_id,
                               to_string(r.result.status), r.result.iterations(),
                               r.result.message.empty() ? "" : ": " + r.result.message);
    }
  }
  std::cout << fmt::format("{} runs, {} converged; results in {}\n", records.size(), converged, output.string());
}

int run_command(const std::string& config_path, const std::string& output_override, unsigned threads) {
  Experiment experiment;
  try {
    experiment = load_experiment(config_path);
  } catch (const ConfigError& e) {
    return config_error(config_path, e);
  }
  RunOptions options;
  options.output = output_override.empty() ? fs::path(experiment.output) : fs::path(output_override);
  options.threads = threads;
  report_runs(run_experiment(experiment, options), options.output);
  return 0;
}

int sweep_command(const std::string& config_path, const std::string& grid_text, const std::string& output_override,
                  unsigned threads) {
  Experiment experiment;
  std::vector<double> grid;
  try {
    experiment = load_experiment(config_path);
  } catch (const ConfigError& e) {
    return config_error(config_path, e);
  }
  try {
    grid = parse_grid(grid_text);
  } catch (const InputError& e) {
    std::cerr << fmt::format("error: --param: {}\n", e.what());
    return 2;
  }
  RunOptions options;
  options.output = output_override.empty() ? fs::path(experiment.output) : fs::path(output_override);
  options.threads = threads;
  const auto records = run_sweep(experiment, grid, options);
  std::cout << fmt::format("{} runs over {} parameter values; table in {}\n", records.size(), grid.size(),
                           (options.output / "sweep.csv").string());
  return 0;
}

int certify_command(const std::string& suite) {
  bool ok = true;
  for (const auto& name : suite == "all" ? certify_suites() : std::vector<std::string>{suite}) {
    const auto report = certify(name);
    print(std::cout, report);
    ok = ok && report.passed();
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anderson-Pulay acceleration experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output;
  std::string grid = "default";
  std::string suite;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "run every problem/policy/version combination of a config");
  run->add_option("config", config_path, "experiment config")->required();
  run->add_option("-o,--output", output, "output directory (overrides [run] output)");
  run->add_option("-j,--threads", threads, "parallel runs (default: APA_THREADS or core count)");

  auto* sweep = app.add_subcommand("sweep", "sweep the restarted/adaptive parameter over a log grid");
  sweep->add_option("config", config_path, "experiment config")->required();
  sweep->add_option("--param", grid, "\"default\" (1e-2 ... 1e-8) or a comma-separated list");
  sweep->add_option("-o,--output", output, "output directory (overrides [run] output)");
  sweep->add_option("-j,--threads", threads, "parallel runs (default: APA_THREADS or core count)");

  std::vector<std::string> suites = certify_suites();
  suites.push_back("all");
  auto* cert = app.add_subcommand("certify", "run an oracle certification suite");
  cert->add_option("suite", suite, "suite name")->required()->check(CLI::IsMember(suites));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_path, output, threads);
    if (*sweep) return sweep_command(config_path, grid, output, threads);
    return certify_command(suite);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
