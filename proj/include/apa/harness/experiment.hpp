#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "apa/driver.hpp"
#include "apa/harness/config.hpp"
#include "apa/harness/csv.hpp"
#include "apa/problems/linear.hpp"
#include "apa/problems/scf.hpp"

namespace apa::harness {

struct ProblemInstance {
  std::string label;
  std::string kind;  // "linear" or "scf"
  Problem problem;
  Vector x0;
};

// A policy as written in the config. The super-restarted exponent may be left
// to depend on the error dimension of each problem ("auto": 1 / (2p + 1)).
struct PolicyTemplate {
  enum class Kind { Fixed, Restarted, Adaptive, SuperRestarted, SuperAdaptive };
  Kind kind = Kind::Fixed;
  double value = 0.0;
  std::optional<double> exponent;
  std::size_t line = 0;

  DepthPolicy resolve(Index p) const {
    switch (kind) {
      case Kind::Fixed:
        return FixedDepth{std::isinf(value) ? FixedDepth::unbounded : static_cast<std::size_t>(value)};
      case Kind::Restarted: return Restarted{value};
      case Kind::Adaptive: return AdaptiveDepth{value};
      case Kind::SuperRestarted:
        return SuperRestarted{value, exponent.value_or(1.0 / (2.0 * static_cast<double>(p) + 1.0))};
      case Kind::SuperAdaptive: return SuperAdaptive{value, exponent.value_or(max_super_adaptive_xi())};
    }
    return FixedDepth{0};
  }
};

struct Experiment {
  std::vector<ProblemInstance> problems;
  std::vector<PolicyTemplate> policies;
  std::vector<Version> versions;
  double tol = 1e-8;
  std::size_t max_iter = 500;
  bool lagrangian = false;
  double rank_cutoff = 1e-14;
  std::string output = "apa-out";
};

namespace detail {

inline std::size_t as_count(double v, const char* key, std::size_t line, double lo = 0.0) {
  if (!(v >= lo) || v != std::floor(v) || v > 1e9) {
    throw ConfigError(line, fmt::format("'{}' must be an integer >= {}", key, lo));
  }
  return static_cast<std::size_t>(v);
}

inline std::vector<ProblemInstance> linear_problems(const Config& c) {
  const auto seeds = c.numbers("problem.seeds", std::vector<double>{1.0});
  const auto sizes = c.numbers("problem.n");
  const double conditioning = c.number("problem.conditioning", 10.0);
  if (!(conditioning >= 1.0)) throw ConfigError(c.line_of("problem.conditioning"), "'conditioning' must be >= 1");
  const std::string which = c.string("problem.instance", std::string("spd"));
  if (which != "spd" && which != "nonsymmetric" && which != "all") {
    throw ConfigError(c.line_of("problem.instance"), "'instance' must be \"spd\", \"nonsymmetric\" or \"all\"");
  }
  std::vector<ProblemInstance> out;
  for (double n_value : sizes) {
    const auto n = static_cast<Index>(as_count(n_value, "n", c.line_of("problem.n"), 1.0));
    for (double seed_value : seeds) {
      const auto seed = as_count(seed_value, "seeds", c.line_of("problem.seeds"));
      for (const auto& lp : make_linear_suite(seed, n, conditioning)) {
        if (which != "all" && lp.name != which) continue;
        out.push_back({fmt::format("linear-{}-n{}-s{}", lp.name, n, seed), "linear", lp.as_problem(), Vector::Zero(n)});
      }
    }
  }
  return out;
}

inline std::vector<ProblemInstance> scf_problems(const Config& c) {
  const auto seeds = c.numbers("problem.seeds", std::vector<double>{1.0});
  const auto dims = c.numbers("problem.d");
  const auto electrons = c.numbers("problem.electrons");
  const auto difficulties = c.numbers("problem.difficulty");
  const std::string overlap_name = c.string("problem.overlap", std::string("gram"));
  if (overlap_name != "gram" && overlap_name != "identity") {
    throw ConfigError(c.line_of("problem.overlap"), "'overlap' must be \"gram\" or \"identity\"");
  }
  const auto overlap = overlap_name == "gram" ? OverlapKind::Gram : OverlapKind::Identity;
  const auto warm = as_count(c.number("problem.warm_start", 0.0), "warm_start", c.line_of("problem.warm_start"));

  std::vector<ProblemInstance> out;
  for (double d_value : dims) {
    const auto d = static_cast<Index>(as_count(d_value, "d", c.line_of("problem.d"), 2.0));
    if (d > 12) throw ConfigError(c.line_of("problem.d"), "'d' must be at most 12");
    for (double n_value : electrons) {
      const int n = static_cast<int>(as_count(n_value, "electrons", c.line_of("problem.electrons"), 1.0));
      if (n >= d) {
        throw ConfigError(c.line_of("problem.electrons"), fmt::format("electrons = {} needs d > {}, got d = {}", n, n, d));
      }
      for (double difficulty : difficulties) {
        if (!(difficulty >= 0.0)) throw ConfigError(c.line_of("problem.difficulty"), "'difficulty' must be >= 0");
        for (double seed_value : seeds) {
          const auto seed = as_count(seed_value, "seeds", c.line_of("problem.seeds"));
          const auto scf = make_toy_scf(seed, d, n, difficulty, overlap);
          Vector x0;
          try {
            x0 = scf.flatten(scf.warm_start(warm));
          } catch (const WellPosednessError& e) {
            throw ConfigError(c.line_of("problem.difficulty"),
                              fmt::format("instance d={} N={} difficulty={} seed={}: {}", d, n, difficulty, seed, e.what()));
          }
          out.push_back({fmt::format("scf-d{}-N{}-t{}-s{}", d, n, difficulty, seed), "scf", scf.as_problem(), x0});
        }
      }
    }
  }
  return out;
}

inline void add_policies(const Config& c, const char* key, PolicyTemplate::Kind kind, std::vector<PolicyTemplate>& out,
                         std::optional<double> exponent = std::nullopt) {
  if (!c.has(key)) return;
  const std::size_t line = c.line_of(key);
  for (double v : c.numbers(key)) {
    if (kind == PolicyTemplate::Kind::Fixed && !std::isinf(v)) as_count(v, "fixed", line);
    out.push_back(PolicyTemplate{kind, v, exponent, line});
  }
}

}  // namespace detail

inline const std::set<std::string>& experiment_keys() {
  static const std::set<std::string> keys{
      "problem.kind",     "problem.seeds",       "problem.n",          "problem.conditioning", "problem.instance",
      "problem.d",        "problem.electrons",   "problem.difficulty", "problem.overlap",      "problem.warm_start",
      "policy.fixed",     "policy.restarted",    "policy.adaptive",    "policy.super_restarted", "policy.super_adaptive",
      "policy.zeta",      "policy.xi",           "run.versions",       "run.tol",              "run.max_iter",
      "run.output",       "run.lagrangian",      "run.rank_cutoff"};
  return keys;
}

inline Experiment load_experiment(const Config& c) {
  c.expect_keys(experiment_keys());
  for (const char* section : {"problem", "policy", "run"}) {
    if (!c.has_section(section)) throw ConfigError(c.section_line(section), fmt::format("missing section [{}]", section));
  }

  Experiment e;
  const std::string kind = c.string("problem.kind");
  if (kind == "linear") {
    e.problems = detail::linear_problems(c);
  } else if (kind == "scf") {
    e.problems = detail::scf_problems(c);
  } else {
    throw ConfigError(c.line_of("problem.kind"), fmt::format("unknown problem kind '{}' (expected linear or scf)", kind));
  }
  if (e.problems.empty()) throw ConfigError(c.section_line("problem"), "the [problem] section selects no instances");

  using K = PolicyTemplate::Kind;
  std::optional<double> zeta;
  std::optional<double> xi;
  if (c.has("policy.zeta")) zeta = c.number("policy.zeta");
  if (c.has("policy.xi")) xi = c.number("policy.xi");
  detail::add_policies(c, "policy.fixed", K::Fixed, e.policies);
  detail::add_policies(c, "policy.restarted", K::Restarted, e.policies);
  detail::add_policies(c, "policy.adaptive", K::Adaptive, e.policies);
  detail::add_policies(c, "policy.super_restarted", K::SuperRestarted, e.policies, zeta);
  detail::add_policies(c, "policy.super_adaptive", K::SuperAdaptive, e.policies, xi);
  if (e.policies.empty()) throw ConfigError(c.section_line("policy"), "the [policy] section lists no policies");
  for (const auto& t : e.policies) {
    for (const auto& inst : e.problems) {
      try {
        validate(t.resolve(inst.problem.p), inst.problem.p);
      } catch (const InputError& err) {
        throw ConfigError(t.line, err.what());
      }
    }
  }

  for (const auto& v : c.strings("run.versions", std::vector<std::string>{"P"})) {
    if (v == "A") {
      e.versions.push_back(Version::A);
    } else if (v == "P") {
      e.versions.push_back(Version::P);
    } else {
      throw ConfigError(c.line_of("run.versions"), fmt::format("unknown version '{}' (expected \"A\" or \"P\")", v));
    }
  }
  if (e.versions.empty()) throw ConfigError(c.line_of("run.versions"), "'versions' must not be empty");
  e.tol = c.number("run.tol", 1e-8);
  if (!(e.tol >= 0.0)) throw ConfigError(c.line_of("run.tol"), "'tol' must be non-negative");
  e.max_iter = detail::as_count(c.number("run.max_iter", 500.0), "max_iter", c.line_of("run.max_iter"), 1.0);
  e.output = c.string("run.output", std::string("apa-out"));
  e.lagrangian = c.boolean("run.lagrangian", false);
  e.rank_cutoff = c.number("run.rank_cutoff", 1e-14);
  if (!(e.rank_cutoff > 0.0 && e.rank_cutoff < 1.0)) {
    throw ConfigError(c.line_of("run.rank_cutoff"), "'rank_cutoff' must lie in (0, 1)");
  }
  return e;
}

inline Experiment load_experiment(const std::string& path) { return load_experiment(Config::load(path)); }

struct RunRecord {
  std::string run_id;
  std::string problem;
  std::string kind;
  Index p = 0;
  DepthPolicy policy;
  Version version = Version::A;
  RunResult result;
  SummaryRow summary;
};

struct RunOptions {
  std::filesystem::path output;  // empty: keep results in memory only
  bool record_iterates = false;
  unsigned threads = 0;  // 0: APA_THREADS, else the hardware concurrency
};

// Worker cap: APA_THREADS when set to a positive integer, else the hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("APA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string run_id(const std::string& problem, const DepthPolicy& policy, Version version) {
  return fmt::format("{}_{}_{}", problem, describe(policy), to_string(version));
}

inline SummaryRow summarize(const std::string& id, const RunResult& result) {
  SummaryRow s;
  s.run_id = id;
  s.converged = result.converged();
  s.iterations = result.iterations();
  s.mean_depth = mean_depth(result.trace);
  try {
    s.rate = convergence_rate(result.trace);
  } catch (const InputError&) {
    s.rate = kNaN;
  }
  s.final_residual = result.trace.back().residual_norm;
  return s;
}

// Runs every (problem, policy, version) combination. Runs are independent and
// spread over worker threads; records come back in a fixed order regardless
// of scheduling. With an output directory each run writes
// traces/<run_id>.csv and diagnostics/<run_id>.csv, and summary.csv is
// written once all runs finish.
inline std::vector<RunRecord> run_experiment(const Experiment& e, const RunOptions& options = {}) {
  std::vector<RunRecord> records;
  for (const auto& inst : e.problems) {
    for (const auto& t : e.policies) {
      for (Version v : e.versions) {
        RunRecord r;
        r.policy = t.resolve(inst.problem.p);
        r.problem = inst.label;
        r.kind = inst.kind;
        r.p = inst.problem.p;
        r.version = v;
        r.run_id = run_id(inst.label, r.policy, v);
        records.push_back(std::move(r));
      }
    }
  }
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.run_id).second) throw InputError(fmt::format("duplicate run '{}' in experiment", r.run_id));
  }

  std::vector<const ProblemInstance*> instance_of;
  for (const auto& inst : e.problems) {
    for (std::size_t i = 0; i < e.policies.size() * e.versions.size(); ++i) instance_of.push_back(&inst);
  }

  DriverOptions driver;
  driver.max_iter = e.max_iter;
  driver.lagrangian_for_fixed = e.lagrangian;
  driver.solver.rank_cutoff = e.rank_cutoff;
  driver.record_iterates = options.record_iterates;

  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(records.size());
  const auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      RunRecord& r = records[i];
      const ProblemInstance& inst = *instance_of[i];
      try {
        r.result = accelerate(inst.problem, inst.x0, e.tol, r.policy, r.version, driver);
        r.summary = summarize(r.run_id, r.result);
        if (!options.output.empty()) {
          write_atomic(options.output / "traces" / (r.run_id + ".csv"), trace_csv(r.result.trace));
          write_atomic(options.output / "diagnostics" / (r.run_id + ".csv"), diagnostics_csv(r.result.trace));
        }
      } catch (const std::exception& ex) {
        errors[i] = fmt::format("{}: {}", r.run_id, ex.what());
      }
    }
  };
  const unsigned threads = std::min<std::size_t>(options.threads ? options.threads : thread_cap(), records.size());
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (const auto& err : errors) {
    if (!err.empty()) throw Error(err);
  }

  if (!options.output.empty()) {
    std::vector<SummaryRow> rows;
    for (const auto& r : records) rows.push_back(r.summary);
    write_atomic(options.output / "summary.csv", summary_csv(rows));
  }
  return records;
}

// Log grid 1e-2, 1e-3, ..., 1e-8.
inline std::vector<double> default_sweep_grid() {
  return {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
}

// "default" or a comma-separated list of values in (0, 1).
inline std::vector<double> parse_grid(const std::string& text) {
  if (text == "default") return default_sweep_grid();
  std::vector<double> out;
  for (const auto& field : detail::split(text)) {
    double v = 0.0;
    try {
      v = detail::parse_double(field);
    } catch (const InputError&) {
      throw InputError(fmt::format("bad grid value '{}'", field));
    }
    if (!(v > 0.0 && v < 1.0)) throw InputError(fmt::format("grid value {} is outside (0, 1)", field));
    out.push_back(v);
  }
  if (out.empty()) throw InputError("empty parameter grid");
  return out;
}

inline constexpr const char* sweep_header = "policy,param,run_id,converged,iterations,mean_depth,rate";

// Replaces the configured policies by restarted(tau) and/or adaptive(delta)
// over `grid` (the families present in the config, or both when neither is)
// and writes sweep.csv with one row per run.
inline std::vector<RunRecord> run_sweep(Experiment e, const std::vector<double>& grid, const RunOptions& options = {}) {
  using K = PolicyTemplate::Kind;
  bool restarted = false;
  bool adaptive = false;
  for (const auto& t : e.policies) {
    restarted = restarted || t.kind == K::Restarted;
    adaptive = adaptive || t.kind == K::Adaptive;
  }
  if (!restarted && !adaptive) restarted = adaptive = true;
  e.policies.clear();
  for (double v : grid) {
    if (restarted) e.policies.push_back(PolicyTemplate{K::Restarted, v, std::nullopt, 0});
    if (adaptive) e.policies.push_back(PolicyTemplate{K::Adaptive, v, std::nullopt, 0});
  }
  RunOptions in_memory = options;
  in_memory.output.clear();
  auto records = run_experiment(e, in_memory);

  if (!options.output.empty()) {
    std::string out = std::string(sweep_header) + "\n";
    for (const auto& r : records) {
      const bool is_restart = std::holds_alternative<Restarted>(r.policy);
      const double param = is_restart ? std::get<Restarted>(r.policy).tau : std::get<AdaptiveDepth>(r.policy).delta;
      out += fmt::format("{},{},{},{},{},{},{}\n", is_restart ? "restarted" : "adaptive", format_double(param), r.run_id,
                         r.summary.converged ? 1 : 0, r.summary.iterations, format_double(r.summary.mean_depth),
                         format_double(r.summary.rate));
    }
    write_atomic(options.output / "sweep.csv", out);
  }
  return records;
}

}  // namespace apa::harness
