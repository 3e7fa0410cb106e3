#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "apa/harness/certify.hpp"
#include "apa/harness/config.hpp"
#include "apa/harness/csv.hpp"
#include "apa/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace apa;
using namespace apa::harness;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / fmt::format("apa-test-{}-{}-{}", info->test_suite_name(), info->name(), ::getpid());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// CSV body with the trailing elapsed_ns column removed from every line.
std::string without_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::string out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

std::size_t line_of_error(const std::string& text) {
  try {
    load_experiment(Config::parse_string(text));
  } catch (const ConfigError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

struct Cli {
  int status;
  std::string out;
  std::string err;
};

Cli run_cli(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = fmt::format("{} {} {} > {} 2> {}", env, APA_CLI_PATH, args, out.string(), err.string());
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

const char* small_linear = R"([problem]
kind = "linear"
n = 12
seeds = [1, 2]
instance = "all"

[policy]
fixed = [3]
restarted = [1e-4]
adaptive = [1e-2]

[run]
versions = ["A", "P"]
tol = 1e-10
)";

}  // namespace

TEST(Config, ParsesScalarsArraysAndComments) {
  const auto c = Config::parse_string(R"(# header comment
[problem]
kind = "scf"   # trailing comment
d = [4, 6]
difficulty = 1_000.5
[run]
flag = true
names = ["A", "P"]
)");
  EXPECT_EQ(c.string("problem.kind"), "scf");
  EXPECT_EQ(c.numbers("problem.d"), (std::vector<double>{4.0, 6.0}));
  EXPECT_DOUBLE_EQ(c.number("problem.difficulty"), 1000.5);
  EXPECT_TRUE(c.boolean("run.flag", false));
  EXPECT_EQ(c.strings("run.names"), (std::vector<std::string>{"A", "P"}));
  EXPECT_EQ(c.line_of("problem.d"), 4u);
  EXPECT_EQ(c.number("run.missing", 2.5), 2.5);
}

TEST(Config, SyntaxErrorsCarryLineNumbers) {
  const auto line = [](const std::string& text) {
    try {
      Config::parse_string(text);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line("[problem]\nkind \"linear\"\n"), 2u);
  EXPECT_EQ(line("[problem]\n\nkind = \"linear\n"), 3u);
  EXPECT_EQ(line("[problem]\nn = 1\nn = 2\n"), 3u);
  EXPECT_EQ(line("kind = 1\n"), 1u);
  EXPECT_EQ(line("[problem]\nn = 12x\n"), 2u);
  EXPECT_EQ(line("[problem\n"), 1u);
  EXPECT_EQ(line("[a]\nx = [1, [2]]\n"), 2u);
  EXPECT_EQ(line("[a]\n[a]\n"), 2u);
}

TEST(Config, SemanticErrorsPointAtTheOffendingKey) {
  std::string text = small_linear;
  EXPECT_EQ(line_of_error(text + "bogus = 1\n"), 15u);
  EXPECT_EQ(line_of_error(std::string(small_linear).replace(text.find("1e-4"), 4, "2.0")), 9u);
  EXPECT_EQ(line_of_error(std::string(small_linear).replace(text.find("\"linear\""), 8, "\"quantum\"")), 2u);
  EXPECT_EQ(line_of_error(std::string(small_linear).replace(text.find("\"A\", \"P\""), 8, "\"B\"")), 13u);
  EXPECT_EQ(line_of_error(std::string(small_linear).replace(text.find("n = 12"), 6, "n = 0")), 3u);
  // missing required key is reported at its section header
  EXPECT_EQ(line_of_error(std::string(small_linear).replace(text.find("n = 12\n"), 7, "")), 1u);
  EXPECT_EQ(line_of_error("[problem]\nkind = \"scf\"\nd = 4\nelectrons = 4\ndifficulty = 0.1\n[policy]\nfixed = [0]\n[run]\n"),
            4u);
  EXPECT_EQ(line_of_error("[problem]\nkind = \"scf\"\nd = 4\nelectrons = 1\ndifficulty = 0.1\n[policy]\n"
                          "super_restarted = [1.0]\nzeta = 0.5\n[run]\n"),
            7u);
}

TEST(Experiment, ExpandsTheConfigMatrix) {
  const auto e = load_experiment(Config::parse_string(small_linear));
  EXPECT_EQ(e.problems.size(), 4u);
  EXPECT_EQ(e.policies.size(), 3u);
  EXPECT_EQ(e.versions.size(), 2u);
  EXPECT_EQ(e.max_iter, 500u);
  EXPECT_EQ(e.rank_cutoff, 1e-14);
  EXPECT_EQ(line_of_error(std::string(small_linear) + "rank_cutoff = 0\n"), 15u);
  const auto records = run_experiment(e);
  EXPECT_EQ(records.size(), 24u);
  EXPECT_EQ(records.front().run_id, "linear-spd-n12-s1_fixed-3_A");
}

TEST(Experiment, WritesTracesSummaryAndReplayableLogs) {
  TempDir dir;
  const auto e = load_experiment(Config::parse_string(small_linear));
  RunOptions options;
  options.output = dir.path();
  const auto records = run_experiment(e, options);

  std::size_t traces = 0;
  for (const auto& entry : fs::directory_iterator(dir.path() / "traces")) {
    ++traces;
    EXPECT_EQ(entry.path().extension(), ".csv");
  }
  EXPECT_EQ(traces, records.size());
  for (const auto& entry : fs::recursive_directory_iterator(dir.path())) {
    EXPECT_NE(entry.path().extension(), ".tmp");
  }

  const auto summary = read_summary(dir.path() / "summary.csv");
  ASSERT_EQ(summary.size(), records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    EXPECT_EQ(summary[i].run_id, r.run_id);
    EXPECT_TRUE(summary[i].converged);
    const auto rows = read_trace(dir.path() / "traces" / (r.run_id + ".csv"), dir.path() / "diagnostics" / (r.run_id + ".csv"));
    ASSERT_EQ(rows.size(), r.result.trace.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      EXPECT_EQ(rows[k].residual_norm, r.result.trace.rows[k].residual_norm);
      EXPECT_EQ(rows[k].projection_gap == r.result.trace.rows[k].projection_gap ||
                    (std::isnan(rows[k].projection_gap) && std::isnan(r.result.trace.rows[k].projection_gap)),
                true);
    }
    const auto replay = replay_depth_decisions(rows, r.policy);
    EXPECT_TRUE(replay.ok()) << r.run_id << ": " << replay.mismatches.front();
  }
  EXPECT_EQ(slurp(dir.path() / "traces" / (records[0].run_id + ".csv")).substr(0, 70),
            std::string("k,residual_norm,depth,restart,coeff_inf_norm,effective_param,elapsed_ns\n0,").substr(0, 70));
}

TEST(Experiment, OutputIsDeterministicAcrossThreadCounts) {
  TempDir a;
  TempDir b;
  b.path();
  const auto e = load_experiment(Config::parse_string(small_linear));
  RunOptions one;
  one.output = a.path() / "one";
  one.threads = 1;
  RunOptions many = one;
  many.output = a.path() / "many";
  many.threads = 4;
  const auto ra = run_experiment(e, one);
  run_experiment(e, many);
  EXPECT_EQ(slurp(one.output / "summary.csv"), slurp(many.output / "summary.csv"));
  for (const auto& r : ra) {
    const auto name = r.run_id + ".csv";
    EXPECT_EQ(without_timing(slurp(one.output / "traces" / name)), without_timing(slurp(many.output / "traces" / name)));
    EXPECT_EQ(slurp(one.output / "diagnostics" / name), slurp(many.output / "diagnostics" / name));
  }
}

TEST(Experiment, SweepGrid) {
  EXPECT_EQ(parse_grid("default").size(), 7u);
  EXPECT_EQ(parse_grid("1e-2,1e-3"), (std::vector<double>{1e-2, 1e-3}));
  EXPECT_THROW(parse_grid("1e-2,abc"), InputError);
  EXPECT_THROW(parse_grid("2.0"), InputError);

  TempDir dir;
  auto e = load_experiment(Config::parse_string(small_linear));
  RunOptions options;
  options.output = dir.path();
  const auto records = run_sweep(e, {1e-2, 1e-4, 1e-6}, options);
  // restarted and adaptive families, three values, four problems, two versions
  EXPECT_EQ(records.size(), 48u);
  const std::string table = slurp(dir.path() / "sweep.csv");
  EXPECT_EQ(table.substr(0, table.find('\n')), sweep_header);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 49);
}

TEST(Csv, NumbersRoundTripExactly) {
  for (double x : {0.1, 1.0 / 3.0, 6.02214076e23, 5e-324, -2.5}) {
    EXPECT_EQ(harness::detail::parse_double(format_double(x)), x);
  }
  EXPECT_TRUE(std::isnan(harness::detail::parse_double(format_double(kNaN))));
}

TEST(Csv, AtomicWriteReplacesContent) {
  TempDir dir;
  const auto p = dir.path() / "nested" / "file.csv";
  write_atomic(p, "a\n");
  write_atomic(p, "b\n");
  EXPECT_EQ(slurp(p), "b\n");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(p.parent_path())) {
    (void)entry;
    ++files;
  }
  EXPECT_EQ(files, 1u);
}

TEST(Certify, CoefficientSuitePasses) {
  const auto report = certify_coefficients(20);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.checks.size(), 20u);
}

TEST(Cli, RunWritesOneTracePerCombination) {
  TempDir dir;
  const auto out = dir.path() / "out";
  const auto cli = run_cli(fmt::format("run {}/linear_n30.toml --output {}", APA_CONFIG_DIR, out.string()), dir.path());
  EXPECT_EQ(cli.status, 0) << cli.err;
  std::size_t traces = 0;
  for (const auto& entry : fs::directory_iterator(out / "traces")) {
    (void)entry;
    ++traces;
  }
  EXPECT_EQ(traces, 3u);
  const auto summary = read_summary(out / "summary.csv");
  EXPECT_EQ(summary.size(), 3u);
}

TEST(Cli, RerunIsByteIdenticalApartFromTiming) {
  TempDir dir;
  const auto cfg = fmt::format("{}/linear_n30.toml", APA_CONFIG_DIR);
  ASSERT_EQ(run_cli(fmt::format("run {} -o {}", cfg, (dir.path() / "a").string()), dir.path()).status, 0);
  ASSERT_EQ(run_cli(fmt::format("run {} -o {}", cfg, (dir.path() / "b").string()), dir.path(), "APA_THREADS=2").status, 0);
  EXPECT_EQ(slurp(dir.path() / "a" / "summary.csv"), slurp(dir.path() / "b" / "summary.csv"));
  for (const auto& entry : fs::directory_iterator(dir.path() / "a" / "traces")) {
    EXPECT_EQ(without_timing(slurp(entry.path())),
              without_timing(slurp(dir.path() / "b" / "traces" / entry.path().filename())));
  }
}

TEST(Cli, MalformedConfigGivesLineNumberedDiagnostic) {
  TempDir dir;
  const auto cfg = dir.path() / "bad.toml";
  write_file(cfg, "[problem]\nkind = \"linear\"\nn == 3\n");
  const auto cli = run_cli(fmt::format("run {}", cfg.string()), dir.path());
  EXPECT_NE(cli.status, 0);
  EXPECT_NE(cli.err.find(cfg.string() + ":3:"), std::string::npos) << cli.err;
}

TEST(Cli, NonConvergedRunIsRecordedAndExitIsZero) {
  TempDir dir;
  const auto cfg = dir.path() / "short.toml";
  write_file(cfg, fmt::format(R"([problem]
kind = "scf"
d = 4
electrons = 2
difficulty = 0.5

[policy]
fixed = [0]

[run]
tol = 1e-14
max_iter = 3
output = "{}"
)",
                              (dir.path() / "out").string()));
  const auto cli = run_cli(fmt::format("run {}", cfg.string()), dir.path());
  EXPECT_EQ(cli.status, 0) << cli.err;
  const auto summary = read_summary(dir.path() / "out" / "summary.csv");
  ASSERT_EQ(summary.size(), 1u);
  EXPECT_FALSE(summary[0].converged);
  EXPECT_EQ(summary[0].iterations, 3u);
}

TEST(Cli, CertifyAndSweepCommands) {
  TempDir dir;
  EXPECT_EQ(run_cli("certify coefficients", dir.path()).status, 0);
  EXPECT_NE(run_cli("certify nonsense", dir.path()).status, 0);
  const auto out = dir.path() / "sweep";
  const auto cli =
      run_cli(fmt::format("sweep {}/linear_n30.toml --param 1e-2,1e-4 -o {}", APA_CONFIG_DIR, out.string()), dir.path());
  EXPECT_EQ(cli.status, 0) << cli.err;
  const std::string table = slurp(out / "sweep.csv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
  EXPECT_NE(run_cli(fmt::format("sweep {}/linear_n30.toml --param 0", APA_CONFIG_DIR), dir.path()).status, 0);
}
