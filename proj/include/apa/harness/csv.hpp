#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "apa/core.hpp"
#include "apa/trace.hpp"

namespace apa::harness {

inline constexpr const char* trace_header = "k,residual_norm,depth,restart,coeff_inf_norm,effective_param,elapsed_ns";
inline constexpr const char* diagnostics_header = "k,projection_gap,diff_norm";
inline constexpr const char* summary_header = "run_id,converged,iterations,mean_depth,rate,final_residual";

// Shortest representation that reads back to the same double.
inline std::string format_double(double x) { return fmt::format("{}", x); }

inline std::string trace_csv(const Trace& trace) {
  std::string out = std::string(trace_header) + "\n";
  for (const auto& row : trace.rows) {
    out += fmt::format("{},{},{},{},{},{},{}\n", row.k, format_double(row.residual_norm), row.depth,
                       static_cast<int>(row.reset), format_double(row.coeff_inf_norm),
                       format_double(row.effective_param), row.elapsed_ns);
  }
  return out;
}

inline std::string diagnostics_csv(const Trace& trace) {
  std::string out = std::string(diagnostics_header) + "\n";
  for (const auto& row : trace.rows) {
    out += fmt::format("{},{},{}\n", row.k, format_double(row.projection_gap), format_double(row.diff_norm));
  }
  return out;
}

// Write to a sibling temporary file and rename it into place, so readers only
// ever see complete files.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<unsigned long> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.parent_path() /
                   fmt::format(".{}.{}.{}.tmp", path.filename().string(),
                               std::hash<std::thread::id>{}(std::this_thread::get_id()), counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << content;
    out.flush();
    if (!out) throw Error(fmt::format("write to '{}' failed", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double value = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw InputError(fmt::format("bad number '{}' in CSV", s));
  return value;
}

inline std::size_t parse_index(const std::string& s) {
  char* end = nullptr;
  const unsigned long long value = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw InputError(fmt::format("bad integer '{}' in CSV", s));
  return static_cast<std::size_t>(value);
}

inline std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path, const char* header) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path.string()));
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw InputError(fmt::format("'{}' does not start with the expected header", path.string()));
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(split(line));
  }
  return rows;
}

}  // namespace detail

// Reads a trace CSV and, when given, the matching diagnostics CSV back into
// rows suitable for replay_depth_decisions.
inline std::vector<TraceRow> read_trace(const std::filesystem::path& trace_path,
                                        const std::filesystem::path& diagnostics_path = {}) {
  std::vector<TraceRow> rows;
  for (const auto& f : detail::read_table(trace_path, trace_header)) {
    if (f.size() != 7) throw InputError(fmt::format("'{}': expected 7 columns", trace_path.string()));
    TraceRow row;
    row.k = detail::parse_index(f[0]);
    row.residual_norm = detail::parse_double(f[1]);
    row.depth = detail::parse_index(f[2]);
    const auto reset = detail::parse_index(f[3]);
    if (reset > 2) throw InputError(fmt::format("'{}': bad restart code {}", trace_path.string(), reset));
    row.reset = static_cast<ResetKind>(reset);
    row.coeff_inf_norm = detail::parse_double(f[4]);
    row.effective_param = detail::parse_double(f[5]);
    row.elapsed_ns = static_cast<std::int64_t>(detail::parse_double(f[6]));
    rows.push_back(row);
  }
  if (!diagnostics_path.empty()) {
    const auto diag = detail::read_table(diagnostics_path, diagnostics_header);
    if (diag.size() != rows.size()) {
      throw InputError(fmt::format("'{}' has {} rows, trace has {}", diagnostics_path.string(), diag.size(), rows.size()));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (diag[i].size() != 3 || detail::parse_index(diag[i][0]) != rows[i].k) {
        throw InputError(fmt::format("'{}': row {} does not match the trace", diagnostics_path.string(), i));
      }
      rows[i].projection_gap = detail::parse_double(diag[i][1]);
      rows[i].diff_norm = detail::parse_double(diag[i][2]);
    }
  }
  return rows;
}

struct SummaryRow {
  std::string run_id;
  bool converged = false;
  std::size_t iterations = 0;
  double mean_depth = 0.0;
  double rate = kNaN;
  double final_residual = kNaN;
};

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(summary_header) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{}\n", r.run_id, r.converged ? 1 : 0, r.iterations, format_double(r.mean_depth),
                       format_double(r.rate), format_double(r.final_residual));
  }
  return out;
}

inline std::vector<SummaryRow> read_summary(const std::filesystem::path& path) {
  std::vector<SummaryRow> out;
  for (const auto& f : detail::read_table(path, summary_header)) {
    if (f.size() != 6) throw InputError(fmt::format("'{}': expected 6 columns", path.string()));
    out.push_back(SummaryRow{f[0], f[1] == "1", detail::parse_index(f[2]), detail::parse_double(f[3]),
                             detail::parse_double(f[4]), detail::parse_double(f[5])});
  }
  return out;
}

}  // namespace apa::harness
