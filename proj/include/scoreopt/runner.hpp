#pragma once

#include "scoreopt/config.hpp"
#include "scoreopt/optimizer.hpp"

#include <functional>
#include <string>
#include <vector>

namespace scoreopt {

// --- single runs ----------------------------------------------------------

struct StageResult {
  std::size_t stage = 0;
  Vec lower, upper;  // native box searched in this stage
  RunResult result;
};

struct RunOutcome {
  RunConfig config;
  std::vector<StageResult> stages;  // completed stages
  bool aborted = false;
  ErrorCode error_code = ErrorCode::invalid_argument;
  std::string error;
  std::size_t abort_stage = 0;
  std::size_t abort_scale = 0;

  /// Final-stage solutions, best first (empty when the first stage aborted).
  const std::vector<FinalSolution>& solutions() const;
};

/// Runs the configured problem, then `refine.stages` restarts on a box of
/// half-width shrink * original half-width around the previous best,
/// clipped to the original box. With a non-empty `out_dir`, writes
/// config.ini, trace.csv, timing.csv, summary.json, plot_objective.csv,
/// plot_trajectory.csv and model.bin there. Aborts are reported in the
/// outcome (and summary.json), not thrown.
RunOutcome execute_run(const RunConfig& config, const std::string& out_dir = {}, const TraceSink& observer = {});

/// Column header and row formatting shared by trace.csv writers.
std::string trace_header(std::size_t dim);
std::string trace_row(std::size_t stage, const TraceRecord& r, const AffineMap& map);

// --- grid oracles ---------------------------------------------------------

/// Argmin of a 1-D objective over `points` equally spaced samples of [lo, hi].
double grid_argmin(const std::function<double(double)>& f, double lo, double hi, std::size_t points);

/// Best sum of radii for two circles, brute force over a `step` grid for
/// both centers (coarse pass at 10 * step, then a `step` pass near the
/// coarse winners).
double circles2_grid_optimum(double step = 1e-3);

// --- bench ----------------------------------------------------------------

struct BenchRow {
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  double objective = 0.0;   // final best objective (native orientation)
  double fitness = 0.0;
  Vec best;                 // native coordinates
  std::size_t solutions = 0;
  std::vector<double> metrics;  // suite-specific, named by BenchReport::metric_names
  std::vector<bool> success;    // one flag per suite criterion
};

struct BenchReport {
  std::string suite;
  std::vector<std::string> metric_names;
  std::vector<std::string> criteria;       // human-readable criterion per success flag
  std::vector<double> required_fraction;   // per criterion
  std::vector<BenchRow> rows;
  std::vector<std::string> oracle_notes;   // pre-run oracle values

  std::size_t successes(std::size_t criterion) const;
  std::size_t required(std::size_t criterion) const;
  bool passed() const;
};

std::vector<std::string> bench_suites();
std::vector<std::uint64_t> default_bench_seeds(const std::string& suite);

/// Runs every seed of the suite's preset (with `overrides` applied), writes
/// per-seed artifacts under out_dir/seed-<k>/ and results.csv in out_dir
/// (when out_dir is non-empty).
BenchReport run_bench(const std::string& suite, const std::vector<std::uint64_t>& seeds, const std::string& out_dir = {},
                      const std::vector<std::string>& overrides = {},
                      const std::function<void(const BenchRow&)>& progress = {});

std::string format_bench_table(const BenchReport& report);
void write_bench_table(const BenchReport& report, const std::string& path);

// --- oracle self-checks ---------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<std::string> oracle_mutations();

/// Cross-oracle suite. `mutation` (one of oracle_mutations(), or empty)
/// deliberately corrupts one identity to show the suite catches it.
std::vector<CheckResult> run_oracle_checks(const std::string& mutation = {},
                                           const std::function<void(const CheckResult&)>& progress = {});

}  // namespace scoreopt
