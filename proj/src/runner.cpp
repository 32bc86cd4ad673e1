#include "scoreopt/runner.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace scoreopt {

namespace fs = std::filesystem;
using json = nlohmann::json;

const std::vector<FinalSolution>& RunOutcome::solutions() const {
  static const std::vector<FinalSolution> none;
  return stages.empty() ? none : stages.back().result.solutions;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json solution_json(const FinalSolution& s) {
  return {{"native", vec_json(s.native)},
          {"normalized", vec_json(s.normalized)},
          {"objective", finite_or_null(s.objective)},
          {"fitness", finite_or_null(s.fitness)}};
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  return out;
}

std::uint64_t stage_seed(std::uint64_t seed, std::size_t stage) {
  return stage == 0 ? seed : splitmix64(seed ^ (0x5bd1e995ULL * static_cast<std::uint64_t>(stage)));
}

struct Artifacts {
  std::ofstream trace, timing, trajectory;
  std::size_t dim = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  Artifacts(const fs::path& dir, std::size_t n) : dim(n) {
    trace = open_out(dir / "trace.csv");
    timing = open_out(dir / "timing.csv");
    trajectory = open_out(dir / "plot_trajectory.csv");
    trace << trace_header(n) << '\n' << std::flush;
    timing << "stage,scale,phase,step,solution,wall_seconds\n" << std::flush;
    trajectory << "stage,scale,t,solution,fitness,objective";
    for (std::size_t i = 0; i < n; ++i) trajectory << ",x" << i;
    trajectory << '\n' << std::flush;
  }

  void record(std::size_t stage, const TraceRecord& r, const Problem& problem) {
    const AffineMap map = problem.map();
    trace << trace_row(stage, r, map) << '\n' << std::flush;
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    timing << stage << ',' << r.scale << ',' << to_string(r.phase) << ',' << r.step << ',' << r.solution << ','
           << num(wall) << '\n'
           << std::flush;
    if (r.x.size() > 0 && (r.phase == Phase::ascend || r.phase == Phase::init)) {
      const Vec native = map.denormalize(r.x);
      trajectory << stage << ',' << r.scale << ',' << num(r.t) << ',' << r.solution << ',' << num(r.fitness) << ','
                 << num(problem.objective(native));
      for (Eigen::Index i = 0; i < native.size(); ++i) trajectory << ',' << num(native[i]);
      trajectory << '\n' << std::flush;
    }
  }
};

void write_objective_plot(const fs::path& path, const Problem& problem, const Vec& through) {
  std::ofstream out = open_out(path);
  out << "axis,x,objective\n";
  constexpr int kPoints = 1001;
  for (std::size_t axis = 0; axis < problem.dim; ++axis) {
    Vec x = through;
    const auto a = static_cast<Eigen::Index>(axis);
    for (int k = 0; k < kPoints; ++k) {
      x[a] = problem.lower[a] + (problem.upper[a] - problem.lower[a]) * k / (kPoints - 1);
      out << axis << ',' << num(x[a]) << ',' << num(problem.objective(x)) << '\n';
    }
  }
}

json scale_json(const ScaleSummary& s) {
  json steps = json::array();
  for (const auto& a : s.ascents) steps.push_back(a.steps());
  return {{"scale", s.scale}, {"t", s.t},           {"local", s.local},
          {"prior_sd", s.prior_sd}, {"solutions", s.solutions}, {"ascent_steps", steps}};
}

}  // namespace

std::string trace_header(std::size_t dim) {
  std::string h = "stage,scale,t,phase,step,solution,fitness,grad_norm,step_norm,loss,temp,feasible,merged,pruned,spawned,solutions";
  for (std::size_t i = 0; i < dim; ++i) h += ",x" + std::to_string(i);
  for (std::size_t i = 0; i < dim; ++i) h += ",g" + std::to_string(i);
  return h;
}

std::string trace_row(std::size_t stage, const TraceRecord& r, const AffineMap& map) {
  std::ostringstream out;
  out << stage << ',' << r.scale << ',' << num(r.t) << ',' << to_string(r.phase) << ',' << r.step << ','
      << r.solution << ',' << num(r.fitness) << ',' << num(r.grad_norm) << ',' << num(r.step_norm) << ','
      << num(r.loss) << ',' << num(r.temp) << ',' << num(r.feasible) << ',';
  if (r.phase == Phase::explore)
    out << r.explore.merged << ',' << r.explore.pruned << ',' << r.explore.spawned << ',' << r.solutions;
  else
    out << ",,,";
  const auto n = map.scale().size();
  const Vec native = r.x.size() == n ? map.denormalize(r.x) : Vec();
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << (native.size() ? num(native[i]) : "");
  for (Eigen::Index i = 0; i < n; ++i) out << ',' << (r.grad.size() == n ? num(r.grad[i]) : "");
  return out.str();
}

RunOutcome execute_run(const RunConfig& config, const std::string& out_dir, const TraceSink& observer) {
  RunOutcome outcome;
  outcome.config = config;
  const Problem base = make_problem(config.problem, config.params);

  std::optional<Artifacts> art;
  fs::path dir;
  if (!out_dir.empty()) {
    dir = out_dir;
    fs::create_directories(dir);
    open_out(dir / "config.ini") << config.to_text() << std::flush;
    art.emplace(dir, base.dim);
  }

  Vec lower = base.lower, upper = base.upper;
  for (std::size_t stage = 0; stage <= config.refine.stages; ++stage) {
    const Problem problem = stage == 0 ? base : with_box(base, lower, upper);
    RunSettings settings = config.settings;
    settings.seed = stage_seed(config.settings.seed, stage);
    const TraceSink sink = [&](const TraceRecord& r) {
      if (art) art->record(stage, r, problem);
      if (observer) observer(r);
    };
    try {
      StageResult sr;
      sr.stage = stage;
      sr.lower = lower;
      sr.upper = upper;
      sr.result = run_optimization(problem, settings, sink);
      outcome.stages.push_back(std::move(sr));
    } catch (const RunAborted& e) {
      outcome.aborted = true;
      outcome.error_code = e.code();
      outcome.error = e.what();
      outcome.abort_stage = stage;
      outcome.abort_scale = e.scale();
      break;
    } catch (const Error& e) {
      outcome.aborted = true;
      outcome.error_code = e.code();
      outcome.error = e.what();
      outcome.abort_stage = stage;
      break;
    }
    const auto& sols = outcome.stages.back().result.solutions;
    if (sols.empty()) break;
    const Vec half = config.refine.shrink * 0.5 * (base.upper - base.lower);
    lower = (sols.front().native - half).cwiseMax(base.lower);
    upper = (sols.front().native + half).cwiseMin(base.upper);
  }

  if (art) {
    json summary;
    summary["format"] = "scoreopt-summary";
    summary["format_version"] = kFormatVersion;
    summary["status"] = outcome.aborted ? "aborted" : "ok";
    if (outcome.aborted)
      summary["error"] = {{"code", to_string(outcome.error_code)},
                          {"message", outcome.error},
                          {"stage", outcome.abort_stage},
                          {"scale", outcome.abort_scale}};
    summary["problem"] = {{"id", base.id},
                          {"dim", base.dim},
                          {"sense", base.sense == Sense::minimize ? "minimize" : "maximize"},
                          {"lower", vec_json(base.lower)},
                          {"upper", vec_json(base.upper)}};
    summary["seed"] = config.settings.seed;
    summary["config_hash"] = config.hash();
    summary["config"] = config.to_text();
    json sols = json::array();
    for (const auto& s : outcome.solutions()) sols.push_back(solution_json(s));
    summary["solutions"] = sols;
    summary["best"] = outcome.solutions().empty() ? json(nullptr) : solution_json(outcome.solutions().front());
    json stages = json::array();
    for (const auto& st : outcome.stages) {
      json scales = json::array();
      for (const auto& s : st.result.scales) scales.push_back(scale_json(s));
      json ss = json::array();
      for (const auto& s : st.result.solutions) ss.push_back(solution_json(s));
      stages.push_back({{"stage", st.stage},
                        {"seed", stage_seed(config.settings.seed, st.stage)},
                        {"lower", vec_json(st.lower)},
                        {"upper", vec_json(st.upper)},
                        {"gamma", st.result.schedule.gamma},
                        {"solutions", ss},
                        {"scales", scales}});
    }
    summary["stages"] = stages;
    open_out(dir / "summary.json") << summary.dump(2) << '\n' << std::flush;

    const Vec through = outcome.solutions().empty() ? Vec(0.5 * (base.lower + base.upper)) : outcome.solutions().front().native;
    write_objective_plot(dir / "plot_objective.csv", base, through);
    if (!outcome.stages.empty() && outcome.stages.back().result.final_model)
      save_checkpoint(*outcome.stages.back().result.final_model, (dir / "model.bin").string());
  }
  return outcome;
}

// --- grid oracles ---------------------------------------------------------

double grid_argmin(const std::function<double(double)>& f, double lo, double hi, std::size_t points) {
  if (points < 2) throw Error(ErrorCode::invalid_argument, "grid needs at least two points");
  double best = std::numeric_limits<double>::infinity(), arg = lo;
  for (std::size_t k = 0; k < points; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
    const double v = f(x);
    if (v < best) {
      best = v;
      arg = x;
    }
  }
  return arg;
}

namespace {

// Two circles: the radii LP has the closed form min(w1 + w2, d), with w_i
// the wall clearance of center i and d the center distance.
double two_circle_sum(double x1, double y1, double x2, double y2) {
  const double w1 = std::min({x1, y1, 1.0 - x1, 1.0 - y1});
  const double w2 = std::min({x2, y2, 1.0 - x2, 1.0 - y2});
  return std::min(w1 + w2, std::hypot(x1 - x2, y1 - y2));
}

}  // namespace

double circles2_grid_optimum(double step) {
  const double coarse = 10.0 * step;
  const int nc = static_cast<int>(std::lround(1.0 / coarse));
  struct Cand {
    double v;
    int a, b, c, d;
  };
  std::vector<Cand> top;
  for (int a = 0; a <= nc; ++a)
    for (int b = 0; b <= nc; ++b)
      for (int c = 0; c <= nc; ++c)
        for (int d = 0; d <= nc; ++d) {
          const double v = two_circle_sum(a * coarse, b * coarse, c * coarse, d * coarse);
          if (top.size() < 16 || v > top.back().v) {
            top.push_back({v, a, b, c, d});
            std::sort(top.begin(), top.end(), [](const Cand& l, const Cand& r) { return l.v > r.v; });
            if (top.size() > 16) top.pop_back();
          }
        }
  double best = top.front().v;
  const int span = 10;
  const int nf = static_cast<int>(std::lround(1.0 / step));
  for (const auto& c0 : top) {
    const int base[4] = {c0.a * 10, c0.b * 10, c0.c * 10, c0.d * 10};
    for (int a = -span; a <= span; ++a)
      for (int b = -span; b <= span; ++b)
        for (int c = -span; c <= span; ++c)
          for (int d = -span; d <= span; ++d) {
            const int ia = base[0] + a, ib = base[1] + b, ic = base[2] + c, id = base[3] + d;
            if (std::min({ia, ib, ic, id}) < 0 || std::max({ia, ib, ic, id}) > nf) continue;
            best = std::max(best, two_circle_sum(ia * step, ib * step, ic * step, id * step));
          }
  }
  return best;
}

// --- bench ----------------------------------------------------------------

std::size_t BenchReport::successes(std::size_t criterion) const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const BenchRow& r) {
    return criterion < r.success.size() && r.success[criterion];
  }));
}

std::size_t BenchReport::required(std::size_t criterion) const {
  return static_cast<std::size_t>(std::ceil(required_fraction[criterion] * static_cast<double>(rows.size()) - 1e-9));
}

bool BenchReport::passed() const {
  for (std::size_t c = 0; c < criteria.size(); ++c)
    if (successes(c) < required(c)) return false;
  return true;
}

namespace {

struct Suite {
  std::string name;
  std::string preset;
  std::size_t seeds;
  std::vector<std::string> metrics;
  std::vector<std::string> criteria;
  std::vector<double> fractions;
  // Computes oracles once; returns the per-seed evaluator.
  std::function<std::function<void(const RunOutcome&, BenchRow&)>(BenchReport&)> prepare;
};

double early_gradient_ratio(const std::vector<TraceRecord>& trace, std::size_t max_scale) {
  // First ascent step of each early scale: |g_large| / |g_small|.
  std::vector<double> ratios;
  for (const auto& r : trace)
    if (r.phase == Phase::ascend && r.step == 0 && r.scale <= max_scale && r.grad.size() >= 2) {
      const double small = std::abs(r.grad[0]);
      const double large = std::abs(r.grad[1]);
      ratios.push_back(small > 0.0 ? large / small : std::numeric_limits<double>::infinity());
    }
  if (ratios.empty()) return 0.0;
  std::sort(ratios.begin(), ratios.end());
  return ratios[ratios.size() / 2];
}

// Same ratio for the exact gradient of the transformed fitness density
// exp(-f / temp) of F1, per unit offset in each working coordinate. That
// density is Gaussian with variance temp / (2 c_i w_i^2), c = (1, 1e6) and
// w_i the native half-width, so the gradient has the closed form
// -alpha^2 u / (alpha^2 v + sigma^2). Uses each early scale's pool temperature.
double f1_oracle_gradient_ratio(const std::vector<TraceRecord>& trace, const Problem& problem,
                                const Interpolant& s, std::size_t max_scale) {
  const Vec half = 0.5 * (problem.upper - problem.lower);
  std::vector<double> ratios;
  for (const auto& r : trace)
    if (r.phase == Phase::pool && r.scale >= 1 && r.scale <= max_scale && std::isfinite(r.temp)) {
      const auto p = s.at(r.t);
      const auto gain = [&](double c, double w) {
        const double v = r.temp / (2.0 * c * w * w);
        return p.alpha * p.alpha / (p.alpha * p.alpha * v + p.sigma * p.sigma);
      };
      ratios.push_back(gain(1e6, half[1]) / gain(1.0, half[0]));
    }
  if (ratios.empty()) return 0.0;
  std::sort(ratios.begin(), ratios.end());
  return ratios[ratios.size() / 2];
}

const std::vector<Suite>& suites() {
  static const std::vector<Suite> all = {
      {"fractal", "fractal", 10, {"abs_error"}, {"|x - x_opt| < 0.02"}, {0.9},
       [](BenchReport& rep) {
         const double x_opt = grid_argmin([](double x) { return fractal_objective(x); }, 0.0, 1.0, 1u << 20);
         rep.oracle_notes.push_back("grid x_opt = " + num(x_opt) + " (2^20 points)");
         return std::function<void(const RunOutcome&, BenchRow&)>([x_opt](const RunOutcome& o, BenchRow& row) {
           const double err = std::abs(o.solutions().front().native[0] - x_opt);
           row.metrics = {err};
           row.success = {err < 0.02};
         });
       }},
      {"fractal-mm", "fractal-mm", 10, {"error_left", "error_right"}, {"both optima within 0.02"}, {0.8},
       [](BenchReport& rep) {
         const auto g = [](double x) { return multimodal_fractal(x); };
         const double a = grid_argmin(g, 0.0, 1.0, 1u << 20);
         const double left = std::min(a, 1.0 - a), right = std::max(a, 1.0 - a);
         rep.oracle_notes.push_back("grid optima = " + num(left) + ", " + num(right) + " (2^20 points)");
         return std::function<void(const RunOutcome&, BenchRow&)>([left, right](const RunOutcome& o, BenchRow& row) {
           double el = std::numeric_limits<double>::infinity(), er = el;
           for (const auto& s : o.solutions()) {
             el = std::min(el, std::abs(s.native[0] - left));
             er = std::min(er, std::abs(s.native[0] - right));
           }
           row.metrics = {el, er};
           row.success = {el < 0.02 && er < 0.02};
         });
       }},
      {"f4-2d", "f4-2d", 10, {"stage1_objective", "final_objective", "final_inf_norm"},
       {"stage-1 objective < 1.0", "refined |x|_inf < 0.05"}, {0.7, 0.7},
       [](BenchReport& rep) {
         rep.oracle_notes.push_back("global minimum 0 at the origin (closed form)");
         return std::function<void(const RunOutcome&, BenchRow&)>([](const RunOutcome& o, BenchRow& row) {
           const double first = o.stages.front().result.solutions.front().objective;
           const auto& best = o.solutions().front();
           const double inf = best.native.lpNorm<Eigen::Infinity>();
           row.metrics = {first, best.objective, inf};
           row.success = {first < 1.0, o.stages.size() > 1 && inf < 0.05};
         });
       }},
      {"circles-2", "circles-2", 3, {"ratio_to_oracle"}, {"LP fitness within 1% of the grid optimum"}, {1.0},
       [](BenchReport& rep) {
         const double best = circles2_grid_optimum(1e-3);
         rep.oracle_notes.push_back("grid optimum sum of radii = " + num(best) + " (step 1e-3)");
         return std::function<void(const RunOutcome&, BenchRow&)>([best](const RunOutcome& o, BenchRow& row) {
           const double ratio = o.solutions().front().fitness / best;
           row.metrics = {ratio};
           row.success = {ratio >= 0.99};
         });
       }},
      {"f1-2d", "f1-2d", 3, {"early_gradient_ratio", "oracle_gradient_ratio"},
       {"diagnostic: learned |g_2| / |g_1| >= 1e3 at early scales",
        "diagnostic: closed-form |g_2| / |g_1| >= 1e3 at early scales"},
       {0.0, 0.0},
       [](BenchReport&) {
         return std::function<void(const RunOutcome&, BenchRow&)>([](const RunOutcome&, BenchRow&) {});
       }},
  };
  return all;
}

const Suite& find_suite(const std::string& name) {
  for (const auto& s : suites())
    if (s.name == name) return s;
  throw Error(ErrorCode::config, "unknown bench suite '" + name + "'");
}

}  // namespace

std::vector<std::string> bench_suites() {
  std::vector<std::string> names;
  for (const auto& s : suites()) names.push_back(s.name);
  return names;
}

std::vector<std::uint64_t> default_bench_seeds(const std::string& suite) {
  std::vector<std::uint64_t> seeds(find_suite(suite).seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i + 1;
  return seeds;
}

BenchReport run_bench(const std::string& suite_name, const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                      const std::vector<std::string>& overrides, const std::function<void(const BenchRow&)>& progress) {
  const Suite& suite = find_suite(suite_name);
  BenchReport rep;
  rep.suite = suite.name;
  rep.metric_names = suite.metrics;
  rep.criteria = suite.criteria;
  rep.required_fraction = suite.fractions;

  ConfigMap base = load_config("preset:" + suite.preset);
  for (const auto& o : overrides) apply_override(base, o);
  resolve_config(base, false);  // surface config errors before any oracle work
  if (seeds.empty()) {
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      write_bench_table(rep, (fs::path(out_dir) / "results.csv").string());
    }
    return rep;
  }
  const auto evaluate = suite.prepare(rep);

  for (std::uint64_t seed : seeds) {
    ConfigMap map = base;
    apply_override(map, "run.seed=" + std::to_string(seed));
    const RunConfig cfg = resolve_config(map);
    BenchRow row;
    row.seed = seed;
    std::vector<TraceRecord> trace;
    const bool keep_trace = suite.name == "f1-2d";
    const TraceSink observer = [&](const TraceRecord& r) {
      if (keep_trace && ((r.phase == Phase::ascend && r.step == 0) || r.phase == Phase::pool)) trace.push_back(r);
    };
    const std::string dir = out_dir.empty() ? std::string() : (fs::path(out_dir) / ("seed-" + std::to_string(seed))).string();
    const RunOutcome o = execute_run(cfg, dir, observer);
    row.success.assign(suite.criteria.size(), false);
    if (o.aborted || o.solutions().empty()) {
      row.error = o.aborted ? o.error : "no solutions";
    } else {
      row.completed = true;
      const auto& best = o.solutions().front();
      row.objective = best.objective;
      row.fitness = best.fitness;
      row.best = best.native;
      row.solutions = o.solutions().size();
      if (keep_trace) {
        const double ratio = early_gradient_ratio(trace, 5);
        const double oracle = f1_oracle_gradient_ratio(trace, make_problem(cfg.problem, cfg.params),
                                                       interpolant_by_name(cfg.settings.interpolant), 5);
        row.metrics = {ratio, oracle};
        row.success = {ratio >= 1e3, oracle >= 1e3};
      } else {
        evaluate(o, row);
      }
    }
    if (progress) progress(row);
    rep.rows.push_back(std::move(row));
  }
  if (!out_dir.empty()) write_bench_table(rep, (fs::path(out_dir) / "results.csv").string());
  return rep;
}

void write_bench_table(const BenchReport& report, const std::string& path) {
  open_out(path) << format_bench_table(report) << std::flush;
}

std::string format_bench_table(const BenchReport& report) {
  std::ostringstream out;
  out << "# suite " << report.suite << ", format v" << kFormatVersion << "\n";
  for (const auto& n : report.oracle_notes) out << "# oracle: " << n << "\n";
  for (std::size_t c = 0; c < report.criteria.size(); ++c)
    out << "# criterion " << c << ": " << report.criteria[c] << " -- " << report.successes(c) << "/"
        << report.rows.size() << " (required " << report.required(c) << ")\n";
  out << "seed,status,objective,fitness,solutions";
  std::size_t dim = 0;
  for (const auto& r : report.rows) dim = std::max<std::size_t>(dim, static_cast<std::size_t>(r.best.size()));
  for (std::size_t i = 0; i < dim; ++i) out << ",x" << i;
  for (const auto& m : report.metric_names) out << ',' << m;
  for (std::size_t c = 0; c < report.criteria.size(); ++c) out << ",success" << c;
  out << "\n";
  for (const auto& r : report.rows) {
    out << r.seed << ',' << (r.completed ? "ok" : "aborted") << ',' << (r.completed ? num(r.objective) : "") << ','
        << (r.completed ? num(r.fitness) : "") << ',' << r.solutions;
    for (std::size_t i = 0; i < dim; ++i)
      out << ',' << (static_cast<Eigen::Index>(i) < r.best.size() ? num(r.best[static_cast<Eigen::Index>(i)]) : "");
    for (std::size_t m = 0; m < report.metric_names.size(); ++m)
      out << ',' << (m < r.metrics.size() ? num(r.metrics[m]) : "");
    for (std::size_t c = 0; c < report.criteria.size(); ++c) out << ',' << (r.success[c] ? 1 : 0);
    out << "\n";
  }
  return out.str();
}

}  // namespace scoreopt
