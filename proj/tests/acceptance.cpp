// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any gated
// criterion fails. Diagnostics (8) report what they measured and only fail
// if they could not run.
#include "scoreopt/config.hpp"
#include "scoreopt/optimizer.hpp"
#include "scoreopt/runner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace scoreopt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  bool gated;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

GaussianMixtureOracle mixture(std::size_t n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, {n});
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  GaussianMixtureOracle g;
  g.means = Mat(n, 2);
  for (Eigen::Index i = 0; i < g.means.size(); ++i) g.means.data()[i] = u(rng);
  g.variances = {0.05, 0.12};
  g.weights = {0.35, 0.65};
  return g;
}

// --- 1: exact identities ----------------------------------------------------

Outcome exact_identities() {
  double rescaled = 0.0, forms = 0.0, at_one = 0.0, anti = 0.0, ratio = 0.0;
  const Interpolant lin = linear_interpolant();
  for (std::size_t n : {1u, 2u, 8u}) {
    const MixtureField field(mixture(n, 1), lin);
    Rng rng = derive_rng(100, {n});
    for (int k = 1; k <= 9; ++k) {
      const double t = 0.1 * k;
      const Mat eps = antithetic_noise(128, n, rng);
      for (Eigen::Index j = 0; j < eps.cols(); j += 2)
        anti = std::max(anti, (eps.col(j) + eps.col(j + 1)).cwiseAbs().maxCoeff());
      const Vec x = Vec::Random(static_cast<Eigen::Index>(n)) * 0.8;
      const Vec g_plain = mc_gradient(field, x, t, eps);
      const Vec g_stable = stable_mc_gradient(field, x, t, eps);
      const double scale = lin.sigma(t) / lin.alpha(t);
      rescaled = std::max(rescaled, (g_stable - scale * g_plain).norm() / g_stable.norm());

      Vec y = Vec::LinSpaced(static_cast<Eigen::Index>(n), -0.4, 0.3);
      ratio = std::max(ratio, rel(inverse_density(lin, x, y, t) / forward_density(lin, y, x, t),
                                  std::pow(lin.alpha(t), static_cast<double>(n))));
    }
    at_one = std::max(at_one, mc_gradient(field, Vec::Constant(static_cast<Eigen::Index>(n), 0.3), 1.0, 64, rng)
                                  .cwiseAbs()
                                  .maxCoeff());
    for (const auto& s : {linear_interpolant(), trigonometric_interpolant()})
      for (double t : {0.05, 0.3, 0.6, 0.95}) {
        const Mat xt = Mat::Random(static_cast<Eigen::Index>(n), 16);
        const Mat v = Mat::Random(static_cast<Eigen::Index>(n), 16) * 2.0;
        const Mat a = score_from_velocity(s, v, xt, t);
        const Mat b = score_from_posterior_mean(s, posterior_mean(s, v, xt, t), xt, t);
        forms = std::max(forms, (a - b).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff());
      }
  }
  const bool pass = rescaled <= 1e-12 && forms <= 1e-9 && at_one == 0.0 && anti == 0.0 && ratio <= 1e-9;
  return {pass, fmt("stable vs rescaled %.2g (1e-12), two score forms %.2g (1e-9), |g(t=1)| %.2g (0), "
                    "antithetic pair sum %.2g (0), kernel ratio %.2g (1e-9)",
                    rescaled, forms, at_one, anti, ratio)};
}

// --- 2: oracle gradients ----------------------------------------------------

Outcome oracle_gradients() {
  const Interpolant s = linear_interpolant();
  // Gaussian fitness: closed form, antithetic batch of 128.
  double gauss = 0.0;
  {
    const double mu = 0.2, var = 0.25;
    GaussianMixtureOracle g;
    g.means = Mat::Constant(3, 1, mu);
    g.variances = {var};
    g.weights = {1.0};
    const MixtureField field(g, s);
    Rng rng(201);
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const double a = s.alpha(t), sg = s.sigma(t);
      Vec x(3);
      x << 0.9, -0.4, 0.05;
      const Vec est = mc_gradient(field, x, t, 128, rng);
      for (int d = 0; d < 3; ++d) gauss = std::max(gauss, rel(est[d], -a * a * (x[d] - mu) / (a * a * var + sg * sg)));
    }
  }
  // Two-component mixture: MC at 4096 vs Gauss-Hermite of the analytic score.
  double mix = 0.0, gh_vs_trap = 0.0;
  {
    GaussianMixtureOracle g;
    g.means = Mat(1, 2);
    g.means << -0.5, 0.4;
    g.variances = {0.04, 0.09};
    g.weights = {0.4, 0.6};
    const MixtureField field(g, s);
    const GaussHermite gh = gauss_hermite(64);
    Rng rng(202);
    for (double t : {0.2, 0.5, 0.8})
      for (double x0 : {-0.8, 0.9}) {
        const double a = s.alpha(t), sg = s.sigma(t);
        const auto score = [&](double e) { return analytic_mixture_score(g, s, Vec::Constant(1, a * x0 + sg * e), t)[0]; };
        double quad = 0.0;
        for (std::size_t k = 0; k < gh.nodes.size(); ++k) quad += gh.weights[k] * score(std::sqrt(2.0) * gh.nodes[k]);
        quad *= a / std::sqrt(std::numbers::pi);
        // independent check of the rule: dense trapezoid over eps in [-12, 12]
        double trap = 0.0;
        const int m = 48000;
        const double h = 24.0 / m;
        for (int i = 0; i <= m; ++i) {
          const double e = -12.0 + i * h;
          trap += (i == 0 || i == m ? 0.5 : 1.0) * score(e) * std::exp(-0.5 * e * e);
        }
        trap *= a * h / std::sqrt(2.0 * std::numbers::pi);
        gh_vs_trap = std::max(gh_vs_trap, rel(quad, trap));
        mix = std::max(mix, rel(mc_gradient(field, Vec::Constant(1, x0), t, 4096, rng)[0], quad));
      }
  }
  // 1-D fractal: MC with the quadrature score vs central differences of log P.
  // 16384 samples: at 4096 the spread alone is ~0.35% at t=0.5.
  double frac = 0.0;
  std::string worst;
  {
    const QuadratureOracle q([](double u) { return std::exp(-2.0 * fractal_objective(0.5 * (u + 1.0))); }, -1.0, 1.0, s);
    Rng rng(203);
    const double h = 1e-4;
    for (auto [x0, t] : {std::pair{-0.6, 0.5}, std::pair{0.0, 0.5}, std::pair{0.6, 0.5}, std::pair{-0.3, 0.7},
                         std::pair{0.0, 0.7}, std::pair{0.6, 0.7}}) {
      const double fd = (quadrature_log_objective(q, x0 + h, t) - quadrature_log_objective(q, x0 - h, t)) / (2 * h);
      const double e = rel(mc_gradient(q, Vec::Constant(1, x0), t, 16384, rng)[0], fd);
      if (e > frac) worst = fmt(" at x=%.1f t=%.1f", x0, t);
      frac = std::max(frac, e);
    }
  }
  const bool pass = gauss <= 1e-9 && mix <= 0.05 && frac <= 0.01 && gh_vs_trap <= 1e-8;
  return {pass, fmt("gaussian %.2g (1e-9), mixture vs Gauss-Hermite %.3g (0.05), fractal vs FD at 16384 samples %.3g%s (0.01); "
                    "Gauss-Hermite vs trapezoid %.2g",
                    gauss, mix, frac, worst.c_str(), gh_vs_trap)};
}

// --- 3: learning ------------------------------------------------------------

Outcome learning() {
  const Interpolant s = linear_interpolant();
  GaussianMixtureOracle g;
  g.means = Mat(1, 2);
  g.means << -0.5, 0.5;
  g.variances = {0.09, 0.09};
  g.weights = {0.5, 0.5};
  const MixtureField oracle(g, s);

  // Fitness-weighted grid pool: the mixture density on a fine grid.
  const int n = 1 << 14;
  Mat pts(1, n);
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double x = -2.0 + 4.0 * (i + 0.5) / n;
    pts(0, i) = x;
    w[i] = std::exp(-0.5 * (x - 0.5) * (x - 0.5) / 0.09) + std::exp(-0.5 * (x + 0.5) * (x + 0.5) / 0.09);
  }
  const FitnessPool pool = make_weighted_pool(pts, w);

  TrainConfig cfg;
  cfg.steps = 8000;
  cfg.batch = 1024;
  cfg.lr = 2e-3;
  cfg.lr_final = 1e-5;
  cfg.arch.dim = 1;
  cfg.arch.hidden = {64, 64};
  cfg.arch.time_embed = 16;

  std::string detail;
  bool pass = true;
  double grad_err = 0.0;
  for (double t : {0.8, 0.4, 0.1}) {
    const double a = s.alpha(t), sg = s.sigma(t);
    const double sd = std::sqrt(a * a * (0.25 + 0.09) + sg * sg);
    int good = 0;
    std::vector<double> rmses;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      Rng rng = derive_rng(seed, {3, static_cast<std::uint64_t>(t * 1000)});
      const TrainResult r = train_flow_matching(pool, t, cfg, std::nullopt, s, rng);
      const ModelField field(r.model);
      Mat xs(1, 201);
      for (int i = 0; i < 201; ++i) xs(0, i) = -2.0 * sd + 4.0 * sd * i / 200.0;
      const double rmse = std::sqrt((field.score(xs, t) - oracle.score(xs, t)).array().square().mean());
      rmses.push_back(rmse);
      good += rmse < 0.1;
      if (seed == 1 && t == 0.1) {
        GradientCheckBatch batch;
        batch.x_t = Mat::Random(1, 32);
        batch.t = t;
        batch.target = Mat::Random(1, 32);
        batch.weights = Mat::Ones(1, 32);
        grad_err = parameter_gradient_check(r.model, batch, rng);
      }
    }
    std::sort(rmses.begin(), rmses.end());
    detail += fmt("t=%.1f: %d/5 under 0.1 (median %.3f, worst %.3f); ", t, good, rmses[2], rmses[4]);
    pass = pass && good >= 4;
  }
  pass = pass && grad_err < 1e-4;
  detail += fmt("gradient check %.2g (1e-4)", grad_err);
  return {pass, detail};
}

// --- 4-8: bench suites ------------------------------------------------------

Outcome bench(const std::string& suite, const fs::path& workdir) {
  const BenchReport rep = run_bench(suite, default_bench_seeds(suite), (workdir / suite).string(), {},
                                    [&](const BenchRow& row) {
                                      std::printf("    %s seed %llu: %s\n", suite.c_str(),
                                                  static_cast<unsigned long long>(row.seed),
                                                  row.completed ? fmt("objective %.6g", row.objective).c_str()
                                                                : ("aborted: " + row.error).c_str());
                                      std::fflush(stdout);
                                    });
  std::string detail;
  for (const auto& note : rep.oracle_notes) detail += note + "; ";
  for (std::size_t c = 0; c < rep.criteria.size(); ++c)
    detail += fmt("%s: %zu/%zu (need %zu); ", rep.criteria[c].c_str(), rep.successes(c), rep.rows.size(), rep.required(c));
  detail += "table in " + (workdir / suite / "results.csv").string();
  return {rep.passed(), detail};
}

Outcome f1_diagnostic(const fs::path& workdir) {
  const BenchReport rep = run_bench("f1-2d", default_bench_seeds("f1-2d"), (workdir / "f1-2d").string());
  std::vector<double> learned, exact;
  bool ran = true;
  for (const auto& row : rep.rows) {
    ran = ran && row.completed;
    if (row.completed) {
      learned.push_back(row.metrics[0]);
      exact.push_back(row.metrics[1]);
    }
  }
  std::sort(learned.begin(), learned.end());
  std::sort(exact.begin(), exact.end());
  const auto med = [](const std::vector<double>& v) { return v.empty() ? 0.0 : v[v.size() / 2]; };
  const bool learned_shows = med(learned) >= 1e3, exact_shows = med(exact) >= 1e3;
  return {ran, fmt("diagnostic only. median |g_2|/|g_1| at early scales: learned trace %.3g (%s), closed-form "
                   "density at the run's temperatures %.3g (%s)",
                   med(learned), learned_shows ? "pathology visible" : "masked by model noise", med(exact),
                   exact_shows ? "pathology visible" : "not visible")};
}

// --- 9: dimensional scaling -------------------------------------------------

Outcome dimension_scaling() {
  const Interpolant s = linear_interpolant();
  const std::size_t samples = 10000;
  const double t = 0.5, a = s.alpha(t), sg = s.sigma(t);
  std::vector<double> homo, score;
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    const Vec x = Vec::Constant(static_cast<Eigen::Index>(n), 0.5);
    Rng rng = derive_rng(900, {n});
    // Homotopy estimator on f(y) = |y|^2, true gradient 2x.
    const HomotopyEstimate h =
        gaussian_homotopy_gradient([](const Vec& y) { return y.squaredNorm(); }, x, 0.5, samples, rng);
    homo.push_back(std::sqrt(h.variance.sum()) / (2.0 * x.norm()));
    // Score estimator on the matching fitness density exp(-|y|^2), plain
    // Gaussian noise so the error is not cancelled by pairing.
    GaussianMixtureOracle g;
    g.means = Mat::Zero(static_cast<Eigen::Index>(n), 1);
    g.variances = {0.5};
    g.weights = {1.0};
    const MixtureField field(g, s);
    Mat eps(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(samples));
    std::normal_distribution<double> normal;
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = normal(rng);
    const Mat terms = a * field.score((a * x).replicate(1, eps.cols()) + sg * eps, t);
    const Vec mean = terms.rowwise().mean();
    const double var = (terms.colwise() - mean).array().square().sum() / (static_cast<double>(samples) - 1.0);
    const Vec exact = -a * a * x / (a * a * 0.5 + sg * sg);
    score.push_back(std::sqrt(var / static_cast<double>(samples)) / exact.norm());
  }
  bool increasing = true;
  for (std::size_t i = 1; i < homo.size(); ++i) increasing = increasing && homo[i] > homo[i - 1];
  const auto [lo, hi] = std::minmax_element(score.begin(), score.end());
  const bool flat = *hi / *lo <= 1.25;
  return {increasing && flat,
          fmt("relative standard error at 1e4 samples, n = 1,2,4,8: homotopy %.4f %.4f %.4f %.4f (%s), "
              "score estimator %.4f %.4f %.4f %.4f (max/min %.3f, flat within 1.25)",
              homo[0], homo[1], homo[2], homo[3], increasing ? "increasing" : "NOT increasing", score[0], score[1],
              score[2], score[3], *hi / *lo)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = "acceptance-runs";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Directory for bench artifacts");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const fs::path wd(workdir);
  fs::create_directories(wd);

  const std::vector<Criterion> all = {
      {1, "exact identities", 10, true, exact_identities},
      {2, "oracle gradients", 60, true, oracle_gradients},
      {3, "learned score vs analytic mixture", 600, true, learning},
      {4, "fractal, 10 seeds", 1800, true, [&] { return bench("fractal", wd); }},
      {5, "multimodal fractal with exploration, 10 seeds", 2700, true, [&] { return bench("fractal-mm", wd); }},
      {6, "F4 n=2 with refinement, 10 seeds", 2700, true, [&] { return bench("f4-2d", wd); }},
      {7, "circle packing n=2 vs grid oracle", 3600, true, [&] { return bench("circles-2", wd); }},
      {8, "F1 scale-difference diagnostic", 3600, false, [&] { return f1_diagnostic(wd); }},
      {9, "homotopy vs score estimator over dimension", 60, true, dimension_scaling},
  };

  const std::set<int> pick(only.begin(), only.end());
  std::ofstream report(wd / "report.txt");
  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    std::printf("--- criterion %d: %s\n", c.id, c.name);
    std::fflush(stdout);
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    const std::string line = fmt("[%s] criterion %d %s: ", pass ? "PASS" : "FAIL", c.id, c.name) + o.detail +
                             fmt("; runtime %.1f s (budget %.0f s%s)", secs, c.budget_s, in_time ? "" : ", EXCEEDED");
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    report << line << '\n' << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
