#include "scoreopt/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace scoreopt {

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

double rel_err(const Mat& a, const Mat& b) {
  const double scale = std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), 1e-300});
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

GaussianMixtureOracle two_modes(std::size_t dim) {
  GaussianMixtureOracle g;
  g.means = Mat(static_cast<Eigen::Index>(dim), 2);
  g.means.col(0).setConstant(-0.5);
  g.means.col(1).setConstant(0.4);
  g.variances = {0.04, 0.09};
  g.weights = {0.35, 0.65};
  return g;
}

const double kTimes[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

CheckResult check_score_forms(bool mutate) {
  const Interpolant s = linear_interpolant();
  Rng rng = derive_rng(11, {});
  double worst = 0.0;
  for (double t : kTimes) {
    const Mat x_t = gaussian(3, 16, rng), v = gaussian(3, 16, rng);
    const Mat direct = score_from_velocity(s, v, x_t, t);
    Mat via_mean = score_from_posterior_mean(s, posterior_mean(s, v, x_t, t), x_t, t);
    if (mutate) via_mean = -via_mean;
    worst = std::max(worst, rel_err(direct, via_mean));
  }
  return {"score-forms", worst < 1e-9, fmt("max rel err %.3g (tol 1e-9)", worst)};
}

CheckResult check_velocity_roundtrip() {
  const Interpolant s = trigonometric_interpolant();
  Rng rng = derive_rng(12, {});
  double worst = 0.0;
  for (double t : kTimes) {
    const Mat x_t = gaussian(2, 16, rng), v = gaussian(2, 16, rng);
    const Mat back = velocity_from_posterior_mean(s, posterior_mean(s, v, x_t, t), x_t, t);
    worst = std::max(worst, rel_err(v, back));
  }
  return {"posterior-mean-roundtrip", worst < 1e-9, fmt("max rel err %.3g (tol 1e-9)", worst)};
}

CheckResult check_mixture_fd(bool mutate) {
  const Interpolant s = linear_interpolant();
  const GaussianMixtureOracle g = two_modes(2);
  Rng rng = derive_rng(13, {});
  double worst = 0.0;
  const double h = 1e-5;
  for (double t : kTimes) {
    const Vec x = gaussian(2, 1, rng).col(0) * 0.6;
    Vec analytic = analytic_mixture_score(g, s, x, t);
    if (mutate) analytic *= 1.0 + 1e-4;
    Vec fd(2);
    for (Eigen::Index i = 0; i < 2; ++i) {
      Vec up = x, dn = x;
      up[i] += h;
      dn[i] -= h;
      fd[i] = (mixture_log_density(g, s, up, t) - mixture_log_density(g, s, dn, t)) / (2 * h);
    }
    worst = std::max(worst, rel_err(analytic, fd));
  }
  return {"mixture-score-fd", worst < 1e-6, fmt("max rel err %.3g (tol 1e-6)", worst)};
}

CheckResult check_rescaling(bool mutate) {
  const Interpolant s = linear_interpolant();
  double worst = 0.0;
  for (std::size_t n : {1u, 2u, 8u}) {
    const MixtureField field(two_modes(n), s);
    Rng rng = derive_rng(14, {n});
    for (double t : kTimes) {
      const Vec x = Vec::Constant(static_cast<Eigen::Index>(n), 0.15);
      const Mat eps = antithetic_noise(128, n, rng);
      const auto p = s.at(t);
      Vec stable = stable_mc_gradient(field, x, t, eps);
      if (mutate) stable *= 1.0 + 1e-9;
      const Vec scaled = (p.sigma / p.alpha) * mc_gradient(field, x, t, eps);
      worst = std::max(worst, rel_err(stable, scaled));
    }
  }
  return {"stable-rescaling", worst < 1e-12, fmt("max rel err %.3g (tol 1e-12)", worst)};
}

CheckResult check_zero_at_one() {
  const MixtureField field(two_modes(3), linear_interpolant());
  Rng rng = derive_rng(15, {});
  const Vec g = mc_gradient(field, Vec::Constant(3, 0.3), 1.0, 128, rng);
  const double m = g.lpNorm<Eigen::Infinity>();
  return {"zero-gradient-at-t1", m == 0.0, fmt("max |g| = %.3g (must be exactly 0)", m)};
}

CheckResult check_gaussian_closed_form() {
  const Interpolant s = linear_interpolant();
  GaussianMixtureOracle g;
  g.means = Mat::Constant(1, 1, 0.2);
  g.variances = {0.25};
  g.weights = {1.0};
  const MixtureField field(g, s);
  Rng rng = derive_rng(16, {});
  double worst = 0.0;
  for (double t : kTimes) {
    const auto p = s.at(t);
    const Vec x = Vec::Constant(1, 0.9);
    const double exact = -p.alpha * p.alpha * (0.9 - 0.2) / (p.alpha * p.alpha * 0.25 + p.sigma * p.sigma);
    const Vec est = mc_gradient(field, x, t, 128, rng);
    worst = std::max(worst, std::abs(est[0] - exact) / std::abs(exact));
  }
  return {"gaussian-closed-form", worst < 1e-9, fmt("max rel err %.3g (tol 1e-9)", worst)};
}

CheckResult check_mixture_hermite() {
  const Interpolant s = linear_interpolant();
  const GaussianMixtureOracle g = two_modes(1);
  const MixtureField field(g, s);
  const GaussHermite gh = gauss_hermite(64);
  Rng rng = derive_rng(17, {});
  double worst = 0.0;
  for (double t : {0.2, 0.5, 0.8}) {
    const auto p = s.at(t);
    const Vec x = Vec::Constant(1, 0.1);
    double quad = 0.0;
    for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
      const Vec x_t = Vec::Constant(1, p.alpha * x[0] + p.sigma * std::sqrt(2.0) * gh.nodes[k]);
      quad += gh.weights[k] * analytic_mixture_score(g, s, x_t, t)[0];
    }
    quad *= p.alpha / std::sqrt(std::acos(-1.0));
    const double est = mc_gradient(field, x, t, 4096, rng)[0];
    worst = std::max(worst, std::abs(est - quad) / std::abs(quad));
  }
  return {"mixture-vs-gauss-hermite", worst < 0.05, fmt("max rel err %.3g (tol 0.05)", worst)};
}

CheckResult check_fractal_quadrature() {
  const Interpolant s = linear_interpolant();
  const QuadratureOracle oracle([](double u) { return std::exp(-2.0 * fractal_objective(0.5 * (u + 1.0))); }, -1.0, 1.0, s);
  Rng rng = derive_rng(18, {});
  double worst = 0.0;
  const double h = 1e-4;
  for (auto [x0, t] : {std::pair{-0.6, 0.5}, std::pair{0.0, 0.5}, std::pair{0.6, 0.5}, std::pair{-0.3, 0.7},
                       std::pair{0.6, 0.7}}) {
    const double fd = (oracle.log_objective(x0 + h, t) - oracle.log_objective(x0 - h, t)) / (2 * h);
    const double est = mc_gradient(oracle, Vec::Constant(1, x0), t, 4096, rng)[0];
    worst = std::max(worst, std::abs(est - fd) / std::abs(fd));
  }
  return {"fractal-vs-quadrature", worst < 0.01, fmt("max rel err %.3g (tol 0.01)", worst)};
}

CheckResult check_homotopy() {
  Rng rng = derive_rng(19, {});
  const auto sq = [](const Vec& y) { return y.squaredNorm(); };
  const HomotopyEstimate quad = gaussian_homotopy_gradient(sq, Vec::Constant(1, 1.0), 0.5, 100000, rng);
  const HomotopyEstimate flat = gaussian_homotopy_gradient([](const Vec&) { return 3.0; }, Vec::Constant(2, 0.4), 0.5, 64, rng);
  const double err = std::abs(quad.grad[0] - 2.0) / 2.0;
  const double zero = flat.grad.lpNorm<Eigen::Infinity>();
  return {"homotopy-baseline", err < 0.05 && zero == 0.0,
          fmt("rel err vs 2x = %.3g (tol 0.05); constant f gives %.3g", err, zero)};
}

}  // namespace

std::vector<std::string> oracle_mutations() { return {"score-form-sign", "mixture-score", "stable-scale"}; }

std::vector<CheckResult> run_oracle_checks(const std::string& mutation,
                                           const std::function<void(const CheckResult&)>& progress) {
  const auto known = oracle_mutations();
  if (!mutation.empty() && std::find(known.begin(), known.end(), mutation) == known.end())
    throw Error(ErrorCode::invalid_argument, "unknown mutation '" + mutation + "'");
  const std::vector<std::pair<const char*, std::function<CheckResult()>>> checks = {
      {"score-forms", [&] { return check_score_forms(mutation == "score-form-sign"); }},
      {"posterior-mean-roundtrip", [] { return check_velocity_roundtrip(); }},
      {"mixture-score-fd", [&] { return check_mixture_fd(mutation == "mixture-score"); }},
      {"stable-rescaling", [&] { return check_rescaling(mutation == "stable-scale"); }},
      {"zero-gradient-at-t1", [] { return check_zero_at_one(); }},
      {"gaussian-closed-form", [] { return check_gaussian_closed_form(); }},
      {"mixture-vs-gauss-hermite", [] { return check_mixture_hermite(); }},
      {"fractal-vs-quadrature", [] { return check_fractal_quadrature(); }},
      {"homotopy-baseline", [] { return check_homotopy(); }},
  };
  std::vector<CheckResult> out;
  for (const auto& [name, run] : checks) {
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r = {name, false, std::string("threw: ") + e.what()};
    }
    if (progress) progress(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace scoreopt
