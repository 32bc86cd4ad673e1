#include "scoreopt/schedule.hpp"

#include "scoreopt/error.hpp"

#include <cmath>
#include <numbers>

namespace scoreopt {

Interpolant linear_interpolant() {
  return {"linear",
          [](double t) { return 1.0 - t; },
          [](double t) { return t; },
          [](double) { return -1.0; },
          [](double) { return 1.0; }};
}

Interpolant trigonometric_interpolant() {
  constexpr double h = std::numbers::pi / 2.0;
  return {"trig",
          [](double t) { return t >= 1.0 ? 0.0 : std::cos(h * t); },
          [](double t) { return t <= 0.0 ? 0.0 : std::sin(h * t); },
          [](double t) { return -h * std::sin(h * t); },
          [](double t) { return h * std::cos(h * t); }};
}

Interpolant interpolant_by_name(const std::string& name) {
  if (name == "linear") return linear_interpolant();
  if (name == "trig") return trigonometric_interpolant();
  throw Error(ErrorCode::invalid_argument, "unknown interpolant '" + name + "'");
}

TSequence build_t_sequence(std::size_t count, double t_end) {
  if (count == 0) throw Error(ErrorCode::invalid_argument, "t-sequence needs TN >= 1");
  if (!(t_end > 0.0 && t_end < 1.0))
    throw Error(ErrorCode::invalid_argument, "t-sequence end must lie in (0, 1)");

  TSequence seq;
  seq.count = count;
  seq.t_end = t_end;
  seq.gamma = std::exp(std::log(t_end) / static_cast<double>(count));
  seq.values.reserve(count + 1);
  seq.values.push_back(1.0);
  for (std::size_t i = 0; i < count; ++i) seq.values.push_back(seq.values.back() * seq.gamma);
  return seq;
}

namespace {

double gaussian_log_density(double sq_dist, double variance, std::size_t n) {
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * variance) -
         0.5 * sq_dist / variance;
}

void check_dims(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::invalid_argument, "dimension mismatch");
}

}  // namespace

double forward_log_density(const Interpolant& s, const Vec& x_t, const Vec& x, double t) {
  check_dims(x_t, x);
  const double alpha = s.alpha(t);
  const double sigma = s.sigma(t);
  if (!(sigma > 0.0)) throw Error(ErrorCode::degenerate_kernel, "forward kernel needs sigma(t) > 0");
  return gaussian_log_density((x_t - alpha * x).squaredNorm(), sigma * sigma,
                              static_cast<std::size_t>(x.size()));
}

double forward_density(const Interpolant& s, const Vec& x_t, const Vec& x, double t) {
  return std::exp(forward_log_density(s, x_t, x, t));
}

double inverse_log_density(const Interpolant& s, const Vec& x, const Vec& x_t, double t) {
  check_dims(x_t, x);
  const double alpha = s.alpha(t);
  const double sigma = s.sigma(t);
  if (!(alpha > 0.0))
    throw Error(ErrorCode::degenerate_kernel, "inverse kernel undefined at alpha(t) = 0");
  if (!(sigma > 0.0)) throw Error(ErrorCode::degenerate_kernel, "inverse kernel needs sigma(t) > 0");
  const double ratio = sigma / alpha;
  return gaussian_log_density((x - x_t / alpha).squaredNorm(), ratio * ratio,
                              static_cast<std::size_t>(x.size()));
}

double inverse_density(const Interpolant& s, const Vec& x, const Vec& x_t, double t) {
  return std::exp(inverse_log_density(s, x, x_t, t));
}

}  // namespace scoreopt
