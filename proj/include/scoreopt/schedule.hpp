#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace scoreopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct InterpolantPoint {
  double alpha;
  double sigma;
  double dalpha;
  double dsigma;
};

/// Forward process x_t = alpha(t) x + sigma(t) eps on t in [0, 1].
///
/// alpha runs 1 -> 0 and sigma 0 -> 1. The schedule is a value type holding
/// the four scalar functions so alternative schedules can be swapped in
/// without touching consumers.
struct Interpolant {
  std::string name;
  std::function<double(double)> alpha;
  std::function<double(double)> sigma;
  std::function<double(double)> dalpha;
  std::function<double(double)> dsigma;

  InterpolantPoint at(double t) const { return {alpha(t), sigma(t), dalpha(t), dsigma(t)}; }
};

/// alpha = 1 - t, sigma = t.
Interpolant linear_interpolant();
/// alpha = cos(pi t / 2), sigma = sin(pi t / 2).
Interpolant trigonometric_interpolant();
/// Lookup by name ("linear", "trig"); throws on unknown names.
Interpolant interpolant_by_name(const std::string& name);

struct TSequence {
  std::size_t count = 0;  // TN
  double t_end = 0.0;
  double gamma = 0.0;
  std::vector<double> values;  // TN + 1 entries, values[0] = 1
};

/// Geometric sequence 1 = t_0 > t_1 > ... > t_TN = t_end with ratio t_end^(1/TN).
TSequence build_t_sequence(std::size_t count, double t_end);

// Gaussian kernels. Log forms are what the library uses internally.
double forward_log_density(const Interpolant& s, const Vec& x_t, const Vec& x, double t);
double forward_density(const Interpolant& s, const Vec& x_t, const Vec& x, double t);
double inverse_log_density(const Interpolant& s, const Vec& x, const Vec& x_t, double t);
double inverse_density(const Interpolant& s, const Vec& x, const Vec& x_t, double t);

}  // namespace scoreopt
