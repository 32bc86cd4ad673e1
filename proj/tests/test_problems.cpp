#include "scoreopt/error.hpp"
#include "scoreopt/problems.hpp"
#include "scoreopt/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace scoreopt;

namespace {

// Direct evaluation from the coefficient table.
double fractal_reference(double x, int depth) {
  double sum = 0.0;
  for (int i = 0; i < depth; ++i) {
    const double r = std::pow(-0.7, i);
    const double f = std::pow(2.0, i) * std::numbers::pi * x;
    sum += -r * std::sin(f) + (i == 0 ? 0.0 : r * std::cos(f));
  }
  return sum;
}

// Two circles: each radius is bounded by its wall distance, and together
// by the center distance.
double two_circle_closed_form(double x0, double y0, double x1, double y1) {
  const double w0 = std::min({x0, 1 - x0, y0, 1 - y0});
  const double w1 = std::min({x1, 1 - x1, y1, 1 - y1});
  return std::min(w0 + w1, std::hypot(x0 - x1, y0 - y1));
}

}  // namespace

TEST_CASE("fractal values") {
  CHECK(fractal_objective(0.0, 2) == doctest::Approx(-0.7).epsilon(1e-14));
  CHECK(fractal_objective(0.5, 1) == doctest::Approx(-1.0).epsilon(1e-14));
  // Geometric series of the cosine coefficients at x = 0.
  CHECK(fractal_objective(0.0) == doctest::Approx(-0.7 * (1 - std::pow(0.7, 20)) / 1.7).epsilon(1e-12));
  CHECK(-0.7 / 1.7 == doctest::Approx(-0.41176).epsilon(1e-4));
  for (double x : {0.013, 0.25, 0.6745, 0.99})
    CHECK(fractal_objective(x) == doctest::Approx(fractal_reference(x, 21)).epsilon(1e-12));
}

TEST_CASE("partial fractal sums interpolate between depths") {
  for (double x : {0.1, 0.45, 0.8}) {
    CHECK(fourier_partial_objective(x, 3.0) == doctest::Approx(fractal_reference(x, 4)).epsilon(1e-12));
    const double mid = fourier_partial_objective(x, 3.5);
    CHECK(mid == doctest::Approx(0.5 * (fractal_reference(x, 4) + fractal_reference(x, 5))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(fourier_partial_objective(0.3, -1.0), Error);
}

TEST_CASE("multimodal fractal is mirror symmetric") {
  for (double x : {0.05, 0.2, 0.37, 0.5})
    CHECK(multimodal_fractal(x) == doctest::Approx(multimodal_fractal(1.0 - x)).epsilon(1e-12));
}

TEST_CASE("CEC functions") {
  Vec x(2);
  x << 0.5, 0.5;
  CHECK(f4_2017(x) == doctest::Approx(40.5));
  x << 1.0, 0.0;
  CHECK(f4_2017(x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f4_2017(Vec::Zero(5)) == 0.0);
  x << 0.5, 0.0;
  CHECK(f4_2017(x) == doctest::Approx(20.25));
  x << 1.0, 1.0;
  CHECK(f1_2017(x) == doctest::Approx(1.0 + 1e6));
  x << 3.0, 0.0;
  CHECK(f1_2017(x) == doctest::Approx(9.0));
}

TEST_CASE("rotation is orthogonal, deterministic and shifts apply first") {
  const Mat q = random_rotation(5, 11);
  CHECK((q.transpose() * q - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(random_rotation(5, 11) == q);
  CHECK(random_rotation(5, 12) != q);

  Vec shift = Vec::Constant(5, 2.0);
  const Transform tr(q, shift);
  CHECK(f4_2017(shift, tr) == doctest::Approx(0.0).scale(1.0));
  const Vec y = Vec::LinSpaced(5, -1, 1);
  CHECK((tr.apply(y) - q * (y - shift)).norm() < 1e-14);
  CHECK(Transform().identity());
  CHECK_THROWS_AS(Transform(Mat::Ones(2, 2), std::nullopt), Error);
}

TEST_CASE("affine map round trip") {
  Vec lo(2), hi(2);
  lo << -100, 0;
  hi << 100, 1;
  const AffineMap m(lo, hi);
  Vec u(2);
  u << -1, 1;
  CHECK((m.denormalize(u) - Vec(Vec::Map(std::vector<double>{-100, 1}.data(), 2))).norm() < 1e-14);
  Vec x(2);
  x << 25, 0.25;
  CHECK((m.denormalize(m.normalize(x)) - x).norm() < 1e-12);
  CHECK(m.normalize(x)[0] == doctest::Approx(0.25));
  CHECK(m.normalize(x)[1] == doctest::Approx(-0.5));
}

TEST_CASE("raw fitness flips minimization and reports infeasibility") {
  const Problem f4 = make_problem("f4-2017");
  Vec u(2);
  u << 0.005, 0.0;  // native (0.5, 0)
  CHECK(*raw_fitness(f4, u) == doctest::Approx(-20.25));
  const Problem c = make_problem("circles-n2");
  Vec centers(4);
  centers << 0.0, 0.0, 0.5, 0.5;
  CHECK(*raw_fitness(c, centers) == doctest::Approx(two_circle_closed_form(0.5, 0.5, 0.75, 0.75)));
  Vec outside = Vec::Constant(4, 1.5);
  CHECK_FALSE(raw_fitness(c, outside).has_value());
}

TEST_CASE("radii LP matches the two-circle closed form") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const std::vector<double> c{u(rng), u(rng), u(rng), u(rng)};
    const RadiiSolution s = solve_radii_lp(c);
    CHECK(s.total == doctest::Approx(two_circle_closed_form(c[0], c[1], c[2], c[3])).epsilon(1e-9));
    CHECK(s.radii.size() == 2);
    CHECK(s.radii[0] >= -1e-12);
    CHECK(s.radii[0] + s.radii[1] <= std::hypot(c[0] - c[2], c[1] - c[3]) + 1e-9);
  }
}

TEST_CASE("radii LP single circle and feasibility of three") {
  const std::vector<double> one{0.3, 0.6};
  CHECK(solve_radii_lp(one).total == doctest::Approx(0.3));
  const std::vector<double> three{0.25, 0.25, 0.75, 0.25, 0.5, 0.75};
  const RadiiSolution s = solve_radii_lp(three);
  for (int i = 0; i < 3; ++i) {
    const double x = three[2 * i], y = three[2 * i + 1];
    CHECK(s.radii[i] <= std::min({x, 1 - x, y, 1 - y}) + 1e-9);
    for (int j = i + 1; j < 3; ++j)
      CHECK(s.radii[i] + s.radii[j] <= std::hypot(x - three[2 * j], y - three[2 * j + 1]) + 1e-9);
  }
  // Three walls of 0.25 each are simultaneously reachable here.
  CHECK(s.total == doctest::Approx(0.75));
}

TEST_CASE("registry") {
  const auto list = list_problems();
  CHECK(list.size() >= 5);
  CHECK(make_problem("fractal").dim == 1);
  CHECK(make_problem("circles-n3").dim == 6);
  CHECK(make_problem("circles-n3").sense == Sense::maximize);
  ProblemParams p;
  p.dim = 4;
  CHECK(make_problem("f1-2017", p).dim == 4);
  CHECK_THROWS_AS(make_problem("circles-n0"), Error);
  CHECK_THROWS_AS(make_problem("circles-nx"), Error);
  CHECK_THROWS_AS(make_problem("sphere"), Error);
  p.depth = 0;
  CHECK_THROWS_AS(make_problem("fractal", p), Error);
}

TEST_CASE("with_box keeps the objective") {
  const Problem f4 = make_problem("f4-2017");
  const Problem small = with_box(f4, Vec::Constant(2, -2.0), Vec::Constant(2, 2.0));
  Vec x(2);
  x << 1.0, 0.0;
  CHECK(small.objective(x) == f4.objective(x));
  CHECK_THROWS_AS(with_box(f4, Vec::Constant(2, 2.0), Vec::Constant(2, -2.0)), Error);
}
