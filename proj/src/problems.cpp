#include "scoreopt/problems.hpp"

#include "scoreopt/error.hpp"
#include "scoreopt/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace scoreopt {

AffineMap::AffineMap(const Vec& lower, const Vec& upper) {
  if (lower.size() != upper.size()) throw Error(ErrorCode::invalid_argument, "box bound size mismatch");
  scale_ = 0.5 * (upper - lower);
  shift_ = 0.5 * (upper + lower);
}

Vec AffineMap::normalize(const Vec& native) const {
  return ((native - shift_).array() / scale_.array()).matrix();
}

Vec AffineMap::denormalize(const Vec& normalized) const {
  return (scale_.array() * normalized.array()).matrix() + shift_;
}

void Problem::validate() const {
  if (dim == 0) throw Error(ErrorCode::invalid_argument, "problem '" + id + "' has zero dimension");
  if (lower.size() != static_cast<Eigen::Index>(dim) || upper.size() != static_cast<Eigen::Index>(dim))
    throw Error(ErrorCode::invalid_argument, "problem '" + id + "' bounds do not match dimension");
  if (!(lower.array() < upper.array()).all())
    throw Error(ErrorCode::invalid_argument, "problem '" + id + "' needs lower < upper");
  if (!objective) throw Error(ErrorCode::invalid_argument, "problem '" + id + "' has no objective");
}

Problem with_box(const Problem& p, const Vec& lower, const Vec& upper) {
  Problem q = p;
  q.lower = lower;
  q.upper = upper;
  q.validate();
  return q;
}

std::optional<double> raw_fitness(const Problem& p, const Vec& x_norm) {
  const Vec native = p.map().denormalize(x_norm);
  if (!p.feasible(native)) return std::nullopt;
  const double value = p.objective(native);
  return p.sense == Sense::minimize ? -value : value;
}

// --- fractal --------------------------------------------------------------

namespace {

double fractal_term(double x, std::size_t i) {
  const double k = std::ldexp(std::numbers::pi, static_cast<int>(i));
  const double c = std::pow(-0.7, static_cast<double>(i));
  const double a = -c;
  const double b = i == 0 ? 0.0 : c;
  return a * std::sin(k * x) + b * std::cos(k * x);
}

}  // namespace

double fractal_objective(double x, std::size_t depth) {
  double sum = 0.0;
  for (std::size_t i = 0; i < depth; ++i) sum += fractal_term(x, i);
  return sum;
}

double fourier_partial_objective(double x, double level) {
  if (!(level >= 0.0)) throw Error(ErrorCode::invalid_argument, "partial sum level must be >= 0");
  const double whole = std::floor(level);
  const auto m = static_cast<std::size_t>(whole);
  const double frac = level - whole;
  double sum = 0.0;
  for (std::size_t i = 0; i <= m; ++i) sum += fractal_term(x, i);
  if (frac > 0.0) sum += frac * fractal_term(x, m + 1);
  return sum;
}

double multimodal_fractal(double x, std::size_t depth) {
  return 0.5 * (fractal_objective(x, depth) + fractal_objective(1.0 - x, depth));
}

// --- CEC2017 --------------------------------------------------------------

Transform::Transform(std::optional<Mat> rotation, std::optional<Vec> shift)
    : rotation_(std::move(rotation)), shift_(std::move(shift)) {
  if (rotation_) {
    const Mat& q = *rotation_;
    if (q.rows() != q.cols()) throw Error(ErrorCode::invalid_argument, "rotation must be square");
    const Mat gram = q.transpose() * q - Mat::Identity(q.rows(), q.cols());
    if (gram.cwiseAbs().maxCoeff() > 1e-8)
      throw Error(ErrorCode::invalid_argument, "rotation matrix is not orthogonal");
  }
  if (rotation_ && shift_ && rotation_->rows() != shift_->size())
    throw Error(ErrorCode::invalid_argument, "rotation and shift sizes differ");
}

Vec Transform::apply(const Vec& x) const {
  Vec z = shift_ ? Vec(x - *shift_) : x;
  if (rotation_) z = (*rotation_) * z;
  return z;
}

Mat random_rotation(std::size_t n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, {0x726f74ULL, n});
  std::normal_distribution<double> normal;
  Mat g(n, n);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  // Fix column signs so the factorization is unique.
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

double f1_2017(const Vec& x, const Transform& tr) {
  const Vec z = tr.apply(x);
  double tail = 0.0;
  for (Eigen::Index i = 1; i < z.size(); ++i) tail += z[i] * z[i];
  return z[0] * z[0] + 1e6 * tail;
}

double f4_2017(const Vec& x, const Transform& tr) {
  const Vec z = tr.apply(x);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    sum += z[i] * z[i] - 10.0 * std::cos(2.0 * std::numbers::pi * z[i]) + 10.0;
  return sum;
}

// --- circle packing -------------------------------------------------------

RadiiSolution solve_radii_lp(std::span<const double> centers) {
  if (centers.empty() || centers.size() % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "circle centers must be (x, y) pairs");
  const std::size_t n = centers.size() / 2;
  constexpr double kCoincident = 1e-12;
  constexpr double kEps = 1e-12;

  std::vector<double> wall(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = centers[2 * i];
    const double y = centers[2 * i + 1];
    const double w = std::min({x, 1.0 - x, y, 1.0 - y});
    if (w < -kEps) throw Error(ErrorCode::invalid_argument, "circle center outside the unit square");
    wall[i] = std::max(w, 0.0);
  }
  struct Pair {
    std::size_t i, j;
    double dist;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = std::hypot(centers[2 * i] - centers[2 * j], centers[2 * i + 1] - centers[2 * j + 1]);
      if (d < kCoincident) {
        wall[i] = 0.0;
        wall[j] = 0.0;
      }
      pairs.push_back({i, j, d});
    }

  // Tableau for max c^T r, A r <= b, r >= 0 with b >= 0: the slack basis is
  // feasible, so no phase one is needed.
  const std::size_t m = n + pairs.size();
  const std::size_t cols = n + m;  // structural + slack
  Mat tab = Mat::Zero(static_cast<Eigen::Index>(m + 1), static_cast<Eigen::Index>(cols + 1));
  const auto rhs = static_cast<Eigen::Index>(cols);
  for (std::size_t i = 0; i < n; ++i) {
    tab(i, i) = 1.0;
    tab(i, n + i) = 1.0;
    tab(i, rhs) = wall[i];
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(n + k);
    tab(row, pairs[k].i) = 1.0;
    tab(row, pairs[k].j) = 1.0;
    tab(row, n + n + k) = 1.0;
    tab(row, rhs) = pairs[k].dist;
  }
  const auto obj = static_cast<Eigen::Index>(m);
  for (std::size_t i = 0; i < n; ++i) tab(obj, i) = -1.0;  // reduced costs of -c

  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) basis[r] = n + r;

  RadiiSolution sol;
  for (;;) {
    // Bland: lowest-index column with negative reduced cost enters.
    Eigen::Index enter = -1;
    for (Eigen::Index c = 0; c < rhs; ++c)
      if (tab(obj, c) < -kEps) {
        enter = c;
        break;
      }
    if (enter < 0) break;

    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < obj; ++r) {
      const double a = tab(r, enter);
      if (a <= kEps) continue;
      const double ratio = tab(r, rhs) / a;
      if (ratio < best - kEps ||
          (std::abs(ratio - best) <= kEps && leave >= 0 && basis[r] < basis[leave])) {
        best = ratio;
        leave = r;
      }
    }
    // Bounded by the wall rows, so an entering column always has a pivot row.
    if (leave < 0) throw Error(ErrorCode::non_finite, "radii LP reported unbounded");

    tab.row(leave) /= tab(leave, enter);
    for (Eigen::Index r = 0; r <= obj; ++r) {
      if (r == leave) continue;
      const double f = tab(r, enter);
      if (f != 0.0) tab.row(r) -= f * tab.row(leave);
    }
    basis[leave] = static_cast<std::size_t>(enter);
    ++sol.pivots;
  }

  sol.radii.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r)
    if (basis[r] < n) sol.radii[basis[r]] = std::max(0.0, tab(static_cast<Eigen::Index>(r), rhs));
  sol.total = 0.0;
  for (double r : sol.radii) sol.total += r;
  return sol;
}

double circle_packing_fitness(std::span<const double> centers) {
  return solve_radii_lp(centers).total;
}

// --- registry -------------------------------------------------------------

std::vector<ProblemInfo> list_problems() {
  return {
      {"fractal", "1-D fractal Fourier series on [0, 1], minimize"},
      {"fractal-mm", "symmetric two-optimum fractal (F(x) + F(1 - x)) / 2 on [0, 1], minimize"},
      {"f1-2017", "x1^2 + 1e6 * sum_{i>1} x_i^2 on [-100, 100]^n, minimize"},
      {"f4-2017", "Rastrigin on [-100, 100]^n, minimize"},
      {"circles-n<k>", "k circle centers in the unit square, maximize the LP sum of radii"},
  };
}

namespace {

Transform make_transform(const ProblemParams& params) {
  std::optional<Mat> rotation;
  std::optional<Vec> shift;
  if (params.rotate) rotation = random_rotation(params.dim, params.seed);
  if (params.shift) {
    Rng rng = derive_rng(params.seed, {0x736866ULL, params.dim});
    std::uniform_real_distribution<double> u(-80.0, 80.0);
    Vec s(params.dim);
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = u(rng);
    shift = s;
  }
  return Transform(rotation, shift);
}

}  // namespace

Problem make_problem(const std::string& id, const ProblemParams& params) {
  Problem p;
  p.id = id;
  if (id == "fractal" || id == "fractal-mm") {
    const std::size_t depth = params.depth;
    if (depth == 0) throw Error(ErrorCode::invalid_argument, "fractal depth must be >= 1");
    p.dim = 1;
    p.lower = Vec::Zero(1);
    p.upper = Vec::Ones(1);
    p.sense = Sense::minimize;
    if (id == "fractal")
      p.objective = [depth](const Vec& x) { return fractal_objective(x[0], depth); };
    else
      p.objective = [depth](const Vec& x) { return multimodal_fractal(x[0], depth); };
  } else if (id == "f1-2017" || id == "f4-2017") {
    if (params.dim == 0) throw Error(ErrorCode::invalid_argument, id + " needs dim >= 1");
    p.dim = params.dim;
    p.lower = Vec::Constant(params.dim, -100.0);
    p.upper = Vec::Constant(params.dim, 100.0);
    p.sense = Sense::minimize;
    const Transform tr = make_transform(params);
    if (id == "f1-2017")
      p.objective = [tr](const Vec& x) { return f1_2017(x, tr); };
    else
      p.objective = [tr](const Vec& x) { return f4_2017(x, tr); };
  } else if (id.rfind("circles-n", 0) == 0) {
    const std::string count = id.substr(9);
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(count, &used);
      if (used != count.size()) k = 0;
    } catch (const std::exception&) {
      k = 0;
    }
    if (k == 0) throw Error(ErrorCode::invalid_argument, "bad circle count in '" + id + "'");
    p.dim = 2 * k;
    p.lower = Vec::Zero(p.dim);
    p.upper = Vec::Ones(p.dim);
    p.sense = Sense::maximize;
    p.objective = [](const Vec& x) { return circle_packing_fitness({x.data(), static_cast<std::size_t>(x.size())}); };
    p.constraint = [](const Vec& x) { return (x.array() >= 0.0).all() && (x.array() <= 1.0).all(); };
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown problem id '" + id + "'");
  }
  p.validate();
  return p;
}

}  // namespace scoreopt
