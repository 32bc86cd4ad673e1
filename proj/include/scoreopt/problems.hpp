#pragma once

#include "scoreopt/schedule.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scoreopt {

enum class Sense { minimize, maximize };

/// Per-dimension affine map between a native box and [-1, 1]^n.
class AffineMap {
 public:
  AffineMap() = default;
  AffineMap(const Vec& lower, const Vec& upper);

  Vec normalize(const Vec& native) const;
  Vec denormalize(const Vec& normalized) const;
  const Vec& scale() const { return scale_; }
  const Vec& shift() const { return shift_; }

 private:
  Vec scale_;  // native = scale * normalized + shift
  Vec shift_;
};

struct Problem {
  std::string id;
  std::size_t dim = 0;
  Vec lower;
  Vec upper;
  Sense sense = Sense::minimize;
  std::function<double(const Vec&)> objective;   // native coordinates
  std::function<bool(const Vec&)> constraint;    // empty: every point of the box is feasible

  AffineMap map() const { return AffineMap(lower, upper); }
  bool feasible(const Vec& native) const { return !constraint || constraint(native); }
  /// Throws if the bounds or callables are malformed.
  void validate() const;
};

/// Same objective on a smaller box; used by restart refinement.
Problem with_box(const Problem& p, const Vec& lower, const Vec& upper);

/// Maximization-oriented fitness at a normalized point; nullopt when the
/// point violates the constraint.
std::optional<double> raw_fitness(const Problem& p, const Vec& x_norm);

// --- fractal family -------------------------------------------------------

inline constexpr std::size_t kDefaultFractalDepth = 21;

/// sum_{i<depth} a_i sin(2^i pi x) + b_i cos(2^i pi x) with
/// a_i = -(-0.7)^i, b_i = (-0.7)^i, b_0 = 0.
double fractal_objective(double x, std::size_t depth = kDefaultFractalDepth);

/// Low-frequency blend: terms 0..floor(level) in full plus a (level - floor)
/// share of the next term, so the value is continuous in level.
double fourier_partial_objective(double x, double level);

/// (F(x) + F(1 - x)) / 2: mirrored pair of global minima.
double multimodal_fractal(double x, std::size_t depth = kDefaultFractalDepth);

// --- CEC2017-style functions ----------------------------------------------

/// Optional rotation and shift: z = R (x - shift).
class Transform {
 public:
  Transform() = default;
  Transform(std::optional<Mat> rotation, std::optional<Vec> shift);
  Vec apply(const Vec& x) const;
  bool identity() const { return !rotation_ && !shift_; }

 private:
  std::optional<Mat> rotation_;
  std::optional<Vec> shift_;
};

/// Orthogonal matrix from the QR factorization of a seeded Gaussian matrix.
Mat random_rotation(std::size_t n, std::uint64_t seed);

double f1_2017(const Vec& x, const Transform& tr = {});  // bent cigar variant
double f4_2017(const Vec& x, const Transform& tr = {});  // Rastrigin

// --- circle packing -------------------------------------------------------

struct RadiiSolution {
  std::vector<double> radii;
  double total = 0.0;
  std::size_t pivots = 0;
};

/// Maximum total radius for fixed centers (x0, y0, x1, y1, ...) in the unit
/// square: maximize sum r_i subject to 0 <= r_i <= wall distance and
/// r_i + r_j <= |c_i - c_j|. Dense simplex with Bland's rule.
RadiiSolution solve_radii_lp(std::span<const double> centers);
double circle_packing_fitness(std::span<const double> centers);

// --- registry -------------------------------------------------------------

struct ProblemParams {
  std::size_t dim = 2;                       // f1/f4 dimension
  std::size_t depth = kDefaultFractalDepth;  // fractal terms
  bool rotate = false;
  bool shift = false;
  std::uint64_t seed = 2017;  // rotation / shift generator
};

struct ProblemInfo {
  std::string id;
  std::string description;
};

std::vector<ProblemInfo> list_problems();
/// Ids: fractal, fractal-mm, f1-2017, f4-2017, circles-n<k>.
Problem make_problem(const std::string& id, const ProblemParams& params = {});

}  // namespace scoreopt
