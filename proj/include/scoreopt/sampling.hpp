#pragma once

#include "scoreopt/problems.hpp"
#include "scoreopt/rng.hpp"
#include "scoreopt/schedule.hpp"

#include <optional>
#include <span>
#include <vector>

namespace scoreopt {

/// Candidate points with fitness-proportional sampling weights.
struct FitnessPool {
  Mat points;                              // dim x size, working coordinates
  std::vector<std::optional<double>> raw;  // nullopt: infeasible
  double temp = 1.0;
  bool flat = false;
  std::vector<double> weights;  // exp((raw - TP99) / temp), 0 when infeasible
  std::vector<double> probs;    // weights / sum
  Mat loss_weights;             // dim x size debias weights, or empty

  std::size_t size() const { return raw.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(points.rows()); }
  double feasible_fraction() const;
};

/// Nearest-rank 99th percentile of the feasible values.
double tp99(std::span<const std::optional<double>> raw);

std::vector<double> transform_fitness(std::span<const std::optional<double>> raw, double temp);

/// std(p) * len(p) for p = weights / sum(weights).
double spread_statistic(std::span<const std::optional<double>> raw, double temp);

struct TempCalibration {
  double temp = 0.0;
  double statistic = 0.0;
  bool flat = false;       // every feasible value equal: statistic is 0 for any temp
  bool on_target = false;  // statistic landed in [target - tol, target + tol]
};

/// Bisection on log(temp) over [-30, 30] for std(p) * len(p) = target.
TempCalibration calibrate_temp(std::span<const std::optional<double>> raw, double target = 0.5,
                               double tolerance = 0.05);

/// Pool from explicit points and raw values; calibrates the temperature.
FitnessPool make_pool(Mat points, std::vector<std::optional<double>> raw, double c_pstd = 0.5);
/// Pool with the given positive weights used as-is (temp = 1, no transform).
FitnessPool make_weighted_pool(Mat points, std::vector<double> weights);

/// Systematic (low-variance) resampling over an explicit probability
/// vector (sums to 1). Returns indices in increasing order.
std::vector<std::size_t> systematic_resample(std::span<const double> probs, std::size_t count, Rng& rng);

/// Systematic (low-variance) resampling: `count` pool indices drawn with
/// probability proportional to the weights.
std::vector<std::size_t> fitness_resample(const FitnessPool& pool, std::size_t count, Rng& rng);

Mat uniform_prior(std::size_t count, std::size_t dim, Rng& rng);

/// Gaussian proposal N(center, sd^2 I) around an incumbent solution.
struct LocalPrior {
  Vec center;
  double sd = 0.0;      // sqrt(2) sigma_t / alpha_t
  double radius = 0.0;  // half-width holding `mass` of each marginal
  double mass = 0.9;
};

/// Prior at scale t: sd = sqrt(2) sigma_t / alpha_t, radius = z sd with
/// z the two-sided `mass` quantile of the standard normal.
LocalPrior make_local_prior(const Vec& center, const Interpolant& s, double t, double mass = 0.9);
double two_sided_quantile(double mass);

/// Gaussian draws; coordinates leaving [-1, 1] are redrawn up to 16 times,
/// then clamped.
Mat local_prior_sample(const LocalPrior& prior, std::size_t count, Rng& rng);

/// Per-dimension loss weights that flatten the Gaussian prior inside
/// center +- radius (mass 0.9 spread uniformly) and leave the tails alone.
Vec debias_weights(const Vec& x, const LocalPrior& prior);

/// Columns (e1, -e1, e2, -e2, ...). monte_size must be even.
Mat antithetic_noise(std::size_t monte_size, std::size_t dim, Rng& rng);

struct PoolOptions {
  std::size_t pool_size = 1u << 16;
  double c_pstd = 0.5;
  bool debias = true;  // local stage only
};

/// Draws prior points (uniform when `prior` is empty, else local), evaluates
/// fitness, calibrates the temperature and fills the sampling weights.
FitnessPool build_training_pool(const Problem& problem, const std::optional<LocalPrior>& prior,
                                const PoolOptions& options, Rng& rng);

}  // namespace scoreopt
