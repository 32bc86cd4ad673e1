#pragma once

#include "scoreopt/problems.hpp"
#include "scoreopt/rng.hpp"
#include "scoreopt/sampling.hpp"
#include "scoreopt/schedule.hpp"
#include "scoreopt/scorefield.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace scoreopt {

struct GradConfig {
  std::size_t monte_size = 128;
  double lr = 1e-2;
  std::size_t max_steps = 200;
  double tolerance = 1e-4;  // infinity norm of the applied step
  std::size_t patience = 3;  // consecutive small steps before stopping
  double max_step = 1.0;     // per-step cap in units of sigma_t / alpha_t; 0 disables
  double max_gain = 1.0;     // lr is lowered to max_gain * sigma_t / alpha_t when larger; 0 disables
  void validate() const;
};

struct ExploreConfig {
  std::size_t keep_from = 4;
  std::size_t keep_to = 8;
  std::size_t explore_from = 4;
  std::size_t explore_to = 2;
  double kappa = 1.0;  // merge radius in units of sigma_t / alpha_t

  /// Linear in the scale index, rounded to the nearest integer.
  std::size_t keep_size(std::size_t scale, std::size_t count) const;
  std::size_t explore_time(std::size_t scale, std::size_t count) const;
  void validate() const;
};

// --- Monte Carlo gradients ------------------------------------------------

/// alpha_t * mean_eps score(alpha_t x + sigma_t eps) over the given noise
/// columns. Exactly zero where alpha_t = 0.
Vec mc_gradient(const ScoreField& field, const Vec& x, double t, const Mat& noise);
Vec mc_gradient(const ScoreField& field, const Vec& x, double t, std::size_t monte_size, Rng& rng);

/// mean_eps sigma_t * score(alpha_t x + sigma_t eps): the gradient above
/// rescaled by sigma_t / alpha_t, finite for every t in (0, 1].
Vec stable_mc_gradient(const ScoreField& field, const Vec& x, double t, const Mat& noise);
Vec stable_mc_gradient(const ScoreField& field, const Vec& x, double t, std::size_t monte_size, Rng& rng);

/// Mean posterior mean E[x | x_1 = eps] over an antithetic batch, clamped
/// to the working box.
Vec initialize_first_scale(const ScoreField& field, std::size_t monte_size, Rng& rng);

struct AscentTrace {
  std::vector<double> grad_norm;  // infinity norm of the stable gradient
  std::vector<double> step_norm;  // infinity norm of the applied step
  std::vector<double> fitness;    // raw fitness after each step (when a fitness is supplied)
  std::vector<Vec> grads;
  bool converged = false;
  std::size_t steps() const { return step_norm.size(); }
};

struct AscentResult {
  Vec x;
  AscentTrace trace;
};

using FitnessFn = std::function<std::optional<double>(const Vec&)>;

/// x <- clamp(x + lr * stable gradient), lr at most max_gain * sigma_t / alpha_t
/// (at gain 1 the step lands on the mean posterior mean), the step shortened to at most
/// max_step * sigma_t / alpha_t in max norm, until `patience` consecutive steps
/// are below tolerance (an exactly zero gradient stops at once) or
/// max_steps is reached.
AscentResult ascend_at_scale(const ScoreField& field, Vec x, double t, const GradConfig& config, Rng& rng,
                             const FitnessFn& fitness = {});

// --- quadrature oracle ----------------------------------------------------

/// Physicists' Gauss-Hermite rule (weight exp(-z^2)) via Golub-Welsch.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussHermite gauss_hermite(std::size_t n);

/// 1-D data density p(x) proportional to f on [lo, hi], pushed through the
/// interpolant by composite Simpson quadrature. Test and diagnostic oracle.
class QuadratureOracle final : public ScoreField {
 public:
  QuadratureOracle(const std::function<double(double)>& f, double lo, double hi, Interpolant s,
                   std::size_t intervals = 1u << 14, std::size_t hermite_nodes = 64);

  std::size_t dim() const override { return 1; }
  const Interpolant& interpolant() const override { return s_; }
  Mat score(const Mat& x_t, double t) const override;
  Mat posterior_mean(const Mat& x_t, double t) const override;

  /// log p_t(x_t) up to an additive constant.
  double log_density(double x_t, double t) const;
  double score_at(double x_t, double t) const;
  /// log P(x, t) = E_eps log p_t(alpha x + sigma eps) + const, expectation
  /// by Gauss-Hermite.
  double log_objective(double x, double t) const;

 private:
  struct Moments {
    double log_mass;  // log sum_j c_j f_j N(x_t; alpha u_j, sigma^2)
    double mean_u;    // posterior mean of u
  };
  Moments moments(double x_t, double t) const;

  std::vector<double> nodes_;
  std::vector<double> log_weights_;  // log(simpson weight * f)
  Interpolant s_;
  GaussHermite hermite_;
};

double quadrature_log_objective(const QuadratureOracle& oracle, double x, double t);

// --- parallel exploration -------------------------------------------------

struct Solution {
  Vec x;  // working coordinates
  double fitness = -std::numeric_limits<double>::infinity();  // raw; -inf when infeasible
  std::size_t id = 0;
  std::shared_ptr<const VectorFieldModel> model;  // field last trained for this solution
};

struct ExploreStats {
  std::size_t merged = 0;
  std::size_t pruned = 0;
  std::size_t spawned = 0;
};

/// Merge solutions closer than kappa sigma_t / alpha_t (max norm) into the
/// fitter one, keep the best `keep`, then append `explore` draws from
/// N(x*, (sqrt(2) sigma_t / alpha_t)^2 I) per survivor (uniform over the box
/// when that Gaussian is wider than the box).
std::vector<Solution> parallel_explore_step(std::vector<Solution> solutions, const Interpolant& s, double t,
                                            std::size_t keep, std::size_t explore, double kappa,
                                            const FitnessFn& fitness, Rng& rng, std::size_t& next_id,
                                            ExploreStats* stats = nullptr);

// --- Gaussian homotopy baseline -------------------------------------------

struct HomotopyEstimate {
  Vec grad;
  Vec variance;  // variance of each gradient component's estimator
};

/// E_{y ~ N(x, sigma^2 I)} [f(y) (y - x) / sigma^2] by antithetic Monte Carlo.
HomotopyEstimate gaussian_homotopy_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                                            double sigma, std::size_t sample_count, Rng& rng);

// --- full run -------------------------------------------------------------

enum class Phase { pool, train, ascend, explore, init };
const char* to_string(Phase p);

struct TraceRecord {
  std::size_t scale = 0;
  double t = 0.0;
  Phase phase = Phase::pool;
  std::size_t step = 0;
  std::size_t solution = 0;
  double fitness = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  double step_norm = std::numeric_limits<double>::quiet_NaN();
  double loss = std::numeric_limits<double>::quiet_NaN();
  double temp = std::numeric_limits<double>::quiet_NaN();
  double feasible = std::numeric_limits<double>::quiet_NaN();
  ExploreStats explore;       // explore rows only
  std::size_t solutions = 0;  // solution count after an explore row
  Vec x;     // working coordinates, when relevant
  Vec grad;  // ascent gradient
};

using TraceSink = std::function<void(const TraceRecord&)>;

struct RunSettings {
  std::size_t tn = 30;
  double t_end = 2e-3;
  std::size_t pn = 3;
  std::string interpolant = "linear";
  PoolOptions pool;
  double mass = 0.9;
  bool local_prior = true;
  TrainConfig train;
  std::size_t first_steps = 0;  // cold-start steps at t_0; 0 means train.steps
  GradConfig grad;
  std::optional<ExploreConfig> explore;
  std::uint64_t seed = 0;
  void validate() const;
};

struct ScaleSummary {
  std::size_t scale = 0;
  double t = 0.0;
  bool local = false;
  double prior_sd = 0.0;  // 0 for the uniform prior
  std::size_t solutions = 0;
  std::vector<AscentTrace> ascents;  // one per solution, scale >= 1
};

struct FinalSolution {
  Vec native;
  Vec normalized;
  double objective = 0.0;  // problem objective in native orientation
  double fitness = 0.0;    // maximization-oriented raw fitness
};

struct RunResult {
  std::vector<FinalSolution> solutions;  // best first
  std::vector<ScaleSummary> scales;
  TSequence schedule;
  std::shared_ptr<const VectorFieldModel> final_model;
};

/// The hierarchical loop: for each t_i build a fitness pool (uniform, or
/// local around each incumbent once i >= PN), fit the vector field at t_i,
/// initialize at i = 0 or ascend otherwise, then optionally explore.
RunResult run_optimization(const Problem& problem, const RunSettings& settings, const TraceSink& sink = {});

}  // namespace scoreopt
