#include "scoreopt/optimizer.hpp"

#include "scoreopt/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace scoreopt {

void GradConfig::validate() const {
  if (monte_size < 2 || monte_size % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "monte_size must be even and >= 2");
  if (!(lr > 0.0)) throw Error(ErrorCode::invalid_argument, "ascent learning rate must be positive");
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::invalid_argument, "ascent tolerance must be >= 0");
  if (patience == 0) throw Error(ErrorCode::invalid_argument, "ascent patience must be >= 1");
  if (!(max_step >= 0.0) || !(max_gain >= 0.0)) throw Error(ErrorCode::invalid_argument, "ascent caps must be >= 0");
}

namespace {

std::size_t interpolate_count(std::size_t from, std::size_t to, std::size_t scale, std::size_t count) {
  if (count == 0) return to;
  const double frac = std::min(1.0, static_cast<double>(scale) / static_cast<double>(count));
  const double v = static_cast<double>(from) + (static_cast<double>(to) - static_cast<double>(from)) * frac;
  return static_cast<std::size_t>(std::llround(v));
}

}  // namespace

std::size_t ExploreConfig::keep_size(std::size_t scale, std::size_t count) const {
  return std::max<std::size_t>(1, interpolate_count(keep_from, keep_to, scale, count));
}

std::size_t ExploreConfig::explore_time(std::size_t scale, std::size_t count) const {
  return interpolate_count(explore_from, explore_to, scale, count);
}

void ExploreConfig::validate() const {
  if (keep_from == 0 || keep_to == 0) throw Error(ErrorCode::invalid_argument, "keep size must be >= 1");
  if (!(kappa >= 0.0)) throw Error(ErrorCode::invalid_argument, "merge factor must be >= 0");
}

// --- gradients ------------------------------------------------------------

namespace {

Mat diffuse(const Vec& x, double alpha, double sigma, const Mat& noise) {
  Mat x_t = sigma * noise;
  x_t.colwise() += alpha * x;
  return x_t;
}

// Sum over columns taken in adjacent (eps, -eps) pairs, divided by count.
Vec pair_mean(const Mat& values) {
  Vec sum = Vec::Zero(values.rows());
  Eigen::Index j = 0;
  for (; j + 1 < values.cols(); j += 2) sum += values.col(j) + values.col(j + 1);
  if (j < values.cols()) sum += values.col(j);
  return sum / static_cast<double>(values.cols());
}

void check_finite(const Mat& values, const Mat& noise, const char* what) {
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    if (!values.col(j).allFinite()) {
      std::ostringstream msg;
      msg << what << " produced a non-finite score at eps = [" << noise.col(j).transpose() << "]";
      throw Error(ErrorCode::non_finite, msg.str());
    }
}

void check_noise(const Vec& x, const Mat& noise) {
  if (noise.rows() != x.size() || noise.cols() == 0)
    throw Error(ErrorCode::invalid_argument, "noise batch does not match the state dimension");
}

}  // namespace

Vec mc_gradient(const ScoreField& field, const Vec& x, double t, const Mat& noise) {
  check_noise(x, noise);
  const auto p = field.interpolant().at(t);
  const Mat scores = field.score(diffuse(x, p.alpha, p.sigma, noise), t);
  check_finite(scores, noise, "mc_gradient");
  return p.alpha * pair_mean(scores);
}

Vec mc_gradient(const ScoreField& field, const Vec& x, double t, std::size_t monte_size, Rng& rng) {
  return mc_gradient(field, x, t, antithetic_noise(monte_size, static_cast<std::size_t>(x.size()), rng));
}

Vec stable_mc_gradient(const ScoreField& field, const Vec& x, double t, const Mat& noise) {
  check_noise(x, noise);
  const auto p = field.interpolant().at(t);
  const Mat scaled = field.scaled_score(diffuse(x, p.alpha, p.sigma, noise), t);
  check_finite(scaled, noise, "stable_mc_gradient");
  return pair_mean(scaled);
}

Vec stable_mc_gradient(const ScoreField& field, const Vec& x, double t, std::size_t monte_size, Rng& rng) {
  return stable_mc_gradient(field, x, t, antithetic_noise(monte_size, static_cast<std::size_t>(x.size()), rng));
}

Vec initialize_first_scale(const ScoreField& field, std::size_t monte_size, Rng& rng) {
  const Mat eps = antithetic_noise(monte_size, field.dim(), rng);
  const auto p = field.interpolant().at(1.0);
  const Mat m = field.posterior_mean(diffuse(Vec::Zero(static_cast<Eigen::Index>(field.dim())), p.alpha, p.sigma, eps), 1.0);
  const Vec x = pair_mean(m);
  if (!x.allFinite()) throw Error(ErrorCode::non_finite, "first-scale initialization is not finite");
  return x.cwiseMax(-1.0).cwiseMin(1.0);
}

AscentResult ascend_at_scale(const ScoreField& field, Vec x, double t, const GradConfig& config, Rng& rng,
                             const FitnessFn& fitness) {
  config.validate();
  AscentResult out;
  std::size_t quiet = 0;
  const auto p = field.interpolant().at(t);
  const double cap = config.max_step > 0.0 && p.alpha > 0.0 ? config.max_step * p.sigma / p.alpha
                                                            : std::numeric_limits<double>::infinity();
  // The step is lr * alpha/sigma * (mean posterior mean - x); a gain above 2
  // diverges at small t.
  const double lr = config.max_gain > 0.0 && p.alpha > 0.0 ? std::min(config.lr, config.max_gain * p.sigma / p.alpha)
                                                          : config.lr;
  for (std::size_t step = 0; step < config.max_steps; ++step) {
    const Vec g = stable_mc_gradient(field, x, t, config.monte_size, rng);
    Vec delta = lr * g;
    const double len = delta.lpNorm<Eigen::Infinity>();
    if (len > cap) delta *= cap / len;
    const Vec next = (x + delta).cwiseMax(-1.0).cwiseMin(1.0);
    const double moved = (next - x).lpNorm<Eigen::Infinity>();
    x = next;
    out.trace.grad_norm.push_back(g.lpNorm<Eigen::Infinity>());
    out.trace.step_norm.push_back(moved);
    out.trace.grads.push_back(g);
    if (fitness) {
      const auto f = fitness(x);
      out.trace.fitness.push_back(f ? *f : -std::numeric_limits<double>::infinity());
    }
    if (g.isZero(0.0)) {
      out.trace.converged = true;
      break;
    }
    quiet = moved < config.tolerance ? quiet + 1 : 0;
    if (quiet >= config.patience) {
      out.trace.converged = true;
      break;
    }
  }
  out.x = std::move(x);
  return out;
}

// --- quadrature -----------------------------------------------------------

GaussHermite gauss_hermite(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "Gauss-Hermite needs at least one node");
  Mat jacobi = Mat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const double b = std::sqrt(static_cast<double>(k) / 2.0);
    jacobi(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k)) = b;
    jacobi(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k - 1)) = b;
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(jacobi);
  GaussHermite gh;
  gh.nodes.resize(n);
  gh.weights.resize(n);
  const double mu0 = std::sqrt(std::numbers::pi);
  for (std::size_t k = 0; k < n; ++k) {
    gh.nodes[k] = eig.eigenvalues()[static_cast<Eigen::Index>(k)];
    const double v = eig.eigenvectors()(0, static_cast<Eigen::Index>(k));
    gh.weights[k] = mu0 * v * v;
  }
  return gh;
}

QuadratureOracle::QuadratureOracle(const std::function<double(double)>& f, double lo, double hi, Interpolant s,
                                   std::size_t intervals, std::size_t hermite_nodes)
    : s_(std::move(s)), hermite_(gauss_hermite(hermite_nodes)) {
  if (!(lo < hi)) throw Error(ErrorCode::invalid_argument, "quadrature interval is empty");
  if (intervals < 2 || intervals % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "Simpson rule needs an even number of intervals");
  const double h = (hi - lo) / static_cast<double>(intervals);
  nodes_.resize(intervals + 1);
  log_weights_.resize(intervals + 1);
  for (std::size_t j = 0; j <= intervals; ++j) {
    const double u = lo + h * static_cast<double>(j);
    const double c = (j == 0 || j == intervals) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    const double fu = f(u);
    if (!(fu >= 0.0)) throw Error(ErrorCode::invalid_argument, "quadrature density must be non-negative");
    nodes_[j] = u;
    log_weights_[j] = std::log(c * h / 3.0) + std::log(fu);
  }
}

QuadratureOracle::Moments QuadratureOracle::moments(double x_t, double t) const {
  const auto p = s_.at(t);
  if (!(p.sigma > 0.0)) throw Error(ErrorCode::degenerate_kernel, "quadrature oracle needs sigma(t) > 0");
  const double inv2v = 0.5 / (p.sigma * p.sigma);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    const double d = x_t - p.alpha * nodes_[j];
    top = std::max(top, log_weights_[j] - d * d * inv2v);
  }
  double sum = 0.0, first = 0.0;
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    const double d = x_t - p.alpha * nodes_[j];
    const double w = std::exp(log_weights_[j] - d * d * inv2v - top);
    sum += w;
    first += w * nodes_[j];
  }
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * p.sigma * p.sigma);
  return {top + std::log(sum) + log_norm, first / sum};
}

double QuadratureOracle::log_density(double x_t, double t) const { return moments(x_t, t).log_mass; }

double QuadratureOracle::score_at(double x_t, double t) const {
  const auto p = s_.at(t);
  const Moments m = moments(x_t, t);
  return -(x_t - p.alpha * m.mean_u) / (p.sigma * p.sigma);
}

Mat QuadratureOracle::score(const Mat& x_t, double t) const {
  if (x_t.rows() != 1) throw Error(ErrorCode::invalid_argument, "quadrature oracle is one-dimensional");
  Mat out(1, x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) out(0, j) = score_at(x_t(0, j), t);
  return out;
}

Mat QuadratureOracle::posterior_mean(const Mat& x_t, double t) const {
  if (x_t.rows() != 1) throw Error(ErrorCode::invalid_argument, "quadrature oracle is one-dimensional");
  Mat out(1, x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) out(0, j) = moments(x_t(0, j), t).mean_u;
  return out;
}

double QuadratureOracle::log_objective(double x, double t) const {
  const auto p = s_.at(t);
  double acc = 0.0;
  for (std::size_t k = 0; k < hermite_.nodes.size(); ++k) {
    const double eps = std::numbers::sqrt2 * hermite_.nodes[k];
    acc += hermite_.weights[k] * log_density(p.alpha * x + p.sigma * eps, t);
  }
  return acc / std::sqrt(std::numbers::pi);
}

double quadrature_log_objective(const QuadratureOracle& oracle, double x, double t) {
  return oracle.log_objective(x, t);
}

// --- exploration ----------------------------------------------------------

std::vector<Solution> parallel_explore_step(std::vector<Solution> solutions, const Interpolant& s, double t,
                                            std::size_t keep, std::size_t explore, double kappa,
                                            const FitnessFn& fitness, Rng& rng, std::size_t& next_id,
                                            ExploreStats* stats) {
  if (solutions.empty()) throw Error(ErrorCode::invalid_argument, "exploration needs at least one solution");
  if (keep == 0) throw Error(ErrorCode::invalid_argument, "keep size must be >= 1");
  const auto p = s.at(t);
  const double ratio = p.alpha > 0.0 ? p.sigma / p.alpha : std::numeric_limits<double>::infinity();
  const double radius = kappa * ratio;

  std::stable_sort(solutions.begin(), solutions.end(),
                   [](const Solution& a, const Solution& b) { return a.fitness > b.fitness; });
  std::vector<Solution> kept;
  ExploreStats local;
  for (auto& cand : solutions) {
    const bool close = std::any_of(kept.begin(), kept.end(), [&](const Solution& k) {
      return (k.x - cand.x).lpNorm<Eigen::Infinity>() < radius;
    });
    if (close) {
      ++local.merged;
      continue;
    }
    if (kept.size() >= keep) {
      ++local.pruned;
      continue;
    }
    kept.push_back(std::move(cand));
  }

  const double sd = std::numbers::sqrt2 * ratio;
  const bool wide = !(std::isfinite(sd)) || two_sided_quantile(0.9) * sd >= 1.0;
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  const std::size_t survivors = kept.size();
  for (std::size_t k = 0; k < survivors; ++k) {
    for (std::size_t e = 0; e < explore; ++e) {
      Solution child;
      child.x = kept[k].x;
      for (Eigen::Index i = 0; i < child.x.size(); ++i)
        child.x[i] = wide ? uniform(rng) : std::clamp(kept[k].x[i] + sd * normal(rng), -1.0, 1.0);
      const auto f = fitness ? fitness(child.x) : std::optional<double>{};
      child.fitness = f ? *f : -std::numeric_limits<double>::infinity();
      child.id = next_id++;
      child.model = kept[k].model;
      kept.push_back(std::move(child));
      ++local.spawned;
    }
  }
  if (stats) *stats = local;
  return kept;
}

// --- homotopy -------------------------------------------------------------

HomotopyEstimate gaussian_homotopy_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                                            double sigma, std::size_t sample_count, Rng& rng) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::invalid_argument, "homotopy sigma must be positive");
  if (sample_count < 2 || sample_count % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "homotopy sample count must be even and >= 2");
  const std::size_t pairs = sample_count / 2;
  std::normal_distribution<double> normal;
  const auto n = x.size();
  Vec sum = Vec::Zero(n), sq = Vec::Zero(n), z(n);
  for (std::size_t k = 0; k < pairs; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
    // y = x +- sigma z; (y - x) / sigma^2 = +- z / sigma.
    const double diff = f(x + sigma * z) - f(x - sigma * z);
    const Vec term = (diff / (2.0 * sigma)) * z;
    sum += term;
    sq += term.cwiseProduct(term);
  }
  const double m = static_cast<double>(pairs);
  HomotopyEstimate est;
  est.grad = sum / m;
  const Vec var = (sq / m - est.grad.cwiseProduct(est.grad)) * (m / std::max(m - 1.0, 1.0));
  est.variance = var / m;
  return est;
}

// --- full run -------------------------------------------------------------

const char* to_string(Phase p) {
  switch (p) {
    case Phase::pool: return "pool";
    case Phase::train: return "train";
    case Phase::ascend: return "ascend";
    case Phase::explore: return "explore";
    case Phase::init: return "init";
  }
  return "?";
}

void RunSettings::validate() const {
  if (tn == 0) throw Error(ErrorCode::invalid_argument, "TN must be >= 1");
  if (!(mass > 0.0 && mass < 1.0)) throw Error(ErrorCode::invalid_argument, "prior mass must lie in (0, 1)");
  if (pool.pool_size < 2) throw Error(ErrorCode::invalid_argument, "pool size must be >= 2");
  train.validate();
  grad.validate();
  if (explore) explore->validate();
}

namespace {

enum StreamTag : std::uint64_t { kPoolStream = 1, kTrainStream, kInitStream, kAscentStream, kExploreStream };

std::optional<double> safe_fitness(const Problem& problem, const Vec& x) { return raw_fitness(problem, x); }

}  // namespace

RunResult run_optimization(const Problem& problem, const RunSettings& settings, const TraceSink& sink) {
  problem.validate();
  settings.validate();
  const Interpolant interp = interpolant_by_name(settings.interpolant);
  RunResult result;
  result.schedule = build_t_sequence(settings.tn, settings.t_end);
  const auto& ts = result.schedule.values;
  const FitnessFn fitness = [&problem](const Vec& x) { return safe_fitness(problem, x); };
  const double z_mass = two_sided_quantile(settings.mass);

  auto emit = [&](TraceRecord r) {
    if (sink) sink(r);
  };

  std::vector<Solution> solutions;
  std::shared_ptr<const VectorFieldModel> shared;
  std::size_t next_id = 0;

  for (std::size_t i = 0; i <= settings.tn; ++i) {
    const double t = ts[i];
    ScaleSummary summary;
    summary.scale = i;
    summary.t = t;
    try {
      // Local prior width comes from the scale PN steps back.
      bool local = false;
      double prior_t = 1.0;
      if (settings.local_prior && i >= settings.pn && !solutions.empty()) {
        prior_t = ts[i - settings.pn];
        const auto pp = interp.at(prior_t);
        local = pp.alpha > 0.0 && z_mass * std::numbers::sqrt2 * pp.sigma / pp.alpha < 1.0;
      }
      summary.local = local;

      if (!local) {
        Rng pool_rng = derive_rng(settings.seed, {kPoolStream, i});
        const FitnessPool pool = build_training_pool(problem, std::nullopt, settings.pool, pool_rng);
        emit({.scale = i, .t = t, .phase = Phase::pool, .temp = pool.temp, .feasible = pool.feasible_fraction()});

        std::optional<VectorFieldModel> init;
        if (shared) init = *shared;
        else if (!solutions.empty() && solutions.front().model) init = *solutions.front().model;
        TrainConfig cfg = settings.train;
        if (!init && settings.first_steps > 0) cfg.steps = settings.first_steps;
        Rng train_rng = derive_rng(settings.seed, {kTrainStream, i});
        TrainResult trained = train_flow_matching(pool, t, cfg, init, interp, train_rng);
        emit({.scale = i, .t = t, .phase = Phase::train, .step = trained.report.steps, .loss = trained.report.final_loss});
        shared = std::make_shared<const VectorFieldModel>(std::move(trained.model));
        for (auto& s : solutions) s.model = shared;
      } else {
        shared.reset();
        const std::size_t k = solutions.size();
        PoolOptions opts = settings.pool;
        opts.pool_size = std::max<std::size_t>(std::min<std::size_t>(settings.pool.pool_size, 4096), settings.pool.pool_size / k);
        TrainConfig cfg = settings.train;
        cfg.batch = std::max<std::size_t>(std::min<std::size_t>(settings.train.batch, 128), settings.train.batch / k);
        for (std::size_t s = 0; s < k; ++s) {
          Solution& sol = solutions[s];
          const LocalPrior prior = make_local_prior(sol.x, interp, prior_t, settings.mass);
          summary.prior_sd = prior.sd;
          Rng pool_rng = derive_rng(settings.seed, {kPoolStream, i, sol.id});
          const FitnessPool pool = build_training_pool(problem, prior, opts, pool_rng);
          emit({.scale = i, .t = t, .phase = Phase::pool, .solution = sol.id, .temp = pool.temp,
                .feasible = pool.feasible_fraction(), .x = sol.x});
          std::optional<VectorFieldModel> init;
          if (sol.model) init = *sol.model;
          Rng train_rng = derive_rng(settings.seed, {kTrainStream, i, sol.id});
          TrainResult trained = train_flow_matching(pool, t, cfg, init, interp, train_rng);
          emit({.scale = i, .t = t, .phase = Phase::train, .step = trained.report.steps, .solution = sol.id,
                .loss = trained.report.final_loss});
          sol.model = std::make_shared<const VectorFieldModel>(std::move(trained.model));
        }
      }

      if (i == 0) {
        Rng init_rng = derive_rng(settings.seed, {kInitStream});
        Solution first;
        first.x = initialize_first_scale(ModelField(*shared), settings.grad.monte_size, init_rng);
        const auto f = fitness(first.x);
        first.fitness = f ? *f : -std::numeric_limits<double>::infinity();
        first.id = next_id++;
        first.model = shared;
        emit({.scale = i, .t = t, .phase = Phase::init, .solution = first.id, .fitness = first.fitness, .x = first.x});
        solutions.push_back(std::move(first));
      } else {
        for (auto& sol : solutions) {
          Rng asc_rng = derive_rng(settings.seed, {kAscentStream, i, sol.id});
          AscentResult r = ascend_at_scale(ModelField(*sol.model), sol.x, t, settings.grad, asc_rng, fitness);
          for (std::size_t k = 0; k < r.trace.steps(); ++k) {
            TraceRecord rec{.scale = i, .t = t, .phase = Phase::ascend, .step = k, .solution = sol.id};
            rec.fitness = r.trace.fitness[k];
            rec.grad_norm = r.trace.grad_norm[k];
            rec.step_norm = r.trace.step_norm[k];
            rec.grad = r.trace.grads[k];
            if (k + 1 == r.trace.steps()) rec.x = r.x;
            emit(rec);
          }
          sol.x = r.x;
          sol.fitness = r.trace.fitness.empty() ? sol.fitness : r.trace.fitness.back();
          summary.ascents.push_back(std::move(r.trace));
        }
      }

      if (settings.explore) {
        const ExploreConfig& ex = *settings.explore;
        const std::size_t spawn = i < settings.tn ? ex.explore_time(i, settings.tn) : 0;
        Rng ex_rng = derive_rng(settings.seed, {kExploreStream, i});
        ExploreStats stats;
        solutions = parallel_explore_step(std::move(solutions), interp, t, ex.keep_size(i, settings.tn), spawn,
                                          ex.kappa, fitness, ex_rng, next_id, &stats);
        TraceRecord rec{.scale = i, .t = t, .phase = Phase::explore};
        rec.explore = stats;
        rec.solutions = solutions.size();
        emit(rec);
      }
    } catch (const RunAborted&) {
      throw;
    } catch (const Error& e) {
      throw RunAborted(e.code(), i, "scale " + std::to_string(i) + " (t = " + std::to_string(t) + "): " + e.what());
    }
    summary.solutions = solutions.size();
    result.scales.push_back(std::move(summary));
  }

  std::stable_sort(solutions.begin(), solutions.end(),
                   [](const Solution& a, const Solution& b) { return a.fitness > b.fitness; });
  const AffineMap map = problem.map();
  for (const auto& s : solutions) {
    FinalSolution f;
    f.normalized = s.x;
    f.native = map.denormalize(s.x);
    f.fitness = s.fitness;
    f.objective = problem.objective(f.native);
    result.solutions.push_back(std::move(f));
  }
  result.final_model = solutions.empty() ? shared : solutions.front().model;
  return result;
}

}  // namespace scoreopt
