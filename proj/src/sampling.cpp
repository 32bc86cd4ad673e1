#include "scoreopt/sampling.hpp"

#include "scoreopt/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace scoreopt {

namespace {

std::vector<double> feasible_values(std::span<const std::optional<double>> raw) {
  std::vector<double> out;
  out.reserve(raw.size());
  for (const auto& r : raw)
    if (r) out.push_back(*r);
  if (out.empty()) throw Error(ErrorCode::empty_feasible, "pool has no feasible point");
  return out;
}

constexpr double kLogTempLo = -30.0;
constexpr double kLogTempHi = 30.0;

}  // namespace

double FitnessPool::feasible_fraction() const {
  if (raw.empty()) return 0.0;
  const auto n = std::count_if(raw.begin(), raw.end(), [](const auto& r) { return r.has_value(); });
  return static_cast<double>(n) / static_cast<double>(raw.size());
}

double tp99(std::span<const std::optional<double>> raw) {
  std::vector<double> v = feasible_values(raw);
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(v.size())));
  const std::size_t k = std::max<std::size_t>(rank, 1) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

std::vector<double> transform_fitness(std::span<const std::optional<double>> raw, double temp) {
  if (!(temp > 0.0)) throw Error(ErrorCode::invalid_argument, "temperature must be positive");
  const double top = tp99(raw);
  std::vector<double> w(raw.size(), 0.0);
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i]) w[i] = std::exp(std::min((*raw[i] - top) / temp, 700.0));
  return w;
}

double spread_statistic(std::span<const std::optional<double>> raw, double temp) {
  const std::vector<double> v = feasible_values(raw);
  const double top = *std::max_element(v.begin(), v.end());
  // Infeasible entries are zeros of p and still count in len(p).
  const auto len = static_cast<double>(raw.size());
  double sum = 0.0;
  for (double x : v) sum += std::exp((x - top) / temp);
  double sq = 0.0;
  const double mean = 1.0 / len;
  for (double x : v) {
    const double p = std::exp((x - top) / temp) / sum;
    sq += (p - mean) * (p - mean);
  }
  sq += (len - static_cast<double>(v.size())) * mean * mean;
  return std::sqrt(sq / len) * len;
}

TempCalibration calibrate_temp(std::span<const std::optional<double>> raw, double target, double tolerance) {
  const std::vector<double> v = feasible_values(raw);
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  TempCalibration out;
  if (*lo_it == *hi_it) {
    // Temperature has no effect; with no infeasible entries p is uniform.
    out.temp = std::exp(kLogTempHi);
    out.statistic = v.size() == raw.size() ? 0.0 : spread_statistic(raw, out.temp);
    out.flat = true;
    return out;
  }

  auto in_window = [&](double s) { return std::abs(s - target) <= tolerance; };
  double lo = kLogTempLo;
  double hi = kLogTempHi;
  const double s_lo = spread_statistic(raw, std::exp(lo));
  const double s_hi = spread_statistic(raw, std::exp(hi));
  if (s_lo < target - tolerance) {
    out.temp = std::exp(lo);
    out.statistic = s_lo;
    out.on_target = in_window(s_lo);
    return out;
  }
  if (s_hi > target + tolerance) {
    out.temp = std::exp(hi);
    out.statistic = s_hi;
    out.on_target = in_window(s_hi);
    return out;
  }
  double mid = 0.5 * (lo + hi);
  double s_mid = spread_statistic(raw, std::exp(mid));
  for (int it = 0; it < 200 && !in_window(s_mid); ++it) {
    // statistic decreases as the temperature grows
    if (s_mid > target)
      lo = mid;
    else
      hi = mid;
    mid = 0.5 * (lo + hi);
    s_mid = spread_statistic(raw, std::exp(mid));
  }
  out.temp = std::exp(mid);
  out.statistic = s_mid;
  out.on_target = in_window(s_mid);
  return out;
}

namespace {

void fill_probs(FitnessPool& pool) {
  double sum = 0.0;
  for (double w : pool.weights) sum += w;
  if (!(sum > 0.0) || !std::isfinite(sum))
    throw Error(ErrorCode::empty_feasible, "pool weights sum to zero");
  pool.probs.resize(pool.weights.size());
  for (std::size_t i = 0; i < pool.weights.size(); ++i) pool.probs[i] = pool.weights[i] / sum;
}

}  // namespace

FitnessPool make_pool(Mat points, std::vector<std::optional<double>> raw, double c_pstd) {
  if (static_cast<std::size_t>(points.cols()) != raw.size())
    throw Error(ErrorCode::invalid_argument, "pool points and fitness sizes differ");
  FitnessPool pool;
  pool.points = std::move(points);
  pool.raw = std::move(raw);
  const TempCalibration cal = calibrate_temp(pool.raw, c_pstd);
  pool.temp = cal.temp;
  pool.flat = cal.flat;
  pool.weights = transform_fitness(pool.raw, pool.temp);
  fill_probs(pool);
  return pool;
}

FitnessPool make_weighted_pool(Mat points, std::vector<double> weights) {
  if (static_cast<std::size_t>(points.cols()) != weights.size())
    throw Error(ErrorCode::invalid_argument, "pool points and weight sizes differ");
  FitnessPool pool;
  pool.points = std::move(points);
  pool.raw.resize(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw Error(ErrorCode::invalid_argument, "negative pool weight");
    if (weights[i] > 0.0) pool.raw[i] = std::log(weights[i]);
  }
  pool.temp = 1.0;
  pool.weights = transform_fitness(pool.raw, 1.0);
  fill_probs(pool);
  return pool;
}

std::vector<std::size_t> systematic_resample(std::span<const double> probs, std::size_t count, Rng& rng) {
  if (probs.empty()) throw Error(ErrorCode::empty_feasible, "resampling from an empty pool");
  std::vector<std::size_t> out;
  out.reserve(count);
  if (count == 0) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double step = 1.0 / static_cast<double>(count);
  double pos = u(rng) * step;
  double cum = probs[0];
  std::size_t i = 0;
  const std::size_t last = probs.size() - 1;
  for (std::size_t k = 0; k < count; ++k) {
    while (pos >= cum && i < last) cum += probs[++i];
    // Rounding can leave the tail of cum just below 1; never land on a zero weight.
    std::size_t pick = i;
    while (probs[pick] == 0.0 && pick > 0) --pick;
    out.push_back(pick);
    pos += step;
  }
  return out;
}

std::vector<std::size_t> fitness_resample(const FitnessPool& pool, std::size_t count, Rng& rng) {
  return systematic_resample(pool.probs, count, rng);
}

Mat uniform_prior(std::size_t count, std::size_t dim, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat pts(dim, count);
  for (Eigen::Index j = 0; j < pts.cols(); ++j)
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts(i, j) = u(rng);
  return pts;
}

double two_sided_quantile(double mass) {
  if (!(mass > 0.0 && mass < 1.0)) throw Error(ErrorCode::invalid_argument, "mass must lie in (0, 1)");
  return std::numbers::sqrt2 * boost::math::erf_inv(mass);
}

LocalPrior make_local_prior(const Vec& center, const Interpolant& s, double t, double mass) {
  const double alpha = s.alpha(t);
  const double sigma = s.sigma(t);
  if (!(alpha > 0.0)) throw Error(ErrorCode::degenerate_kernel, "local prior needs alpha(t) > 0");
  LocalPrior prior;
  prior.center = center;
  prior.sd = std::numbers::sqrt2 * sigma / alpha;
  prior.mass = mass;
  prior.radius = two_sided_quantile(mass) * prior.sd;
  return prior;
}

Mat local_prior_sample(const LocalPrior& prior, std::size_t count, Rng& rng) {
  constexpr int kRetries = 16;
  std::normal_distribution<double> normal;
  const auto dim = prior.center.size();
  Mat pts(dim, count);
  for (Eigen::Index j = 0; j < pts.cols(); ++j)
    for (Eigen::Index i = 0; i < dim; ++i) {
      double v = prior.center[i] + prior.sd * normal(rng);
      for (int r = 0; r < kRetries && (v < -1.0 || v > 1.0); ++r)
        v = prior.center[i] + prior.sd * normal(rng);
      pts(i, j) = std::clamp(v, -1.0, 1.0);
    }
  return pts;
}

Vec debias_weights(const Vec& x, const LocalPrior& prior) {
  Vec w = Vec::Ones(x.size());
  if (!(prior.sd > 0.0)) return w;
  const double flat = prior.mass / (2.0 * prior.radius);
  const double norm = 1.0 / (prior.sd * std::sqrt(2.0 * std::numbers::pi));
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double dx = x[d] - prior.center[d];
    if (std::abs(dx) <= prior.radius) {
      const double z = dx / prior.sd;
      w[d] = flat / (norm * std::exp(-0.5 * z * z));
    }
  }
  return w;
}

Mat antithetic_noise(std::size_t monte_size, std::size_t dim, Rng& rng) {
  if (monte_size == 0 || monte_size % 2 != 0)
    throw Error(ErrorCode::invalid_argument, "antithetic batch size must be even and positive");
  std::normal_distribution<double> normal;
  Mat eps(dim, monte_size);
  for (Eigen::Index j = 0; j < eps.cols(); j += 2) {
    for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = normal(rng);
    eps.col(j + 1) = -eps.col(j);
  }
  return eps;
}

FitnessPool build_training_pool(const Problem& problem, const std::optional<LocalPrior>& prior,
                                const PoolOptions& options, Rng& rng) {
  if (options.pool_size == 0) throw Error(ErrorCode::invalid_argument, "pool size must be positive");
  Mat pts = prior ? local_prior_sample(*prior, options.pool_size, rng)
                  : uniform_prior(options.pool_size, problem.dim, rng);
  std::vector<std::optional<double>> raw(options.pool_size);
  for (std::size_t j = 0; j < options.pool_size; ++j)
    raw[j] = raw_fitness(problem, pts.col(static_cast<Eigen::Index>(j)));
  FitnessPool pool = make_pool(std::move(pts), std::move(raw), options.c_pstd);
  if (prior && options.debias) {
    pool.loss_weights.resize(pool.points.rows(), pool.points.cols());
    for (Eigen::Index j = 0; j < pool.points.cols(); ++j)
      pool.loss_weights.col(j) = debias_weights(pool.points.col(j), *prior);
  }
  return pool;
}

}  // namespace scoreopt
