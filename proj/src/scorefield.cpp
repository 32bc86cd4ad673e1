#include "scoreopt/scorefield.hpp"

#include "scoreopt/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace scoreopt {

// --- conversions ----------------------------------------------------------

namespace {

void check_same_shape(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::invalid_argument, "batch shape mismatch");
}

}  // namespace

Mat score_from_velocity(const Interpolant& s, const Mat& v, const Mat& x_t, double t) {
  check_same_shape(v, x_t);
  const auto p = s.at(t);
  const double den = p.dalpha * p.sigma - p.alpha * p.dsigma;
  if (!(p.sigma > 0.0) || den == 0.0)
    throw Error(ErrorCode::singular_scale, "score from velocity is singular at t = " + std::to_string(t));
  return (p.alpha * v - p.dalpha * x_t) / (p.sigma * den);
}

Mat score_from_posterior_mean(const Interpolant& s, const Mat& m, const Mat& x_t, double t) {
  check_same_shape(m, x_t);
  const auto p = s.at(t);
  if (!(p.alpha > 0.0))
    throw Error(ErrorCode::singular_scale, "posterior-mean form needs alpha(t) > 0; use score_from_velocity");
  if (!(p.sigma > 0.0)) throw Error(ErrorCode::singular_scale, "posterior-mean form needs sigma(t) > 0");
  return (p.alpha / (p.sigma * p.sigma)) * (m - x_t / p.alpha);
}

Mat posterior_mean(const Interpolant& s, const Mat& v, const Mat& x_t, double t) {
  check_same_shape(v, x_t);
  const auto p = s.at(t);
  const double den = p.dalpha * p.sigma - p.alpha * p.dsigma;
  if (den == 0.0) throw Error(ErrorCode::singular_scale, "posterior mean is singular at t = " + std::to_string(t));
  return (p.sigma * v - p.dsigma * x_t) / den;
}

Mat velocity_from_posterior_mean(const Interpolant& s, const Mat& m, const Mat& x_t, double t) {
  check_same_shape(m, x_t);
  const auto p = s.at(t);
  if (!(p.sigma > 0.0)) throw Error(ErrorCode::singular_scale, "velocity needs sigma(t) > 0");
  return p.dalpha * m + (p.dsigma / p.sigma) * (x_t - p.alpha * m);
}

Mat ScoreField::scaled_score(const Mat& x_t, double t) const {
  return interpolant().sigma(t) * score(x_t, t);
}

Mat ScoreField::posterior_mean(const Mat& x_t, double t) const {
  const auto p = interpolant().at(t);
  if (!(p.alpha > 0.0)) throw Error(ErrorCode::singular_scale, "Tweedie posterior mean needs alpha(t) > 0");
  return (x_t + (p.sigma * p.sigma) * score(x_t, t)) / p.alpha;
}

Mat ScoreField::velocity(const Mat& x_t, double t) const {
  return velocity_from_posterior_mean(interpolant(), posterior_mean(x_t, t), x_t, t);
}

// --- network --------------------------------------------------------------

std::size_t MlpSpec::parameter_count() const {
  std::size_t count = 0;
  std::size_t in = input_width();
  for (std::size_t h : hidden) {
    count += h * in + h;
    in = h;
  }
  return count + dim * in + dim;
}

Standardizer Standardizer::identity(std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(dim);
  return {Vec::Zero(n), Vec::Ones(n), Vec::Zero(n), Vec::Ones(n)};
}

Vec time_embedding(double t, std::size_t width) {
  Vec e(static_cast<Eigen::Index>(width));
  const std::size_t half = width / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::pow(1000.0, static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(half, 1)));
    e[static_cast<Eigen::Index>(k)] = std::sin(freq * t);
    e[static_cast<Eigen::Index>(half + k)] = std::cos(freq * t);
  }
  if (width % 2 != 0) e[static_cast<Eigen::Index>(width - 1)] = t;
  return e;
}

namespace {

void validate_spec(const MlpSpec& spec) {
  if (spec.dim == 0) throw Error(ErrorCode::invalid_argument, "model dimension must be positive");
  for (std::size_t h : spec.hidden)
    if (h == 0) throw Error(ErrorCode::invalid_argument, "hidden layer width must be positive");
}

// Walks the flat parameter vector layer by layer.
template <class Fn>
void for_each_layer(const MlpSpec& spec, Fn&& fn) {
  std::size_t offset = 0;
  std::size_t in = spec.input_width();
  const std::size_t layers = spec.hidden.size() + 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t out = l + 1 < layers ? spec.hidden[l] : spec.dim;
    fn(l, offset, out, in);
    offset += out * in + out;
    in = out;
  }
}

double activate(Activation a, double z) {
  if (a == Activation::tanh) return std::tanh(z);
  return z / (1.0 + std::exp(-z));
}

double activate_grad(Activation a, double z) {
  if (a == Activation::tanh) {
    const double th = std::tanh(z);
    return 1.0 - th * th;
  }
  const double sg = 1.0 / (1.0 + std::exp(-z));
  return sg * (1.0 + z * (1.0 - sg));
}

struct Forward {
  std::vector<Mat> pre;   // pre-activations of hidden layers
  std::vector<Mat> post;  // post[0] = input, post[l + 1] = act(pre[l])
  Mat out;                // standardized output
};

Forward run_forward(const MlpSpec& spec, const Vec& params, const Standardizer& norm, const Mat& x_t, double t) {
  if (static_cast<std::size_t>(x_t.rows()) != spec.dim)
    throw Error(ErrorCode::invalid_argument, "velocity input has the wrong dimension");
  const Eigen::Index batch = x_t.cols();
  Forward f;
  Mat input(static_cast<Eigen::Index>(spec.input_width()), batch);
  input.topRows(static_cast<Eigen::Index>(spec.dim)) =
      ((x_t.colwise() - norm.in_shift).array().colwise() / norm.in_scale.array()).matrix();
  if (spec.time_embed > 0) {
    const Vec emb = time_embedding(t, spec.time_embed);
    input.bottomRows(static_cast<Eigen::Index>(spec.time_embed)) = emb.replicate(1, batch);
  }
  f.post.push_back(std::move(input));
  const std::size_t layers = spec.hidden.size() + 1;
  for_each_layer(spec, [&](std::size_t l, std::size_t off, std::size_t out, std::size_t in) {
    Eigen::Map<const Mat> w(params.data() + off, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    Eigen::Map<const Vec> b(params.data() + off + out * in, static_cast<Eigen::Index>(out));
    Mat z = w * f.post.back();
    z.colwise() += b;
    if (l + 1 < layers) {
      Mat a = z.unaryExpr([&](double v) { return activate(spec.activation, v); });
      f.pre.push_back(std::move(z));
      f.post.push_back(std::move(a));
    } else {
      f.out = std::move(z);
    }
  });
  return f;
}

}  // namespace

VectorFieldModel::VectorFieldModel(MlpSpec spec, Interpolant interp, Rng& rng)
    : spec_(std::move(spec)), interp_(std::move(interp)), norm_(Standardizer::identity(spec_.dim)) {
  validate_spec(spec_);
  params_ = Vec::Zero(static_cast<Eigen::Index>(spec_.parameter_count()));
  std::normal_distribution<double> normal;
  const std::size_t layers = spec_.hidden.size() + 1;
  for_each_layer(spec_, [&](std::size_t l, std::size_t off, std::size_t out, std::size_t in) {
    // LeCun-normal hidden weights; the output layer starts small.
    const double gain = (l + 1 < layers ? 1.0 : 0.1) / std::sqrt(static_cast<double>(in));
    for (std::size_t k = 0; k < out * in; ++k) params_[static_cast<Eigen::Index>(off + k)] = gain * normal(rng);
  });
}

VectorFieldModel::VectorFieldModel(MlpSpec spec, Interpolant interp, Vec params, Standardizer norm)
    : spec_(std::move(spec)), interp_(std::move(interp)), params_(std::move(params)) {
  validate_spec(spec_);
  if (static_cast<std::size_t>(params_.size()) != spec_.parameter_count())
    throw Error(ErrorCode::invalid_argument, "parameter count does not match the architecture");
  set_standardizer(std::move(norm));
}

void VectorFieldModel::set_standardizer(Standardizer norm) {
  const auto n = static_cast<Eigen::Index>(spec_.dim);
  if (norm.in_shift.size() != n || norm.in_scale.size() != n || norm.out_shift.size() != n ||
      norm.out_scale.size() != n)
    throw Error(ErrorCode::invalid_argument, "standardizer dimension mismatch");
  if (!(norm.in_scale.array() > 0.0).all() || !(norm.out_scale.array() > 0.0).all())
    throw Error(ErrorCode::invalid_argument, "standardizer scales must be positive");
  norm_ = std::move(norm);
}

Mat VectorFieldModel::velocity(const Mat& x_t, double t) const {
  const Forward f = run_forward(spec_, params_, norm_, x_t, t);
  return ((f.out.array().colwise() * norm_.out_scale.array()).colwise() + norm_.out_shift.array()).matrix();
}

Vec VectorFieldModel::velocity(const Vec& x_t, double t) const {
  const Mat m = velocity(Mat(x_t), t);
  return m.col(0);
}

double VectorFieldModel::loss(const Mat& x_t, double t, const Mat& target, const Mat& weights, Vec* grad) const {
  check_same_shape(x_t, target);
  check_same_shape(x_t, weights);
  const Forward f = run_forward(spec_, params_, norm_, x_t, t);
  const Mat y = ((target.colwise() - norm_.out_shift).array().colwise() / norm_.out_scale.array()).matrix();
  const Mat diff = f.out - y;
  const double inv_b = 1.0 / static_cast<double>(x_t.cols());
  const double value = (weights.array() * diff.array().square()).sum() * inv_b;
  if (!grad) return value;

  grad->setZero(params_.size());
  Mat delta = (2.0 * inv_b) * (weights.array() * diff.array()).matrix();  // dL/d(layer output)
  const std::size_t layers = spec_.hidden.size() + 1;
  // Offsets of each layer, walked backwards.
  std::vector<std::array<std::size_t, 3>> shape;
  for_each_layer(spec_, [&](std::size_t, std::size_t off, std::size_t out, std::size_t in) {
    shape.push_back({off, out, in});
  });
  for (std::size_t li = layers; li-- > 0;) {
    const auto [off, out, in] = shape[li];
    const Mat& a_in = f.post[li];
    Eigen::Map<Mat> gw(grad->data() + off, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    Eigen::Map<Vec> gb(grad->data() + off + out * in, static_cast<Eigen::Index>(out));
    gw.noalias() = delta * a_in.transpose();
    gb = delta.rowwise().sum();
    if (li == 0) break;
    Eigen::Map<const Mat> w(params_.data() + off, static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    Mat back = w.transpose() * delta;
    const Mat& z = f.pre[li - 1];
    delta = back.array() * z.unaryExpr([&](double v) { return activate_grad(spec_.activation, v); }).array();
  }
  return value;
}

Mat ModelField::velocity(const Mat& x_t, double t) const { return model_->velocity(x_t, t); }

Mat ModelField::posterior_mean(const Mat& x_t, double t) const {
  return scoreopt::posterior_mean(interpolant(), velocity(x_t, t), x_t, t);
}

Mat ModelField::score(const Mat& x_t, double t) const {
  return score_from_velocity(interpolant(), velocity(x_t, t), x_t, t);
}

Mat ModelField::scaled_score(const Mat& x_t, double t) const {
  const auto p = interpolant().at(t);
  if (!(p.sigma > 0.0)) throw Error(ErrorCode::singular_scale, "scaled score needs sigma(t) > 0");
  return (p.alpha * posterior_mean(x_t, t) - x_t) / p.sigma;
}

// --- training -------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch < 2) throw Error(ErrorCode::invalid_argument, "training batch must be >= 2");
  if (!(lr > 0.0) || !(lr_final > 0.0)) throw Error(ErrorCode::invalid_argument, "learning rate must be positive");
  if (!(holdout > 0.0 && holdout < 1.0)) throw Error(ErrorCode::invalid_argument, "holdout fraction must lie in (0, 1)");
  if (eval_every == 0) throw Error(ErrorCode::invalid_argument, "eval_every must be positive");
}

namespace {

struct Subset {
  std::vector<std::size_t> index;
  std::vector<double> probs;
};

Subset make_subset(const FitnessPool& pool, std::vector<std::size_t> index) {
  Subset s;
  s.index = std::move(index);
  double sum = 0.0;
  for (std::size_t i : s.index) sum += pool.weights[i];
  if (!(sum > 0.0)) {
    // No weight in the subset; fall back to the whole pool.
    s.index.resize(pool.size());
    std::iota(s.index.begin(), s.index.end(), std::size_t{0});
    sum = std::accumulate(pool.weights.begin(), pool.weights.end(), 0.0);
  }
  s.probs.reserve(s.index.size());
  for (std::size_t i : s.index) s.probs.push_back(pool.weights[i] / sum);
  return s;
}

struct Batch {
  Mat x_t, target, weights;
};

Batch draw_batch(const FitnessPool& pool, const Subset& subset, std::size_t count, const InterpolantPoint& p,
                 bool use_weights, Rng& rng) {
  const std::vector<std::size_t> picks = systematic_resample(subset.probs, count, rng);
  const auto n = pool.points.rows();
  const auto b = static_cast<Eigen::Index>(count);
  Batch out{Mat(n, b), Mat(n, b), Mat::Ones(n, b)};
  std::normal_distribution<double> normal;
  const bool weighted = use_weights && pool.loss_weights.size() > 0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const std::size_t src = subset.index[picks[static_cast<std::size_t>(j)]];
    const auto col = static_cast<Eigen::Index>(src);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = pool.points(i, col);
      const double e = normal(rng);
      out.x_t(i, j) = p.alpha * x + p.sigma * e;
      out.target(i, j) = p.dalpha * x + p.dsigma * e;
    }
    if (weighted) out.weights.col(j) = pool.loss_weights.col(col);
  }
  return out;
}

Standardizer fit_standardizer(const Batch& probe) {
  auto col_stats = [](const Mat& m, Vec& mean, Vec& sd) {
    mean = m.rowwise().mean();
    sd = ((m.colwise() - mean).array().square().rowwise().mean()).sqrt().matrix();
    for (Eigen::Index i = 0; i < sd.size(); ++i)
      if (!(sd[i] > 1e-12)) sd[i] = 1.0;
  };
  Standardizer s;
  col_stats(probe.x_t, s.in_shift, s.in_scale);
  col_stats(probe.target, s.out_shift, s.out_scale);
  return s;
}

// Per-sample held-out losses.
Vec sample_losses(const VectorFieldModel& model, const Batch& b, double t) {
  const Mat v = model.velocity(b.x_t, t);
  return (b.weights.array() * (v - b.target).array().square()).colwise().sum().transpose();
}

// Mean of a - b and its standard error; the losses share one batch.
std::pair<double, double> paired_difference(const Vec& a, const Vec& b) {
  const Vec d = a - b;
  const double n = static_cast<double>(d.size());
  const double mean = d.mean();
  const double var = n > 1 ? (d.array() - mean).square().sum() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace

TrainResult train_flow_matching(const FitnessPool& pool, double t, const TrainConfig& config,
                                const std::optional<VectorFieldModel>& init, const Interpolant& interp,
                                Rng& rng) {
  config.validate();
  if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::invalid_argument, "training time must lie in (0, 1]");
  if (pool.size() == 0 || pool.probs.empty()) throw Error(ErrorCode::empty_feasible, "training pool is empty");

  VectorFieldModel start = init && config.warm_start ? *init
                           : init                    ? VectorFieldModel(init->spec(), init->interpolant(), rng)
                                                     : VectorFieldModel([&] {
                                                         MlpSpec a = config.arch;
                                                         a.dim = pool.dim();
                                                         return a;
                                                       }(),
                                                                        interp, rng);
  if (start.spec().dim != pool.dim()) throw Error(ErrorCode::invalid_argument, "model and pool dimensions differ");
  if (config.steps == 0) return {std::move(start), {}};

  const InterpolantPoint p = start.interpolant().at(t);

  // Held-out split.
  std::vector<std::size_t> perm(pool.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_hold =
      pool.size() < 2 ? pool.size() : std::max<std::size_t>(1, static_cast<std::size_t>(config.holdout * static_cast<double>(pool.size())));
  std::vector<std::size_t> hold_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train_idx = pool.size() < 2 ? hold_idx
                                                       : std::vector<std::size_t>(perm.begin() + static_cast<std::ptrdiff_t>(n_hold), perm.end());
  std::sort(hold_idx.begin(), hold_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const Subset hold = make_subset(pool, std::move(hold_idx));
  const Subset train = make_subset(pool, std::move(train_idx));

  const std::size_t hold_size = std::clamp<std::size_t>(4 * config.batch, 1024, 8192);
  const Batch held = draw_batch(pool, hold, hold_size, p, config.use_loss_weights, rng);

  TrainReport report;
  const Vec start_losses = sample_losses(start, held, t);
  report.initial_loss = start_losses.mean();

  VectorFieldModel model = start;
  model.set_standardizer(fit_standardizer(draw_batch(pool, train, 4096, p, false, rng)));

  VectorFieldModel best = start;
  double best_loss = report.initial_loss;
  Vec best_losses = start_losses;

  const auto n_params = model.params().size();
  Vec m1 = Vec::Zero(n_params), m2 = Vec::Zero(n_params), grad(n_params);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  double last_finite = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t step = 1; step <= config.steps; ++step) {
    const Batch b = draw_batch(pool, train, config.batch, p, config.use_loss_weights, rng);
    const double value = model.loss(b.x_t, t, b.target, b.weights, &grad);
    if (!std::isfinite(value) || !grad.allFinite()) {
      std::ostringstream msg;
      msg << "flow-matching loss became non-finite at step " << step << " (t = " << t
          << ", last finite loss = " << last_finite << ")";
      throw Error(ErrorCode::divergent, msg.str());
    }
    last_finite = value;
    const double norm = grad.norm();
    if (norm > config.clip_norm) grad *= config.clip_norm / norm;

    const double progress = static_cast<double>(step - 1) / static_cast<double>(config.steps);
    const double lr = config.lr_final + 0.5 * (config.lr - config.lr_final) * (1.0 + std::cos(std::numbers::pi * progress));
    m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
    m2 = kBeta2 * m2 + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    model.params().array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + kAdamEps);

    if (step % config.eval_every == 0 || step == config.steps) {
      Vec losses = sample_losses(model, held, t);
      const double h = losses.mean();
      if (h < best_loss) {
        best_loss = h;
        best = model;
        best_losses = std::move(losses);
      }
    }
  }
  // The held-out targets are noisy, so the lowest checkpoint is partly fit to
  // that noise. Prefer the final model unless it is clearly worse.
  if (best_loss < report.initial_loss) {
    const Vec final_losses = sample_losses(model, held, t);
    const auto [diff, se] = paired_difference(final_losses, best_losses);
    if (final_losses.mean() < report.initial_loss && diff <= 2.0 * se) {
      best = model;
      best_loss = final_losses.mean();
    }
  }
  report.final_loss = best_loss;
  report.steps = config.steps;
  report.improved = best_loss < report.initial_loss;
  return {std::move(best), report};
}

double parameter_gradient_check(const VectorFieldModel& model, const GradientCheckBatch& batch, Rng& rng,
                                std::size_t probes, double h, const std::function<void(Vec&)>& tamper) {
  Vec grad;
  model.loss(batch.x_t, batch.t, batch.target, batch.weights, &grad);
  if (tamper) tamper(grad);
  VectorFieldModel probe = model;
  const auto n = static_cast<std::size_t>(model.params().size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(probes, n));
  double worst = 0.0;
  for (std::size_t k : idx) {
    const auto i = static_cast<Eigen::Index>(k);
    const double orig = probe.params()[i];
    probe.params()[i] = orig + h;
    const double up = probe.loss(batch.x_t, batch.t, batch.target, batch.weights);
    probe.params()[i] = orig - h;
    const double down = probe.loss(batch.x_t, batch.t, batch.target, batch.weights);
    probe.params()[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad[i];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  return worst;
}

// --- mixture oracle -------------------------------------------------------

void GaussianMixtureOracle::validate() const {
  const auto k = static_cast<std::size_t>(means.cols());
  if (k == 0 || variances.size() != k || weights.size() != k)
    throw Error(ErrorCode::invalid_argument, "mixture components are inconsistent");
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(weights[i] > 0.0)) throw Error(ErrorCode::invalid_argument, "mixture weights must be positive");
    if (!(variances[i] >= 0.0)) throw Error(ErrorCode::invalid_argument, "mixture variances must be >= 0");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::invalid_argument, "mixture weights must sum to 1");
}

namespace {

struct Responsibilities {
  std::vector<double> r;       // normalized component posteriors
  std::vector<double> var;     // alpha^2 s^2 + sigma^2
  double log_density = 0.0;
};

Responsibilities responsibilities(const GaussianMixtureOracle& g, const InterpolantPoint& p, const Vec& x_t) {
  const auto k = static_cast<std::size_t>(g.means.cols());
  const auto n = static_cast<double>(x_t.size());
  Responsibilities out;
  out.r.resize(k);
  out.var.resize(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double var = p.alpha * p.alpha * g.variances[c] + p.sigma * p.sigma;
    if (!(var > 0.0)) throw Error(ErrorCode::degenerate_kernel, "mixture component has zero variance at this t");
    out.var[c] = var;
    const double sq = (x_t - p.alpha * g.means.col(static_cast<Eigen::Index>(c))).squaredNorm();
    out.r[c] = std::log(g.weights[c]) - 0.5 * n * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq / var;
    top = std::max(top, out.r[c]);
  }
  double sum = 0.0;
  for (double& v : out.r) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : out.r) v /= sum;
  out.log_density = top + std::log(sum);
  return out;
}

}  // namespace

double mixture_log_density(const GaussianMixtureOracle& g, const Interpolant& s, const Vec& x_t, double t) {
  return responsibilities(g, s.at(t), x_t).log_density;
}

Vec analytic_mixture_score(const GaussianMixtureOracle& g, const Interpolant& s, const Vec& x_t, double t) {
  const auto p = s.at(t);
  const Responsibilities rs = responsibilities(g, p, x_t);
  Vec out = Vec::Zero(x_t.size());
  for (std::size_t c = 0; c < rs.r.size(); ++c)
    out -= rs.r[c] * (x_t - p.alpha * g.means.col(static_cast<Eigen::Index>(c))) / rs.var[c];
  return out;
}

Vec mixture_posterior_mean(const GaussianMixtureOracle& g, const Interpolant& s, const Vec& x_t, double t) {
  const auto p = s.at(t);
  const Responsibilities rs = responsibilities(g, p, x_t);
  Vec out = Vec::Zero(x_t.size());
  for (std::size_t c = 0; c < rs.r.size(); ++c) {
    const auto mu = g.means.col(static_cast<Eigen::Index>(c));
    out += rs.r[c] * (mu + (p.alpha * g.variances[c] / rs.var[c]) * (x_t - p.alpha * mu));
  }
  return out;
}

MixtureField::MixtureField(GaussianMixtureOracle g, Interpolant s) : g_(std::move(g)), s_(std::move(s)) {
  g_.validate();
}

Mat MixtureField::score(const Mat& x_t, double t) const {
  Mat out(x_t.rows(), x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) out.col(j) = analytic_mixture_score(g_, s_, x_t.col(j), t);
  return out;
}

Mat MixtureField::posterior_mean(const Mat& x_t, double t) const {
  Mat out(x_t.rows(), x_t.cols());
  for (Eigen::Index j = 0; j < x_t.cols(); ++j) out.col(j) = mixture_posterior_mean(g_, s_, x_t.col(j), t);
  return out;
}

// --- reverse SDE ----------------------------------------------------------

Mat sample_reverse_sde(const ScoreField& field, Mat x, double t_start, std::size_t n_steps,
                       const std::function<double(double)>& diffusion, Rng& rng, double t_min) {
  if (n_steps == 0) throw Error(ErrorCode::invalid_argument, "reverse SDE needs at least one step");
  if (!(t_start > t_min && t_start <= 1.0)) throw Error(ErrorCode::invalid_argument, "reverse SDE needs t_min < t_start <= 1");
  const Interpolant& s = field.interpolant();
  const double dt = (t_start - t_min) / static_cast<double>(n_steps);
  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = t_start - static_cast<double>(k) * dt;
    const double w = diffusion ? diffusion(t) : s.sigma(t);
    Mat drift = -field.velocity(x, t);
    if (w != 0.0) drift += 0.5 * w * field.score(x, t);
    x += dt * drift;
    if (w != 0.0) {
      const double amp = std::sqrt(w * dt);
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) += amp * normal(rng);
    }
    if (!x.allFinite())
      throw Error(ErrorCode::non_finite, "reverse SDE state became non-finite at step " + std::to_string(k));
  }
  return x;
}

}  // namespace scoreopt
