#pragma once

#include "scoreopt/rng.hpp"
#include "scoreopt/sampling.hpp"
#include "scoreopt/schedule.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace scoreopt {

// --- score conversions ----------------------------------------------------
//
// All take column batches (dim x count) or single columns.

/// Score from the velocity: sigma^-1 (alpha v - dalpha x_t) / (dalpha sigma - alpha dsigma).
Mat score_from_velocity(const Interpolant& s, const Mat& v, const Mat& x_t, double t);
/// Score from the posterior mean: (alpha / sigma^2) (m - x_t / alpha).
Mat score_from_posterior_mean(const Interpolant& s, const Mat& m, const Mat& x_t, double t);
/// E[x | x_t] = (sigma v - dsigma x_t) / (dalpha sigma - alpha dsigma).
Mat posterior_mean(const Interpolant& s, const Mat& v, const Mat& x_t, double t);
/// Inverse of posterior_mean: v = dalpha m + dsigma (x_t - alpha m) / sigma.
Mat velocity_from_posterior_mean(const Interpolant& s, const Mat& m, const Mat& x_t, double t);

/// Anything that can report the score of the diffused fitness density.
class ScoreField {
 public:
  virtual ~ScoreField() = default;

  virtual std::size_t dim() const = 0;
  virtual const Interpolant& interpolant() const = 0;

  virtual Mat score(const Mat& x_t, double t) const = 0;
  /// sigma_t * score(x_t). The default multiplies; fields with a posterior
  /// mean use (alpha m - x_t) / sigma, which stays finite as t -> 0.
  virtual Mat scaled_score(const Mat& x_t, double t) const;
  /// Default: Tweedie, m = (x_t + sigma^2 score) / alpha (needs alpha > 0).
  virtual Mat posterior_mean(const Mat& x_t, double t) const;
  virtual Mat velocity(const Mat& x_t, double t) const;
};

// --- network --------------------------------------------------------------

enum class Activation : std::uint32_t { silu = 1, tanh = 2 };

struct MlpSpec {
  std::size_t dim = 1;           // state dimension n (input and output)
  std::size_t time_embed = 64;   // sinusoidal embedding width (even)
  std::vector<std::size_t> hidden{256, 256, 256};
  Activation activation = Activation::silu;

  std::size_t input_width() const { return dim + time_embed; }
  std::size_t parameter_count() const;
};

/// Per-dimension standardization of network inputs and outputs; reset at
/// the start of every training call.
struct Standardizer {
  Vec in_shift, in_scale;
  Vec out_shift, out_scale;

  static Standardizer identity(std::size_t dim);
};

/// Sinusoidal features of t, `width` entries (half sin, half cos).
Vec time_embedding(double t, std::size_t width);

/// Time-conditioned MLP v_theta(x_t, t).
class VectorFieldModel {
 public:
  VectorFieldModel(MlpSpec spec, Interpolant interp, Rng& rng);
  VectorFieldModel(MlpSpec spec, Interpolant interp, Vec params, Standardizer norm);

  const MlpSpec& spec() const { return spec_; }
  const Interpolant& interpolant() const { return interp_; }
  const Vec& params() const { return params_; }
  Vec& params() { return params_; }
  const Standardizer& standardizer() const { return norm_; }
  void set_standardizer(Standardizer norm);

  Mat velocity(const Mat& x_t, double t) const;
  Vec velocity(const Vec& x_t, double t) const;

  /// Weighted flow-matching loss in standardized units,
  /// mean_b sum_d w_db ((v_db - y_db) / out_scale_d)^2, and optionally its
  /// gradient with respect to params().
  double loss(const Mat& x_t, double t, const Mat& target, const Mat& weights, Vec* grad = nullptr) const;

 private:
  MlpSpec spec_;
  Interpolant interp_;
  Vec params_;
  Standardizer norm_;
};

/// A trained model seen through the ScoreField interface.
class ModelField final : public ScoreField {
 public:
  explicit ModelField(const VectorFieldModel& model) : model_(&model) {}
  std::size_t dim() const override { return model_->spec().dim; }
  const Interpolant& interpolant() const override { return model_->interpolant(); }
  Mat score(const Mat& x_t, double t) const override;
  Mat scaled_score(const Mat& x_t, double t) const override;
  Mat posterior_mean(const Mat& x_t, double t) const override;
  Mat velocity(const Mat& x_t, double t) const override;

 private:
  const VectorFieldModel* model_;
};

// --- training -------------------------------------------------------------

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 1024;
  double lr = 5e-5;
  double lr_final = 5e-5;  // cosine decay target; equal to lr for a constant rate
  bool warm_start = true;
  bool use_loss_weights = true;  // apply pool.loss_weights when present
  double holdout = 0.1;
  std::size_t eval_every = 50;
  double clip_norm = 10.0;
  MlpSpec arch;  // used when no initial model is supplied
  void validate() const;
};

struct TrainReport {
  double initial_loss = 0.0;  // held-out, original units, starting model
  double final_loss = 0.0;    // held-out, returned model
  std::size_t steps = 0;
  bool improved = false;      // false: the starting model was returned
};

struct TrainResult {
  VectorFieldModel model;
  TrainReport report;
};

/// Regresses v_theta(x_t, t) on dalpha x + dsigma eps, x resampled from the
/// pool by fitness, t fixed. Returns the final parameters unless the best
/// held-out checkpoint beats them by more than two paired standard errors;
/// the returned loss never exceeds the starting one.
TrainResult train_flow_matching(const FitnessPool& pool, double t, const TrainConfig& config,
                                const std::optional<VectorFieldModel>& init, const Interpolant& interp,
                                Rng& rng);

struct GradientCheckBatch {
  Mat x_t;
  double t = 0.5;
  Mat target;
  Mat weights;
};

/// Max relative error between analytic and central-difference gradients on
/// `probes` random parameters. `tamper` may edit the analytic gradient
/// (negative controls).
double parameter_gradient_check(const VectorFieldModel& model, const GradientCheckBatch& batch, Rng& rng,
                                std::size_t probes = 200, double h = 1e-4,
                                const std::function<void(Vec&)>& tamper = {});

// --- Gaussian mixture oracle ----------------------------------------------

struct GaussianMixtureOracle {
  Mat means;                   // dim x K
  std::vector<double> variances;  // isotropic, per component
  std::vector<double> weights;    // positive, sum 1
  void validate() const;
};

/// log p_t(x_t) for the mixture pushed through the interpolant.
double mixture_log_density(const GaussianMixtureOracle& g, const Interpolant& s, const Vec& x_t, double t);
Vec analytic_mixture_score(const GaussianMixtureOracle& g, const Interpolant& s, const Vec& x_t, double t);
Vec mixture_posterior_mean(const GaussianMixtureOracle& g, const Interpolant& s, const Vec& x_t, double t);

class MixtureField final : public ScoreField {
 public:
  MixtureField(GaussianMixtureOracle g, Interpolant s);
  std::size_t dim() const override { return static_cast<std::size_t>(g_.means.rows()); }
  const Interpolant& interpolant() const override { return s_; }
  Mat score(const Mat& x_t, double t) const override;
  Mat posterior_mean(const Mat& x_t, double t) const override;
  const GaussianMixtureOracle& mixture() const { return g_; }

 private:
  GaussianMixtureOracle g_;
  Interpolant s_;
};

// --- reverse-time sampling ------------------------------------------------

/// Euler-Maruyama for dX = v dt - (w/2) score dt + sqrt(w) dW, integrated
/// from t_start down to t_min in n_steps equal steps. `diffusion` gives w_t;
/// empty means w_t = sigma_t.
Mat sample_reverse_sde(const ScoreField& field, Mat x_start, double t_start, std::size_t n_steps,
                       const std::function<double(double)>& diffusion, Rng& rng, double t_min = 1e-3);

// --- checkpoints ----------------------------------------------------------

/// Little-endian binary: header (magic, version, schedule, architecture,
/// standardizer) followed by the flat float64 parameter array.
void save_checkpoint(const VectorFieldModel& model, std::ostream& out);
VectorFieldModel load_checkpoint(std::istream& in);
void save_checkpoint(const VectorFieldModel& model, const std::string& path);
VectorFieldModel load_checkpoint(const std::string& path);

}  // namespace scoreopt
