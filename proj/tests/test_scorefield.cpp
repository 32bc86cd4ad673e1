#include "scoreopt/error.hpp"
#include "scoreopt/scorefield.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace scoreopt;

namespace {

GaussianMixtureOracle two_modes() {
  GaussianMixtureOracle g;
  g.means = Mat(1, 2);
  g.means << -0.5, 0.5;
  g.variances = {0.09, 0.09};
  g.weights = {0.3, 0.7};
  return g;
}

GaussianMixtureOracle mixture_2d() {
  GaussianMixtureOracle g;
  g.means = Mat(2, 3);
  g.means << -0.4, 0.2, 0.6, 0.3, -0.5, 0.1;
  g.variances = {0.04, 0.09, 0.02};
  g.weights = {0.2, 0.5, 0.3};
  return g;
}

MlpSpec small_spec(std::size_t dim) {
  MlpSpec spec;
  spec.dim = dim;
  spec.time_embed = 8;
  spec.hidden = {16, 16};
  return spec;
}

}  // namespace

TEST_CASE("score conversions agree for every interpolant") {
  Rng rng(4);
  for (const auto& s : {linear_interpolant(), trigonometric_interpolant()})
    for (double t : {0.05, 0.3, 0.75}) {
      const Mat xt = Mat::Random(3, 7);
      const Mat m = Mat::Random(3, 7);
      const Mat v = velocity_from_posterior_mean(s, m, xt, t);
      CHECK((posterior_mean(s, v, xt, t) - m).cwiseAbs().maxCoeff() < 1e-12);
      const Mat a = score_from_velocity(s, v, xt, t);
      const Mat b = score_from_posterior_mean(s, m, xt, t);
      CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + b.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("mixture score is the gradient of the log density") {
  const Interpolant s = linear_interpolant();
  const auto g = mixture_2d();
  const double h = 1e-5;
  for (double t : {0.1, 0.5, 0.9}) {
    Vec x(2);
    x << 0.15, -0.2;
    const Vec score = analytic_mixture_score(g, s, x, t);
    for (int d = 0; d < 2; ++d) {
      Vec xp = x, xm = x;
      xp[d] += h;
      xm[d] -= h;
      const double fd = (mixture_log_density(g, s, xp, t) - mixture_log_density(g, s, xm, t)) / (2 * h);
      CHECK(score[d] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("mixture posterior mean satisfies Tweedie") {
  const Interpolant s = linear_interpolant();
  const auto g = mixture_2d();
  for (double t : {0.2, 0.6}) {
    Vec x(2);
    x << -0.3, 0.4;
    const double a = s.alpha(t), sg = s.sigma(t);
    const Vec tweedie = (x + sg * sg * analytic_mixture_score(g, s, x, t)) / a;
    CHECK((mixture_posterior_mean(g, s, x, t) - tweedie).norm() < 1e-12);
  }
}

TEST_CASE("single Gaussian mixture has the closed-form score") {
  GaussianMixtureOracle g;
  g.means = Mat::Constant(1, 1, 0.3);
  g.variances = {0.25};
  g.weights = {1.0};
  const Interpolant s = linear_interpolant();
  const double t = 0.4, a = 0.6, sg = 0.4;
  const Vec x = Vec::Constant(1, -0.2);
  CHECK(analytic_mixture_score(g, s, x, t)[0] == doctest::Approx(-(-0.2 - a * 0.3) / (a * a * 0.25 + sg * sg)));
}

TEST_CASE("mixture validation") {
  auto g = two_modes();
  g.weights = {0.5, 0.6};
  CHECK_THROWS_AS(g.validate(), Error);
  g = two_modes();
  g.variances = {0.1, -0.1};
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("scaled score stays finite at tiny t") {
  const MixtureField field(two_modes(), linear_interpolant());
  const Mat x = Mat::Constant(1, 1, 0.2);
  const Mat scaled = field.scaled_score(x, 1e-9);
  CHECK(scaled.allFinite());
  const double t = 0.3;
  CHECK(field.scaled_score(x, t)(0, 0) == doctest::Approx(0.3 * field.score(x, t)(0, 0)));
}

TEST_CASE("time embedding") {
  const Vec e = time_embedding(0.0, 8);
  CHECK(e.head(4).cwiseAbs().maxCoeff() == 0.0);
  CHECK(e.tail(4) == Vec::Ones(4));
  const Vec f = time_embedding(0.37, 6);
  for (int k = 0; k < 3; ++k) CHECK(f[k] * f[k] + f[k + 3] * f[k + 3] == doctest::Approx(1.0));
}

TEST_CASE("parameter count") {
  MlpSpec spec;
  spec.dim = 2;
  spec.time_embed = 4;
  spec.hidden = {5, 3};
  // (6 -> 5) + (5 -> 3) + (3 -> 2), weights plus biases
  CHECK(spec.parameter_count() == 6 * 5 + 5 + 5 * 3 + 3 + 3 * 2 + 2);
}

TEST_CASE("analytic parameter gradient matches central differences") {
  for (auto act : {Activation::silu, Activation::tanh}) {
    Rng rng(7);
    MlpSpec spec = small_spec(2);
    spec.activation = act;
    const VectorFieldModel model(spec, linear_interpolant(), rng);
    GradientCheckBatch batch;
    batch.x_t = Mat::Random(2, 16);
    batch.t = 0.4;
    batch.target = Mat::Random(2, 16);
    batch.weights = Mat::Ones(2, 16) + 0.5 * Mat::Random(2, 16).cwiseAbs();
    CHECK(parameter_gradient_check(model, batch, rng, 200) < 1e-4);
  }
}

TEST_CASE("gradient check catches a tampered gradient") {
  Rng rng(8);
  const VectorFieldModel model(small_spec(1), linear_interpolant(), rng);
  GradientCheckBatch batch;
  batch.x_t = Mat::Random(1, 8);
  batch.target = Mat::Random(1, 8);
  batch.weights = Mat::Ones(1, 8);
  const double err = parameter_gradient_check(model, batch, rng, 200, 1e-4, [](Vec& g) { g *= 1.01; });
  CHECK(err > 1e-3);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(10);
  VectorFieldModel model(small_spec(3), trigonometric_interpolant(), rng);
  Standardizer norm = Standardizer::identity(3);
  norm.in_scale << 0.5, 2.0, 1.5;
  norm.out_shift << 0.1, -0.2, 0.3;
  model.set_standardizer(norm);
  std::stringstream buf;
  save_checkpoint(model, buf);
  const VectorFieldModel back = load_checkpoint(buf);
  CHECK(back.params() == model.params());
  CHECK(back.interpolant().name == "trig");
  CHECK(back.spec().hidden == model.spec().hidden);
  CHECK(back.standardizer().in_scale == norm.in_scale);
  const Mat x = Mat::Random(3, 4);
  CHECK(back.velocity(x, 0.3) == model.velocity(x, 0.3));
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::stringstream junk("not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(junk), Error);
  Rng rng(11);
  const VectorFieldModel model(small_spec(1), linear_interpolant(), rng);
  std::stringstream buf;
  save_checkpoint(model, buf);
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 8);
  std::stringstream cut(bytes);
  CHECK_THROWS_AS(load_checkpoint(cut), Error);
  CHECK_THROWS_AS(load_checkpoint(std::string("/nonexistent/dir/model.bin")), Error);
}

TEST_CASE("training reduces held-out loss and the score error") {
  const auto g = two_modes();
  const Interpolant s = linear_interpolant();
  const MixtureField oracle(g, s);
  const int n = 4096;
  Mat pts(1, n);
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    const double x = -1.5 + 3.0 * (i + 0.5) / n;
    pts(0, i) = x;
    w[i] = 0.3 * std::exp(-0.5 * (x + 0.5) * (x + 0.5) / 0.09) + 0.7 * std::exp(-0.5 * (x - 0.5) * (x - 0.5) / 0.09);
  }
  const FitnessPool pool = make_weighted_pool(pts, w);
  TrainConfig cfg;
  cfg.steps = 600;
  cfg.batch = 256;
  cfg.lr = 2e-3;
  cfg.lr_final = 2e-4;
  cfg.arch = small_spec(1);
  Rng rng(12);
  const double t = 0.5;
  const VectorFieldModel init(cfg.arch, s, rng);
  const auto rmse = [&](const VectorFieldModel& m) {
    const ModelField f(m);
    double se = 0.0;
    int k = 0;
    for (double x = -1.0; x <= 1.0; x += 0.05, ++k) {
      const Mat xt = Mat::Constant(1, 1, x);
      se += std::pow(f.score(xt, t)(0, 0) - oracle.score(xt, t)(0, 0), 2);
    }
    return std::sqrt(se / k);
  };
  const TrainResult r = train_flow_matching(pool, t, cfg, init, s, rng);
  CHECK(r.report.final_loss < r.report.initial_loss);
  CHECK(r.report.improved);
  CHECK(rmse(r.model) < rmse(init));
  CHECK(rmse(r.model) < 0.1);
}

TEST_CASE("zero training steps return the starting model") {
  Rng rng(13);
  const Interpolant s = linear_interpolant();
  const VectorFieldModel init(small_spec(1), s, rng);
  const FitnessPool pool = make_weighted_pool(Mat::Random(1, 32), std::vector<double>(32, 1.0));
  TrainConfig cfg;
  cfg.steps = 0;
  const TrainResult r = train_flow_matching(pool, 0.5, cfg, init, s, rng);
  CHECK(r.model.params() == init.params());
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  cfg.holdout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.eval_every = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  Rng rng(14);
  const FitnessPool pool = make_weighted_pool(Mat::Random(1, 8), std::vector<double>(8, 1.0));
  CHECK_THROWS_AS(train_flow_matching(pool, 0.0, TrainConfig{}, std::nullopt, linear_interpolant(), rng), Error);
}

TEST_CASE("reverse SDE recovers a Gaussian target") {
  GaussianMixtureOracle g;
  g.means = Mat::Constant(1, 1, 0.5);
  g.variances = {0.04};
  g.weights = {1.0};
  const MixtureField field(g, linear_interpolant());
  Rng rng(15);
  const double t0 = 0.999;
  const double sd0 = std::sqrt(0.001 * 0.001 * 0.04 + t0 * t0);
  Mat x(1, 20000);
  std::normal_distribution<double> normal;
  for (Eigen::Index j = 0; j < x.cols(); ++j) x(0, j) = 0.001 * 0.5 + sd0 * normal(rng);
  for (bool ode : {false, true}) {
    const Mat out = sample_reverse_sde(field, x, t0, 400, ode ? [](double) { return 0.0; } : std::function<double(double)>{},
                                       rng, 1e-3);
    const double mean = out.mean();
    const double sd = std::sqrt((out.array() - mean).square().mean());
    CHECK(mean == doctest::Approx(0.5).epsilon(0.03));
    CHECK(sd == doctest::Approx(0.2).epsilon(0.05));
  }
}
