#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "legend/learn.hpp"

using namespace legend;
using sde::Batch;

namespace {

// Stationary toy series: every timestep is the same Gaussian bag.
data::AggregateSeries stationary_series(int dim, int T, std::size_t count,
                                        double mean, double sd,
                                        std::uint64_t seed) {
  data::AggregateSeries s;
  s.dim = dim;
  rng::Stream rs(seed);
  for (int t = 0; t < T; ++t) {
    s.times.push_back(t);
    Batch b(dim, count);
    for (double& v : b.data) v = mean + sd * rs.gauss();
    s.batches.push_back(std::move(b));
  }
  return s;
}

learn::TrainConfig small_config() {
  learn::TrainConfig cfg;
  cfg.width = 8;
  cfg.batch_size = 8;
  cfg.substeps_per_obs = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("zero iterations: initialized model, empty report") {
  auto series = stationary_series(2, 3, 16, 0.0, 1.0, 1);
  auto cfg = small_config();
  cfg.iterations = 0;
  auto res = learn::train_dynamics(series, cfg);
  CHECK(res.report.rows.empty());
  CHECK(res.report.final_w1.empty());
  CHECK(res.model.hidden_dim == 2);
  CHECK(res.model.obs_dim == 2);
  CHECK(res.model.g.sizes == std::vector<int>{2, 8, 8, 8, 2});
  CHECK(res.model.f.sizes == std::vector<int>{2, 8, 2});
  CHECK(res.critics.critics.size() == 3);
}

TEST_CASE("input contracts") {
  auto cfg = small_config();
  auto one_step = stationary_series(1, 1, 16, 0.0, 1.0, 1);
  CHECK_THROWS_AS(learn::train_dynamics(one_step, cfg),
                  std::invalid_argument);
  auto tiny = stationary_series(1, 2, 4, 0.0, 1.0, 1);
  cfg.batch_size = 8;
  CHECK_THROWS_AS(learn::train_dynamics(tiny, cfg), std::invalid_argument);
}

TEST_CASE("constant critics give zero generator gradient") {
  sde::DiffusionModel model;
  model.g = nn::mlp_new(std::vector<int>{1, 4, 1}, nn::Act::tanh, 2);
  model.f = nn::mlp_new(std::vector<int>{1, 4, 1}, nn::Act::tanh, 3);
  model.sigma_root = Mat::scaled_identity(1, 0.1);
  model.dt = 0.2;
  model.substeps_per_obs = 2;
  model.hidden_dim = model.obs_dim = 1;

  ot::LipschitzMode gp;
  auto bank = ot::CriticBank::make(2, 1, 4, 2, 9, gp, 1e-3, 0.5, 0.9);
  for (auto& c : bank.critics) {
    // zero the output layer: D(x) == bias everywhere
    const std::size_t last = c.params.size();
    for (std::size_t i = last - 5; i < last - 1; ++i) c.params[i] = 0.0;
    c.params[last - 1] = 1.3;
  }
  Batch x0(1, 4);
  x0.data = {0.1, -0.2, 0.5, 1.0};
  auto gg = learn::generator_gradient(model, bank, {0, 1}, x0, 42);
  CHECK(gg.loss == doctest::Approx(-2 * 1.3).epsilon(1e-12));
  for (double v : gg.grad_f) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
  for (double v : gg.grad_g) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("generator gradient matches finite differences (frozen noise)") {
  sde::DiffusionModel model;
  model.g = nn::mlp_new(std::vector<int>{1, 3, 1}, nn::Act::tanh, 4);
  model.f = nn::mlp_new(std::vector<int>{1, 3, 1}, nn::Act::tanh, 5);
  model.sigma_root = Mat::scaled_identity(1, 0.2);
  model.dt = 0.2;
  model.substeps_per_obs = 3;
  model.hidden_dim = model.obs_dim = 1;

  ot::LipschitzMode gp;
  auto bank = ot::CriticBank::make(3, 1, 4, 3, 11, gp, 1e-3, 0.5, 0.9);

  Batch x0(1, 4);
  x0.data = {0.3, -0.4, 0.9, -1.1};
  const std::vector<int> times = {0, 1, 2};
  const std::uint64_t noise = 77;

  auto loss_at = [&]() {
    return learn::generator_gradient(model, bank, times, x0, noise).loss;
  };
  auto gg = learn::generator_gradient(model, bank, times, x0, noise);

  const double h = 1e-6;
  for (std::size_t p = 0; p < model.g.params.size(); p += 3) {
    const double keep = model.g.params[p];
    model.g.params[p] = keep + h;
    const double up = loss_at();
    model.g.params[p] = keep - h;
    const double dn = loss_at();
    model.g.params[p] = keep;
    CHECK(gg.grad_g[p] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-3));
  }
  for (std::size_t p = 0; p < model.f.params.size(); p += 3) {
    const double keep = model.f.params[p];
    model.f.params[p] = keep + h;
    const double up = loss_at();
    model.f.params[p] = keep - h;
    const double dn = loss_at();
    model.f.params[p] = keep;
    CHECK(gg.grad_f[p] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-3));
  }
}

TEST_CASE("generate_observations applies the observation map") {
  sde::DiffusionModel model;
  model.g = nn::mlp_new(std::vector<int>{1, 1}, nn::Act::relu, 2);
  model.g.params = {0.0, 0.0};  // zero drift
  model.f = nn::mlp_new(std::vector<int>{1, 1}, nn::Act::relu, 2);
  model.f.params = {2.0, 1.0};  // y = 2x + 1
  model.sigma_root = Mat(1, 1);  // zero noise
  model.dt = 0.2;
  model.substeps_per_obs = 5;
  model.hidden_dim = model.obs_dim = 1;
  Batch x0(1, 3);
  x0.data = {0.0, 1.0, -2.0};
  auto obs = learn::generate_observations(model, x0, {0, 1, 3}, 9);
  REQUIRE(obs.size() == 3);
  for (const Batch& y : obs) {
    CHECK(y.data[0] == doctest::Approx(1.0));
    CHECK(y.data[1] == doctest::Approx(3.0));
    CHECK(y.data[2] == doctest::Approx(-3.0));
  }
}

TEST_CASE("short training run is finite, logged, and deterministic") {
  auto series = stationary_series(1, 3, 32, 0.0, 1.0, 3);
  auto cfg = small_config();
  cfg.iterations = 5;
  cfg.critic_steps = 2;
  auto res1 = learn::train_dynamics(series, cfg);
  auto res2 = learn::train_dynamics(series, cfg);
  CHECK(res1.model.g.params == res2.model.g.params);
  CHECK(res1.model.f.params == res2.model.f.params);
  CHECK(res1.report.rows.size() == 5 * 3);
  for (const auto& r : res1.report.rows) {
    CHECK(std::isfinite(r.critic_objective));
    CHECK(std::isfinite(r.gen_loss));
  }
  CHECK(res1.report.final_w1.size() == 3);
  for (double v : res1.report.final_w1) CHECK(std::isfinite(v));

  std::ostringstream os;
  res1.report.to_csv(os);
  CHECK(os.str().rfind("iteration,timestep,critic_objective,gen_loss\n", 0) ==
        0);
}

TEST_CASE("OU baseline: parameter groups and positivity") {
  auto series = stationary_series(2, 2, 16, 0.0, 1.0, 8);
  auto cfg = small_config();
  cfg.iterations = 2;
  cfg.critic_steps = 1;
  auto res = learn::train_baseline(series, learn::BaselineKind::OU, cfg);
  CHECK(res.model.param_groups() == 2);
  CHECK(res.model.mu.size() == 2);
  CHECK(std::exp(res.model.log_theta) > 0.0);
  CHECK(res.critics.critics.size() == 1);  // t >= 1 only

  auto nnres = learn::train_baseline(series, learn::BaselineKind::NN, cfg);
  CHECK(nnres.model.param_groups() == 1);
  CHECK(nnres.model.drift_net.sizes == std::vector<int>{2, 8, 2});
}

TEST_CASE("OU baseline learns drift that matches a drifting bag") {
  // y0 ~ N(0, 0.05); y1 is y0 pulled toward 2 by a true mean-reverting
  // drift. The fitted model should transport y0 close to y1, beating the
  // untrained model decisively.
  learn::ObservationModel truth;
  truth.kind = learn::BaselineKind::OU;
  truth.dim = 1;
  truth.log_theta = 0.0;  // theta = 1
  truth.mu = {2.0};
  truth.sigma_root = Mat::scaled_identity(1, 0.05);
  truth.dt = 0.2;
  truth.substeps_per_obs = 2;

  data::AggregateSeries series;
  series.dim = 1;
  series.times = {0, 1};
  Batch y0(1, 64);
  rng::Stream rs(12);
  for (double& v : y0.data) v = 0.05 * rs.gauss();
  series.batches.push_back(y0);
  series.batches.push_back(learn::propagate_observations(truth, y0, 1, 31));

  auto cfg = small_config();
  cfg.iterations = 150;
  cfg.critic_steps = 5;
  cfg.lr = 5e-3;
  cfg.critic_lr = 1e-2;
  cfg.batch_size = 16;
  auto res = learn::train_baseline(series, learn::BaselineKind::OU, cfg);

  learn::ObservationModel untrained = res.model;
  untrained.log_theta = 0.0;
  untrained.mu = {0.0};
  const Batch& y1 = series.batches[1];
  const double fitted =
      ot::w1_exact(learn::propagate_observations(res.model, y0, 1, 91), y1)
          .first;
  const double naive =
      ot::w1_exact(learn::propagate_observations(untrained, y0, 1, 91), y1)
          .first;
  CHECK(fitted < 0.5 * naive);
  CHECK(fitted < 0.25);
  // learned drift points toward the data at the starting mass
  double x = 0.0, d = 0.0;
  res.model.drift()(&x, &d);
  CHECK(d > 0.0);
}

TEST_CASE("OU baseline recovers the true reversion mean") {
  // Data simulated from a true mean-reverting process (theta=2, mu=1);
  // the fitted mu should land within 0.1 of the truth.
  learn::ObservationModel truth;
  truth.kind = learn::BaselineKind::OU;
  truth.dim = 1;
  truth.log_theta = std::log(2.0);
  truth.mu = {1.0};
  truth.sigma_root = Mat::scaled_identity(1, 0.05);
  truth.dt = 0.2;
  truth.substeps_per_obs = 5;

  data::AggregateSeries series;
  series.dim = 1;
  series.times = {0, 1, 2, 3};
  Batch y(1, 128);
  rng::Stream rs(12);
  for (double& v : y.data) v = 0.05 * rs.gauss();
  series.batches.push_back(y);
  for (int t = 1; t <= 3; ++t) {
    y = learn::propagate_observations(truth, y, 1, 31 + t);
    series.batches.push_back(y);
  }

  learn::TrainConfig cfg;
  cfg.width = 8;
  cfg.batch_size = 16;
  cfg.substeps_per_obs = 5;
  cfg.seed = 5;
  cfg.critic_steps = 5;
  cfg.lr = 5e-3;
  cfg.critic_lr = 1e-2;
  cfg.iterations = 400;
  auto res = learn::train_baseline(series, learn::BaselineKind::OU, cfg);
  CHECK(std::abs(res.model.mu[0] - 1.0) < 0.1);
}

TEST_CASE("propagate_observations: zero drift, zero noise is identity") {
  learn::ObservationModel m;
  m.kind = learn::BaselineKind::OU;
  m.dim = 1;
  m.log_theta = -30.0;  // theta ~ 0
  m.mu = {0.0};
  m.sigma_root = Mat(1, 1);
  m.dt = 0.2;
  m.substeps_per_obs = 5;
  Batch y(1, 3);
  y.data = {1.0, 2.0, 3.0};
  Batch out = learn::propagate_observations(m, y, 2, 7);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(out.data[i] == doctest::Approx(y.data[i]).epsilon(1e-10));
}

TEST_CASE("divergence guard raises a structured error") {
  auto series = stationary_series(1, 2, 16, 0.0, 1.0, 3);
  auto cfg = small_config();
  cfg.iterations = 3;
  cfg.critic_steps = 1;
  cfg.divergence_limit = 1e-12;  // everything counts as divergence
  CHECK_THROWS_AS(learn::train_dynamics(series, cfg),
                  learn::TrainDivergence);
}

TEST_CASE("simulate_on_tape values agree with the plain simulator") {
  sde::DiffusionModel model;
  model.g = nn::mlp_new(std::vector<int>{2, 4, 2}, nn::Act::tanh, 6);
  model.f = nn::mlp_new(std::vector<int>{2, 2}, nn::Act::relu, 6);
  model.sigma_root = Mat::scaled_identity(2, 0.3);
  model.dt = 0.2;
  model.substeps_per_obs = 3;
  model.hidden_dim = model.obs_dim = 2;
  Batch x0(2, 4);
  rng::Stream rs(14);
  for (double& v : x0.data) v = rs.gauss();

  auto plain = sde::simulate(model, x0, 2, 55);

  ad::Tape t;
  auto bg = nn::bind(model.g, t);
  auto taped = learn::simulate_on_tape(t, learn::taped_mlp_drift(bg), x0,
                                       model.sigma_root, model.dt,
                                       model.substeps_per_obs, {0, 1, 2}, 55);
  for (int k = 0; k <= 2; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j)
        CHECK(t.value(taped[k][i][j]) ==
              doctest::Approx(plain[k].row(i)[j]).epsilon(1e-12));
}
