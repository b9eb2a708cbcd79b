#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "kflow/random.hpp"
#include "kflow/tau_sweep.hpp"
#include "kflow/train.hpp"

using namespace kflow;

namespace {

KernelSpec gaussian(double amp = 1.0, double scale = 1.0) {
  KernelSpec s;
  s.primitives = {{KernelKind::Gaussian}};
  s.theta = Eigen::Vector2d(amp, scale);
  return s;
}

DelayDataset logistic_data(int steps) {
  MapSystem m{MapKind::Logistic};
  return delay_embed(simulate(m, Eigen::VectorXd::Constant(1, 0.1), steps), 1);
}

}  // namespace

TEST_CASE("seed streams are fixed") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  const auto s = sample_without_replacement(10, 10, 3);
  std::vector<int> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("numerical gradient examples") {
  const auto quad = [](const Eigen::VectorXd& t) { return t.squaredNorm(); };
  const auto g = numerical_gradient(quad, Eigen::Vector2d(1.0, 2.0), 1e-4);
  CHECK((g.gradient - Eigen::Vector2d(2.0, 4.0)).cwiseAbs().maxCoeff() <= 1e-6);

  const auto flat = numerical_gradient([](const Eigen::VectorXd&) { return 3.0; }, Eigen::Vector3d(1, 2, 3), 1e-4);
  CHECK(flat.gradient.isZero());

  const auto s = numerical_gradient([](const Eigen::VectorXd& t) { return std::sin(t(0)); }, Eigen::VectorXd::Zero(1), 1e-3);
  CHECK(std::abs(s.gradient(0) - 1.0) <= 1e-6);

  const auto partial = numerical_gradient(
      [](const Eigen::VectorXd& t) {
        if (t(1) != 2.0) throw Error(ErrorCode::SingularGram, "probe");
        return t(0);
      },
      Eigen::Vector2d(1.0, 2.0), 1e-4);
  CHECK(partial.failed_count == 1);
  CHECK(partial.failed[1]);
  CHECK(partial.gradient(1) == 0.0);

  const auto frozen = numerical_gradient(quad, Eigen::Vector2d(1.0, 2.0), 1e-4, {true, false});
  CHECK(frozen.gradient(1) == 0.0);
  CHECK(frozen.failed_count == 0);

  CHECK_THROWS_AS(numerical_gradient([](const Eigen::VectorXd&) -> double { throw Error(ErrorCode::NonFinite, "x"); },
                                     Eigen::Vector2d(1.0, 2.0), 1e-4),
                  Error);
}

TEST_CASE("finite-difference gradient of rho matches a Richardson reference") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_real_distribution<double> sc(0.6, 1.4);
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int nb = 8;
    Eigen::MatrixXd X(nb, 1);
    Eigen::VectorXd Y(nb);
    for (int i = 0; i < nb; ++i) {
      X(i, 0) = u(rng);
      Y(i) = std::cos(2.0 * X(i, 0)) + 0.3 * u(rng);
    }
    KernelSpec k = gaussian(1.0, sc(rng));
    const auto loss = [&](const Eigen::VectorXd& t) {
      return rho(k, t, X, Y, X.topRows(nb / 2), Y.head(nb / 2), NuggetPolicy::exact());
    };
    const auto g = numerical_gradient(loss, k.theta, 1e-4);
    const auto along = [&](Eigen::Index slot) {
      return [&, slot](double v) {
        Eigen::VectorXd t = k.theta;
        t(slot) = v;
        return loss(t);
      };
    };
    const double ref = oracle::richardson_derivative(along(1), k.theta(1), 1e-2);
    CHECK(std::abs(g.gradient(1) - ref) <= 1e-4 * std::max(std::abs(ref), 1e-3));
    // rho is invariant to the amplitude of a single-primitive kernel.
    CHECK(std::abs(g.gradient(0)) <= 1e-6);
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("theta stacking") {
  std::vector<KernelSpec> ks{gaussian(1, 2), gaussian(3, 4)};
  const Eigen::VectorXd t = stack_theta(ks);
  CHECK(t == Eigen::Vector4d(1, 2, 3, 4));
  CHECK(with_theta(ks, Eigen::Vector4d(5, 6, 7, 8))[1].theta == Eigen::Vector2d(7, 8));
  CHECK_THROWS_AS(with_theta(ks, Eigen::Vector3d(1, 2, 3)), Error);
}

TEST_CASE("kernel flow with no iterations returns theta0") {
  const auto data = logistic_data(40);
  TrainConfig cfg;
  cfg.iterations = 0;
  const auto r = kernel_flow(data, {gaussian(1.0, 0.7)}, cfg);
  CHECK(r.kernels[0].theta == Eigen::Vector2d(1.0, 0.7));
  CHECK(r.history.size() == 0);
}

TEST_CASE("kernel flow is reproducible and respects clamps") {
  const auto data = logistic_data(60);
  TrainConfig cfg;
  cfg.iterations = 15;
  cfg.batch_size = 20;
  cfg.rng_seed = 42;
  cfg.snapshot_every = 5;
  cfg.theta_clamps = {{0, 1, 0.5, 0.8}};
  const auto a = kernel_flow(data, {gaussian(1.0, 0.7)}, cfg);
  const auto b = kernel_flow(data, {gaussian(1.0, 0.7)}, cfg);
  CHECK(a.kernels[0].theta == b.kernels[0].theta);
  REQUIRE(a.history.size() == 15);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(std::memcmp(&a.history.records[i].loss, &b.history.records[i].loss, sizeof(double)) == 0);
    CHECK(a.history.records[i].seed == b.history.records[i].seed);
  }
  CHECK(a.kernels[0].theta(1) >= 0.5);
  CHECK(a.kernels[0].theta(1) <= 0.8);
  CHECK(a.history.snapshots.size() == 3);
  CHECK(a.history.last_batch.size() == 20);

  cfg.rng_seed = 43;
  const auto c = kernel_flow(data, {gaussian(1.0, 0.7)}, cfg);
  CHECK(c.history.records[0].seed != a.history.records[0].seed);
}

TEST_CASE("frozen slots do not move") {
  const auto data = logistic_data(60);
  TrainConfig cfg;
  cfg.iterations = 5;
  cfg.theta_clamps = {{0, 1, 0.7, 0.7}};
  const auto r = kernel_flow(data, {gaussian(1.0, 0.7)}, cfg);
  CHECK(r.kernels[0].theta(1) == 0.7);
}

TEST_CASE("mmd training normalizes amplitudes") {
  const auto data = logistic_data(80);
  TrainConfig cfg;
  cfg.metric = Metric::RhoMMD;
  cfg.iterations = 5;
  cfg.mmd_sample_size = 20;
  KernelSpec k;
  k.primitives = {{KernelKind::Triangular}, {KernelKind::Gaussian}};
  k.theta = Eigen::Vector4d(0.0, 1.0, 2.0, 1.0);
  const auto r = kernel_flow(data, {k}, cfg);
  const Eigen::VectorXd& t = r.kernels[0].theta;
  CHECK(std::hypot(t(0), t(2)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("persistent failures stall training") {
  const auto data = logistic_data(40);
  TrainConfig cfg;
  cfg.iterations = 10;
  KernelSpec zero = gaussian(0.0, 1.0);
  try {
    kernel_flow(data, {zero}, cfg);
    FAIL("expected TrainingStalled");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TrainingStalled);
  }
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.fd_step = 0.1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.fd_step = 1e-4;
  cfg.iterations = -1;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(metric_from_string("rho_l") == Metric::RhoL);
  CHECK(to_string(Metric::RhoMMD) == "rho_mmd");
  CHECK_THROWS_AS(metric_from_string("loss"), Error);
}

TEST_CASE("history csv") {
  TrainHistory h;
  h.records.push_back({0, 0.5, 1, false, 0.0, 0});
  h.records.push_back({1, std::nan(""), 2, true, 0.0, 0});
  std::ostringstream out;
  write_history_csv(out, h);
  CHECK(out.str() == "iter,loss\n0,0.5\n1,nan\n");
}

TEST_CASE("tau sweep") {
  MapSystem henon{MapKind::HenonScalar};
  const auto series = simulate(henon, Eigen::Vector2d(0.1, -0.1), 120);
  const auto eval = simulate(henon, Eigen::Vector2d(-0.2, 0.3), 300);
  TrainConfig cfg;
  cfg.iterations = 3;
  const auto sweep = rmse_tau_sweep(series, {0, 1, 2, 200}, {gaussian(1.0, 1.0)}, cfg, eval);
  REQUIRE(sweep.size() == 4);
  CHECK(sweep[0].rmse.has_value());
  CHECK(*sweep[0].rmse > *sweep[1].rmse);
  CHECK(*sweep[2].rmse < *sweep[1].rmse);
  CHECK_FALSE(sweep[3].rmse.has_value());
  CHECK_FALSE(sweep[3].error.empty());

  TrajectoryRecord constant;
  constant.states = Eigen::MatrixXd::Constant(60, 1, 0.25);
  TrainConfig none;
  none.iterations = 0;
  const auto flat = rmse_tau_sweep(constant, {1}, {gaussian(1.0, 1.0)}, none, constant);
  REQUIRE(flat.size() == 1);
  REQUIRE(flat[0].rmse.has_value());
  CHECK(*flat[0].rmse <= 1e-8);

  std::ostringstream out;
  write_sweep_csv(out, sweep);
  CHECK(out.str().rfind("tau,rmse\n0,", 0) == 0);
  CHECK(out.str().find("200,nan\n") != std::string::npos);
}
