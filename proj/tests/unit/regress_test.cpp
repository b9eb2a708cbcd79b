#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kflow/regress.hpp"

using namespace kflow;

namespace {

KernelSpec gaussian(double amp, double scale) {
  KernelSpec s;
  s.primitives = {{KernelKind::Gaussian}};
  s.theta = Eigen::Vector2d(amp, scale);
  return s;
}

KernelSpec laplace(double amp, double scale) {
  KernelSpec s = gaussian(amp, scale);
  s.primitives[0].kind = KernelKind::Laplace;
  return s;
}

DelayDataset dataset(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  DelayDataset d;
  d.X = X;
  d.Y = Y;
  d.tau = 1;
  d.source_dim = static_cast<int>(X.cols());
  for (int i = 0; i < X.cols(); ++i) d.input_components.push_back(i);
  for (int i = 0; i < Y.cols(); ++i) d.target_components.push_back(i);
  return d;
}

DelayDataset logistic_data(double x0, int steps) {
  MapSystem m{MapKind::Logistic};
  return delay_embed(simulate(m, Eigen::VectorXd::Constant(1, x0), steps), 1);
}

}  // namespace

TEST_CASE("nugget escalates on duplicate rows") {
  Eigen::MatrixXd K = Eigen::MatrixXd::Ones(2, 2);
  const RegularizedGram g(K, NuggetPolicy::exact());
  CHECK(g.nugget() > 0.0);
  CHECK(g.escalations() >= 1);
  const Eigen::VectorXd c = g.solve(Eigen::VectorXd(Eigen::Vector2d(1.0, 1.0)));
  CHECK((g.regularized() * c - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-8);
}

TEST_CASE("indefinite grams fall back to LU") {
  Eigen::Matrix2d K;
  K << 1.0, 2.0, 2.0, 1.0;
  const RegularizedGram g(K);
  CHECK(g.method() == SolveMethod::LU);
  const Eigen::Vector2d b(1.0, -1.0);
  CHECK((K * g.solve(Eigen::VectorXd(b)) - b).norm() < 1e-8);

  NuggetPolicy strict;
  strict.allow_indefinite = false;
  CHECK_THROWS_AS(RegularizedGram(K, strict), Error);
}

TEST_CASE("single point variance") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(1, 1);
  Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const auto model = fit(dataset(X, Y), {gaussian(1.0, 1.0)}, NuggetPolicy::exact());
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  CHECK(predict_variance(model, x)(0) == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-12));
  CHECK(predict_mean(model, x)(0) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(predict_variance(model, Eigen::VectorXd::Zero(1))(0) <= 1e-12);
}

TEST_CASE("interpolation is exact and the variance vanishes at the data") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> sc(0.3, 0.8);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + trial % 10;
    Eigen::MatrixXd X(n, 2);
    Eigen::MatrixXd Y(n, 1);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < n; ++i) Y(i, 0) = std::sin(X(i, 0)) + X(i, 1);
    KernelSpec k = gaussian(1.0, sc(rng));
    if (trial % 2) k.primitives[0].kind = KernelKind::Laplace;
    const auto model = fit(dataset(X, Y), {k}, NuggetPolicy::exact());
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd xj = X.row(j).transpose();
      CHECK(std::abs(predict_mean(model, xj)(0) - Y(j, 0)) <= 1e-8);
      CHECK(predict_variance(model, xj)(0) <= 1e-8);
    }
  }
}

TEST_CASE("adding a training point never raises the variance") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::MatrixXd X(6, 1);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(rng);
    const Eigen::MatrixXd Y = X.array().sin().matrix();
    const auto small = fit(dataset(X.topRows(5), Y.topRows(5)), {gaussian(1.0, 0.7)}, NuggetPolicy::exact());
    const auto large = fit(dataset(X, Y), {gaussian(1.0, 0.7)}, NuggetPolicy::exact());
    for (int q = 0; q < 10; ++q) {
      const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, u(rng));
      CHECK(predict_variance(large, x)(0) <= predict_variance(small, x)(0) + 1e-8);
    }
  }
}

TEST_CASE("fit residual invariant") {
  const auto data = logistic_data(0.1, 200);
  const auto model = fit(data, {gaussian(1.0, 1.0)});
  const auto& c = model.components()[0];
  const double lim = 1e-8 * std::max(1.0, data.Y.cwiseAbs().maxCoeff());
  CHECK(c.residual <= lim);
  CHECK((c.factor->regularized() * c.coefficients - data.Y.col(0)).cwiseAbs().maxCoeff() <= lim);
}

TEST_CASE("one-step errors") {
  MapSystem m{MapKind::Logistic};
  const auto series = simulate(m, Eigen::VectorXd::Constant(1, 0.3), 40);
  const auto data = delay_embed(series, 1);
  const auto model = fit(data, {laplace(1.0, 1.0)}, NuggetPolicy::exact());
  CHECK(one_step_errors(model, series)(0) <= 1e-8);

  DelayDataset zero = data;
  zero.Y.setZero();
  const auto zero_model = fit(zero, {gaussian(1.0, 0.3)});
  const double rms = std::sqrt(data.Y.col(0).squaredNorm() / static_cast<double>(data.size()));
  CHECK(one_step_errors(zero_model, series)(0) == doctest::Approx(rms).epsilon(1e-9));

  TrajectoryRecord short_series;
  short_series.states = Eigen::MatrixXd::Zero(1, 1);
  CHECK_THROWS_AS(one_step_errors(model, short_series), Error);
}

TEST_CASE("rollouts of trivial maps") {
  Eigen::MatrixXd X(5, 1);
  X << -1, -0.5, 0, 0.5, 1;
  const auto identity = fit(dataset(X, X), {gaussian(1.0, 1.0)}, NuggetPolicy::exact());
  const auto r = rollout(identity, Eigen::MatrixXd::Constant(1, 1, 0.5), 20);
  CHECK(r.length() == 20);
  CHECK((r.states.array() - 0.5).abs().maxCoeff() <= 1e-8);

  const auto zero = fit(dataset(X, Eigen::MatrixXd::Zero(5, 1)), {gaussian(1.0, 1.0)}, NuggetPolicy::exact());
  CHECK(rollout(zero, Eigen::MatrixXd::Constant(1, 1, 0.3), 10).states.isZero());
}

TEST_CASE("error intervals") {
  const auto train = logistic_data(0.1, 60);
  const auto exact = fit(train, {laplace(1.0, 1.0)}, NuggetPolicy::exact());
  CHECK(error_intervals(exact, train.X, train).maxCoeff() <= 1e-6);
  DelayDataset flat = train;
  flat.Y.setZero();
  CHECK(error_intervals(exact, train.X.topRows(5).array() + 0.01, flat).isZero());

  const auto model = fit(train, {gaussian(1.0, 0.3)});

  MapSystem m{MapKind::Logistic};
  const auto test = delay_embed(simulate(m, Eigen::VectorXd::Constant(1, M_PI / 4.0), 400), 1);
  const auto reference = concatenate(train, test);
  const Eigen::MatrixXd delta = error_intervals(model, test.X, reference);
  const Eigen::MatrixXd err = (predict_mean(model, test.X) - test.Y).cwiseAbs();
  int covered = 0;
  for (Eigen::Index j = 0; j < test.size(); ++j) covered += err(j, 0) <= delta(j, 0);
  CHECK(covered >= 0.95 * static_cast<double>(test.size()));
  CHECK(delta.maxCoeff() > 0.0);
}

TEST_CASE("model save and load") {
  const auto data = logistic_data(0.2, 80);
  const auto model = fit(data, {gaussian(1.0, 0.4)});
  std::stringstream buf;
  save_model(buf, model);
  const std::string text = buf.str();
  std::istringstream in(text);
  const auto loaded = load_model(in);
  const Eigen::MatrixXd q = Eigen::VectorXd::LinSpaced(37, 0.0, 1.0);
  CHECK((predict_mean(loaded, q) - predict_mean(model, q)).cwiseAbs().maxCoeff() <= 1e-12);

  auto doc = nlohmann::json::parse(text);
  doc["checksum"][0] = doc["checksum"][0].get<double>() + 1.0;
  std::istringstream bad(doc.dump());
  try {
    load_model(bad);
    FAIL("expected a checksum mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ChecksumMismatch);
  }
  std::istringstream junk("{not json");
  CHECK_THROWS_AS(load_model(junk), Error);
}
