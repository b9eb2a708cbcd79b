#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kflow/dynamics.hpp"

using namespace kflow;

TEST_CASE("map steps") {
  MapSystem logistic{MapKind::Logistic};
  CHECK(map_step(logistic, Eigen::VectorXd::Constant(1, 0.5))(0) == 1.0);
  MapSystem bern{MapKind::Bernoulli};
  CHECK(map_step(bern, Eigen::VectorXd::Constant(1, 0.75))(0) == 0.5);
  MapSystem henon{MapKind::Henon};
  const Eigen::VectorXd h = map_step(henon, Eigen::Vector2d(0.5, 0.2));
  CHECK(h(0) == doctest::Approx(1.0 - 1.4 * 0.25 + 0.2));
  CHECK(h(1) == doctest::Approx(0.15));
  MapSystem scalar{MapKind::HenonScalar};
  CHECK(map_step(scalar, Eigen::Vector2d(0.5, 0.2))(0) == doctest::Approx(1.0 - 1.4 * 0.25 + 0.3 * 0.2));
  CHECK_THROWS_AS(map_step(henon, Eigen::VectorXd::Zero(1)), Error);
}

TEST_CASE("rk4 examples") {
  const auto decay = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; };
  const double h = 0.01;
  const double step = rk4_step(decay, Eigen::VectorXd(Eigen::VectorXd::Ones(1)), h)(0);
  CHECK(step == doctest::Approx(1.0 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24).epsilon(1e-15));
  CHECK(step == doctest::Approx(0.99004983375).epsilon(1e-11));

  const auto zero = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(x.size()); };
  CHECK(rk4_step(zero, Eigen::VectorXd(Eigen::VectorXd::Constant(2, 3.0)), 0.1) == Eigen::VectorXd::Constant(2, 3.0));

  const auto constant = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(x.size(), 2.0); };
  CHECK(rk4_step(constant, Eigen::VectorXd(Eigen::VectorXd::Zero(1)), 0.25)(0) == 0.5);
  CHECK_THROWS_AS(rk4_step(decay, Eigen::VectorXd(Eigen::VectorXd::Ones(1)), 0.0), Error);
}

TEST_CASE("rk4 local error is fifth order") {
  const auto decay = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -x; };
  for (double h : {0.2, 0.1, 0.05}) {
    const double e1 = std::abs(rk4_step(decay, Eigen::VectorXd(Eigen::VectorXd::Ones(1)), h)(0) - std::exp(-h));
    const double e2 = std::abs(rk4_step(decay, Eigen::VectorXd(Eigen::VectorXd::Ones(1)), h / 2)(0) - std::exp(-h / 2));
    const double ratio = e1 / e2;
    CHECK(ratio >= 28.0);
    CHECK(ratio <= 36.0);
  }
}

TEST_CASE("simulate maps") {
  MapSystem logistic{MapKind::Logistic};
  const auto zero = simulate(logistic, Eigen::VectorXd::Constant(1, 0.3), 0);
  CHECK(zero.length() == 1);
  CHECK(zero.states(0, 0) == 0.3);

  const auto t = simulate(logistic, Eigen::VectorXd::Constant(1, 0.1), 1000);
  CHECK(t.length() == 1001);
  CHECK(t.states.minCoeff() >= 0.0);
  CHECK(t.states.maxCoeff() <= 1.0);

  const auto again = simulate(logistic, Eigen::VectorXd::Constant(1, 0.1), 1000);
  CHECK(again.states == t.states);

  MapSystem henon{MapKind::Henon, 1.4, 0.3};
  CHECK_THROWS_AS(simulate(henon, Eigen::Vector2d(10.0, 10.0), 2000), Error);
}

TEST_CASE("exact bernoulli orbits") {
  const auto t = simulate_bernoulli_exact("pi/3", 200);
  CHECK(t.length() == 201);
  CHECK(t.states.allFinite());
  CHECK(t.states.minCoeff() >= 0.0);
  CHECK(t.states.maxCoeff() < 1.0);
  CHECK(t.states(0, 0) == doctest::Approx(M_PI / 3.0 - 1.0));
  // A double orbit has shifted out its mantissa by now; the exact one has not.
  CHECK(t.states.bottomRows(50).maxCoeff() > 0.0);
  for (Eigen::Index k = 0; k < 200; ++k) {
    const double d = 2.0 * t.states(k, 0);
    CHECK(t.states(k + 1, 0) == doctest::Approx(d - std::floor(d)).epsilon(1e-12));
  }
}

TEST_CASE("initial value expressions") {
  CHECK(parse_initial_value("0.25") == 0.25);
  CHECK(parse_initial_value("pi/3") == doctest::Approx(M_PI / 3.0));
  CHECK(parse_initial_value("3*pi/4") == doctest::Approx(0.75 * M_PI));
  CHECK_THROWS_AS(parse_initial_value("pie"), Error);
}

TEST_CASE("lorenz trajectory stays bounded") {
  OdeSystem lorenz;
  const auto t = simulate(lorenz, Eigen::Vector3d(0.0, 1.0, 1.05), 10000);
  CHECK(t.length() == 10001);
  CHECK(t.dt == 0.01);
  CHECK(t.states.cwiseAbs().maxCoeff() < 100.0);
}

TEST_CASE("trajectory csv") {
  MapSystem logistic{MapKind::Logistic};
  const auto t = simulate(logistic, Eigen::VectorXd::Constant(1, 0.5), 2);
  std::ostringstream out;
  write_csv(out, t);
  CHECK(out.str() == "t,x0\n0,0.5\n1,1\n2,0\n");
}
