#include <doctest.h>

#include <cmath>
#include <random>

#include "kflow/embedding.hpp"

using namespace kflow;

namespace {

TrajectoryRecord series_of(std::initializer_list<double> values) {
  TrajectoryRecord t;
  t.states = Eigen::Map<const Eigen::VectorXd>(values.begin(), static_cast<Eigen::Index>(values.size()));
  return t;
}

}  // namespace

TEST_CASE("delay_embed examples") {
  const auto s = series_of({1, 2, 3, 4});
  const auto d = delay_embed(s, 2);
  REQUIRE(d.size() == 2);
  CHECK(d.X(0, 0) == 2);
  CHECK(d.X(0, 1) == 1);
  CHECK(d.X(1, 0) == 3);
  CHECK(d.X(1, 1) == 2);
  CHECK(d.Y(0, 0) == 3);
  CHECK(d.Y(1, 0) == 4);

  const auto one = delay_embed(s, 1);
  CHECK(one.size() == 3);
  CHECK(one.X.col(0) == Eigen::Vector3d(1, 2, 3));

  const auto none = delay_embed(s, 0);
  CHECK(none.input_dim() == 0);
  CHECK(none.Y.col(0) == Eigen::Vector4d(1, 2, 3, 4));

  CHECK_THROWS_AS(delay_embed(s, 4), Error);
}

TEST_CASE("partial observation embedding") {
  TrajectoryRecord t;
  t.states.resize(4, 2);
  t.states << 1, 10, 2, 20, 3, 30, 4, 40;
  const auto d = delay_embed(t, 2, {0, 1}, {0});
  CHECK(d.input_dim() == 2);
  CHECK(d.output_dim() == 2);
  CHECK(d.X.row(0) == Eigen::RowVector2d(2, 1));
  CHECK(d.Y.row(0) == Eigen::RowVector2d(3, 30));
  CHECK_THROWS_AS(delay_embed(t, 1, {2}), Error);

  Eigen::MatrixXd states(2, 2);
  states << 3, 30, 4, 40;
  CHECK(delay_window(states, {0}) == Eigen::Vector2d(4, 3));
}

TEST_CASE("embedding round trip and purity") {
  MapSystem logistic{MapKind::Logistic};
  const auto s = simulate(logistic, Eigen::VectorXd::Constant(1, 0.2), 60);
  for (int tau = 0; tau <= 5; ++tau) {
    const auto d = delay_embed(s, tau);
    CHECK(d.Y.col(0) == s.states.col(0).tail(s.length() - tau));
    const auto again = delay_embed(s, tau);
    CHECK(again.X == d.X);
  }
  const auto d = delay_embed(s, 3);
  const auto sub = d.subset({4, 1});
  CHECK(sub.X.row(0) == d.X.row(4));
  CHECK(sub.Y.row(1) == d.Y.row(1));
  const auto both = concatenate(d, sub);
  CHECK(both.size() == d.size() + 2);
  CHECK_THROWS_AS(concatenate(d, delay_embed(s, 2)), Error);
}

TEST_CASE("KMD energies add up to the total energy") {
  MapSystem henon{MapKind::HenonScalar};
  const auto s = simulate(henon, Eigen::Vector2d(0.1, -0.1), 150);
  for (int tau_max : {0, 1, 3, 6}) {
    const auto p = kmd_energies(s, tau_max);
    CHECK(p.energies.size() == tau_max + 1);
    CHECK(std::abs(p.energies.sum() - p.total_energy) <= 1e-8 * std::abs(p.total_energy));
  }
}

TEST_CASE("KMD selection prefers the smallest maximizer") {
  KmdEnergyProfile p;
  p.energies = Eigen::Vector4d(0.1, 0.5, 0.5, 0.2);
  CHECK(select_tau_kmd(p) == 1);
  p.energies = Eigen::VectorXd::Constant(1, 3.0);
  CHECK(select_tau_kmd(p) == 0);
}

TEST_CASE("KMD on the scalar Henon series peaks at one delay") {
  MapSystem henon{MapKind::HenonScalar};
  const auto s = simulate(henon, Eigen::Vector2d(0.1, -0.1), 499);
  CHECK(select_tau_kmd(kmd_energies(s, 6)) == 1);
}
