#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "kflow/errors.hpp"

namespace kflow {

enum class MapKind { Bernoulli, Logistic, Henon, HenonScalar };

struct MapSystem {
  MapKind kind = MapKind::Logistic;
  double a = 1.4;  // Henon only
  double b = 0.3;  // Henon only

  /// Dimension of the state consumed by map_step (HenonScalar takes the pair
  /// (x_k, x_{k-1}), newest first).
  int input_dim() const;
  /// Dimension of the recorded trajectory.
  int state_dim() const;
};

struct OdeSystem {
  double s = 10.0;
  double r = 28.0;
  double b = 10.0 / 3.0;
  double h = 0.01;
};

struct TrajectoryOrigin {
  std::string system;
  std::string initial_condition;
  std::uint64_t seed = 0;
};

/// States are stored one per row.
struct TrajectoryRecord {
  Eigen::MatrixXd states;
  double dt = 1.0;
  TrajectoryOrigin origin;

  Eigen::Index length() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
};

std::string_view to_string(MapKind kind);
MapKind map_kind_from_string(std::string_view name);

Eigen::VectorXd map_step(const MapSystem& system, const Eigen::VectorXd& state);

Eigen::Vector3d lorenz_rhs(const OdeSystem& params, const Eigen::Vector3d& state);

/// One classical fourth-order Runge-Kutta step of dx/dt = rhs(x).
template <typename Rhs, typename State>
State rk4_step(Rhs&& rhs, const State& state, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
  const State k1 = rhs(state);
  const State k2 = rhs(State(state + 0.5 * h * k1));
  const State k3 = rhs(State(state + 0.5 * h * k2));
  const State k4 = rhs(State(state + h * k3));
  State next = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw Error(ErrorCode::NonFinite, "Runge-Kutta step produced a non-finite state");
  return next;
}

/// Iterates a map n_steps times in double precision. For HenonScalar, x0 is
/// the pair (x_0, x_{-1}) and the recorded series is scalar.
TrajectoryRecord simulate(const MapSystem& system, const Eigen::VectorXd& x0, int n_steps);

/// Samples the RK4 flow of the Lorenz system every params.h.
TrajectoryRecord simulate(const OdeSystem& system, const Eigen::Vector3d& x0, int n_steps);

/// Bernoulli orbit computed with enough binary digits that every recorded
/// state is exact to double precision. In double arithmetic the doubling map
/// shifts out one mantissa bit per step and reaches 0 after ~53 iterations.
/// x0 is an expression such as "pi/3", "0.1" or "3*pi/4"; it is reduced mod 1.
TrajectoryRecord simulate_bernoulli_exact(std::string_view x0, int n_steps);

/// Evaluates an initial-condition expression (number, "pi", products and
/// quotients of those) to double precision.
double parse_initial_value(std::string_view expr);

/// CSV with header t,x0,...,x{d-1}; t = step index * dt.
void write_csv(std::ostream& out, const TrajectoryRecord& traj);
void write_csv(const std::string& path, const TrajectoryRecord& traj);

}  // namespace kflow
