#pragma once

#include <Eigen/Dense>

#include <cmath>

// Reference values computed directly from the model equations, independent of
// the library code under test.
namespace oracle {

/// Largest Henon exponent from the product of Jacobians along an orbit,
/// re-orthonormalized with a QR step each iteration.
inline double henon_lyapunov(double a, double b, double x, double y, int steps, int burn_in = 1000) {
  for (int k = 0; k < burn_in; ++k) {
    const double nx = 1.0 - a * x * x + y;
    y = b * x;
    x = nx;
  }
  Eigen::Vector2d v(1.0, 0.0);
  double sum = 0.0;
  for (int k = 0; k < steps; ++k) {
    Eigen::Matrix2d J;
    J << -2.0 * a * x, 1.0, b, 0.0;
    v = J * v;
    const double norm = v.norm();
    sum += std::log(norm);
    v /= norm;
    const double nx = 1.0 - a * x * x + y;
    y = b * x;
    x = nx;
  }
  return sum / steps;
}

/// Orbit average of ln|f'(x)| = ln|4 - 8x| for the logistic map at r = 4.
inline double logistic_lyapunov(double x, int steps) {
  double sum = 0.0;
  for (int k = 0; k < steps; ++k) {
    sum += std::log(std::abs(4.0 - 8.0 * x));
    x = 4.0 * x * (1.0 - x);
  }
  return sum / steps;
}

/// rho for a two-point b-set {0, 1} with targets (1, 0), c-set {0}, Gaussian
/// with unit amplitude and scale: 1 - 1 / (Yb^T K^-1 Yb) with
/// K = [[1, e^-1], [e^-1, 1]], so Yb^T K^-1 Yb = 1 / (1 - e^-2).
inline double two_point_rho() { return std::exp(-2.0); }

/// Squared MMD between {0} and {1} under the same kernel.
inline double two_singleton_mmd2() { return 2.0 - 2.0 * std::exp(-1.0); }

/// Four-point Richardson extrapolation of the central difference quotient.
template <typename F>
double richardson_derivative(F&& f, double x, double h) {
  const auto d = [&](double s) { return (f(x + s) - f(x - s)) / (2.0 * s); };
  const double d1 = d(h);
  const double d2 = d(h / 2.0);
  const double d4 = d(h / 4.0);
  const double d8 = d(h / 8.0);
  const double r1 = (4.0 * d2 - d1) / 3.0;
  const double r2 = (4.0 * d4 - d2) / 3.0;
  const double r3 = (4.0 * d8 - d4) / 3.0;
  const double s1 = (16.0 * r2 - r1) / 15.0;
  const double s2 = (16.0 * r3 - r2) / 15.0;
  return (64.0 * s2 - s1) / 63.0;
}

}  // namespace oracle
