#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kflow/errors.hpp"

namespace kflow {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Radial kernel families. Each one is a function of r = |x - y|_2 only.
enum class KernelKind {
  Constant,         // a
  Triangular,       // a * max(0, 1 - r^2 / s)
  Gaussian,         // a * exp(-r^2 / s^2)
  Laplace,          // a * exp(-r / s^2)
  LocallyPeriodic,  // a * exp(-w sin^2(f pi r^p)) * exp(-r^2 / l^2)
  Quadratic,        // a * r^2
  PowerRational,    // a + (b + r^g)^e
};

enum class ParameterMode { Raw, SquaredAmplitudes };

/// Smallest magnitude allowed for a length-scale slot during evaluation.
inline constexpr double kMinScale = 1e-8;

struct KernelPrimitive {
  KernelKind kind = KernelKind::Gaussian;
  /// Power of r inside the sine of LocallyPeriodic (1 or 2). Ignored elsewhere.
  int sin_power = 2;

  bool operator==(const KernelPrimitive&) const = default;
};

int slot_count(KernelKind kind);
std::vector<std::string_view> slot_names(KernelKind kind);
/// Slots that are length scales and get clamped away from zero.
std::vector<bool> scale_slots(KernelKind kind);
std::string_view to_string(KernelKind kind);
KernelKind kernel_kind_from_string(std::string_view name);
std::string_view to_string(ParameterMode mode);
ParameterMode parameter_mode_from_string(std::string_view name);

/// A weighted sum of radial primitives together with its parameter vector.
/// The amplitude of every primitive lives in its first slot.
struct KernelSpec {
  std::vector<KernelPrimitive> primitives;
  ParameterMode mode = ParameterMode::Raw;
  Eigen::VectorXd theta;

  int parameter_count() const;
  /// Offsets of each primitive's first slot inside theta.
  std::vector<int> offsets() const;
  /// Indices of the amplitude slots inside theta.
  std::vector<int> amplitude_slots() const;

  bool operator==(const KernelSpec& other) const {
    return primitives == other.primitives && mode == other.mode && theta == other.theta;
  }
};

/// Throws ParameterArity unless n matches the slot count of spec.
void check_arity(const KernelSpec& spec, Eigen::Index n);

/// Number of scale slots that were clamped to kMinScale since process start.
std::uint64_t scale_clamp_count() noexcept;
void reset_scale_clamp_count() noexcept;

namespace detail {

void note_scale_clamp() noexcept;
[[noreturn]] void throw_non_finite(KernelKind kind, double r);

template <typename Scalar>
Scalar clamp_scale(Scalar s) {
  using std::abs;
  if (abs(s) < Scalar(kMinScale)) {
    note_scale_clamp();
    return s < Scalar(0) ? Scalar(-kMinScale) : Scalar(kMinScale);
  }
  return s;
}

template <typename Scalar>
Scalar primitive_value(const KernelPrimitive& p, ParameterMode mode, const Scalar* slot, Scalar r) {
  using std::exp;
  using std::pow;
  using std::sin;
  const Scalar amp = mode == ParameterMode::SquaredAmplitudes ? slot[0] * slot[0] : slot[0];
  const Scalar r2 = r * r;
  switch (p.kind) {
    case KernelKind::Constant:
      return amp;
    case KernelKind::Triangular: {
      const Scalar s = clamp_scale(slot[1]);
      return amp * std::max(Scalar(0), Scalar(1) - r2 / s);
    }
    case KernelKind::Gaussian: {
      const Scalar s = clamp_scale(slot[1]);
      return amp * exp(-r2 / (s * s));
    }
    case KernelKind::Laplace: {
      const Scalar s = clamp_scale(slot[1]);
      return amp * exp(-r / (s * s));
    }
    case KernelKind::LocallyPeriodic: {
      const Scalar l = clamp_scale(slot[3]);
      const Scalar arg = p.sin_power == 1 ? r : r2;
      const Scalar sn = sin(slot[2] * Scalar(EIGEN_PI) * arg);
      return amp * exp(-slot[1] * sn * sn - r2 / (l * l));
    }
    case KernelKind::Quadratic:
      return amp * r2;
    case KernelKind::PowerRational: {
      if (r == Scalar(0) && slot[2] < Scalar(0)) throw_non_finite(p.kind, 0.0);
      return amp + pow(slot[1] + pow(r, slot[2]), slot[3]);
    }
  }
  return Scalar(0);
}

}  // namespace detail

/// Kernel value at distance r.
template <typename Scalar>
Scalar eval_radial(const KernelSpec& spec, const Vector<Scalar>& theta, Scalar r) {
  check_arity(spec, theta.size());
  Scalar total(0);
  const Scalar* slot = theta.data();
  for (const auto& p : spec.primitives) {
    const Scalar v = detail::primitive_value(p, spec.mode, slot, r);
    using std::isfinite;
    if (!isfinite(v)) detail::throw_non_finite(p.kind, static_cast<double>(r));
    total += v;
    slot += slot_count(p.kind);
  }
  return total;
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar eval(const KernelSpec& spec, const Vector<typename DerivedX::Scalar>& theta,
                               const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "kernel arguments have different dimensions");
  }
  return eval_radial(spec, theta, (x.derived() - y.derived()).norm());
}

/// Euclidean distances between the rows of A.
template <typename Derived>
Matrix<typename Derived::Scalar> pairwise_distances(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = A.rows();
  Matrix<Scalar> D(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    D(j, j) = Scalar(0);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      D(i, j) = (A.row(i) - A.row(j)).norm();
      D(j, i) = D(i, j);
    }
  }
  return D;
}

/// Euclidean distances between rows of A (result rows) and rows of B (result columns).
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> cross_distances(const Eigen::MatrixBase<DerivedA>& A,
                                                  const Eigen::MatrixBase<DerivedB>& B) {
  if (A.cols() != B.cols() && A.rows() > 0 && B.rows() > 0) {
    throw Error(ErrorCode::DimensionMismatch, "point sets have different dimensions");
  }
  Matrix<typename DerivedA::Scalar> D(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    for (Eigen::Index i = 0; i < A.rows(); ++i) D(i, j) = (A.row(i) - B.row(j)).norm();
  }
  return D;
}

/// Applies the kernel entrywise to a symmetric distance matrix; each unordered
/// pair is evaluated once so the result is exactly symmetric.
template <typename Scalar>
Matrix<Scalar> gram_from_distances(const KernelSpec& spec, const Vector<Scalar>& theta, const Matrix<Scalar>& D) {
  check_arity(spec, theta.size());
  const Eigen::Index n = D.rows();
  Matrix<Scalar> K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      K(i, j) = eval_radial(spec, theta, D(i, j));
      K(j, i) = K(i, j);
    }
  }
  return K;
}

template <typename Scalar>
Matrix<Scalar> kernel_from_distances(const KernelSpec& spec, const Vector<Scalar>& theta, const Matrix<Scalar>& D) {
  check_arity(spec, theta.size());
  return D.unaryExpr([&](Scalar r) { return eval_radial(spec, theta, r); });
}

/// N x N Gram matrix over the rows of X.
template <typename Derived>
Matrix<typename Derived::Scalar> gram(const KernelSpec& spec, const Vector<typename Derived::Scalar>& theta,
                                      const Eigen::MatrixBase<Derived>& X) {
  return gram_from_distances(spec, theta, pairwise_distances(X));
}

/// Vector of kernel values between x and every row of X.
template <typename Derivedx, typename DerivedX>
Vector<typename DerivedX::Scalar> cross_gram(const KernelSpec& spec, const Vector<typename DerivedX::Scalar>& theta,
                                             const Eigen::MatrixBase<Derivedx>& x,
                                             const Eigen::MatrixBase<DerivedX>& X) {
  using Scalar = typename DerivedX::Scalar;
  check_arity(spec, theta.size());
  Vector<Scalar> k(X.rows());
  if (X.rows() == 0) return k;
  if (x.size() != X.cols()) throw Error(ErrorCode::DimensionMismatch, "query point dimension differs from data");
  const auto xr = x.derived().reshaped().transpose().eval();
  for (Eigen::Index i = 0; i < X.rows(); ++i) k(i) = eval_radial(spec, theta, Scalar((X.row(i) - xr).norm()));
  return k;
}

/// Kernel matrix between the rows of A and the rows of B.
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> cross_gram_matrix(const KernelSpec& spec,
                                                    const Vector<typename DerivedA::Scalar>& theta,
                                                    const Eigen::MatrixBase<DerivedA>& A,
                                                    const Eigen::MatrixBase<DerivedB>& B) {
  return kernel_from_distances(spec, theta, cross_distances(A, B));
}

}  // namespace kflow
