#pragma once

#include <Eigen/Dense>

#include <optional>
#include <variant>

namespace kflow {

/// Diagonal regularization applied before solving with a Gram matrix.
///
/// The first attempt uses `absolute` when set, otherwise relative * scale where
/// scale is the mean absolute diagonal. Failed Cholesky factorizations escalate
/// the nugget by 10x until it exceeds cap_relative * scale. Gram matrices that
/// are genuinely indefinite (power-rational terms, triangular with squared
/// distances) never admit a Cholesky factor; when allow_indefinite is set they
/// are solved with a pivoted LU, escalating the nugget the same way until the
/// LU is not numerically singular.
struct NuggetPolicy {
  double relative = 1e-10;
  std::optional<double> absolute;
  double cap_relative = 1e-4;
  bool allow_indefinite = true;

  static NuggetPolicy exact() { return NuggetPolicy{0.0, 0.0, 1e-4, true}; }
};

enum class SolveMethod { Cholesky, LU };

/// Factorization of K + lambda I. Immutable after construction.
class RegularizedGram {
 public:
  /// Throws Error(SingularGram) when no admissible factorization exists.
  RegularizedGram(const Eigen::MatrixXd& K, const NuggetPolicy& policy = {});

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;

  /// b^T (K + lambda I)^{-1} b.
  double quadratic_form(const Eigen::VectorXd& b) const;

  double nugget() const { return nugget_; }
  int escalations() const { return escalations_; }
  SolveMethod method() const { return method_; }
  Eigen::Index size() const { return n_; }
  const Eigen::MatrixXd& regularized() const { return regularized_; }

 private:
  Eigen::MatrixXd regularized_;
  std::variant<Eigen::LLT<Eigen::MatrixXd>, Eigen::PartialPivLU<Eigen::MatrixXd>> factor_;
  double nugget_ = 0.0;
  int escalations_ = 0;
  SolveMethod method_ = SolveMethod::Cholesky;
  Eigen::Index n_ = 0;
};

}  // namespace kflow
