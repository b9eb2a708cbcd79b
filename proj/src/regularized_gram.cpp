#include "kflow/regularized_gram.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "kflow/errors.hpp"

namespace kflow {
namespace {

constexpr double kMinRcond = 1e-15;

}  // namespace

RegularizedGram::RegularizedGram(const Eigen::MatrixXd& K, const NuggetPolicy& policy) : n_(K.rows()) {
  if (K.rows() != K.cols()) throw Error(ErrorCode::DimensionMismatch, "Gram matrix is not square");
  if (!K.allFinite()) throw Error(ErrorCode::NonFinite, "Gram matrix has non-finite entries");
  const double scale = n_ > 0 ? std::max(K.diagonal().cwiseAbs().mean(), 1e-300) : 1.0;
  const double first = policy.absolute ? *policy.absolute : policy.relative * scale;
  const double cap = std::max(policy.cap_relative * scale, first);
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n_, n_);

  double lambda = first;
  while (true) {
    Eigen::LLT<Eigen::MatrixXd> llt(K + lambda * identity);
    if (llt.info() == Eigen::Success) {
      regularized_ = K + lambda * identity;
      factor_ = std::move(llt);
      nugget_ = lambda;
      method_ = SolveMethod::Cholesky;
      return;
    }
    const double next = lambda > 0.0 ? 10.0 * lambda : 1e-10 * scale;
    if (next > cap * (1.0 + 1e-12)) break;
    spdlog::debug("Cholesky failed at nugget {:.3g}; escalating to {:.3g}", lambda, next);
    lambda = next;
    ++escalations_;
  }

  if (policy.allow_indefinite) {
    double mu = first;
    while (true) {
      Eigen::MatrixXd A = K + mu * identity;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
      const double rcond = lu.rcond();
      if (std::isfinite(rcond) && rcond > kMinRcond) {
        spdlog::debug("Gram matrix is indefinite; using pivoted LU at nugget {:.3g} (rcond {:.3g})", mu, rcond);
        regularized_ = std::move(A);
        factor_ = std::move(lu);
        nugget_ = mu;
        method_ = SolveMethod::LU;
        return;
      }
      const double next = mu > 0.0 ? 10.0 * mu : 1e-10 * scale;
      if (next > cap * (1.0 + 1e-12)) break;
      mu = next;
      ++escalations_;
    }
  }
  throw Error(ErrorCode::SingularGram, "no factorization of the regularized Gram matrix up to the nugget cap");
}

Eigen::VectorXd RegularizedGram::solve(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw Error(ErrorCode::DimensionMismatch, "right-hand side size differs from Gram size");
  return std::visit([&](const auto& f) -> Eigen::VectorXd { return f.solve(b); }, factor_);
}

Eigen::MatrixXd RegularizedGram::solve(const Eigen::MatrixXd& B) const {
  if (B.rows() != n_) throw Error(ErrorCode::DimensionMismatch, "right-hand side size differs from Gram size");
  return std::visit([&](const auto& f) -> Eigen::MatrixXd { return f.solve(B); }, factor_);
}

double RegularizedGram::quadratic_form(const Eigen::VectorXd& b) const { return b.dot(solve(b)); }

}  // namespace kflow
