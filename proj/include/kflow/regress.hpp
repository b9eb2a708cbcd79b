#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "kflow/dynamics.hpp"
#include "kflow/embedding.hpp"
#include "kflow/kernels.hpp"
#include "kflow/regularized_gram.hpp"

namespace kflow {

/// Kernel interpolant of one output component.
struct ComponentFit {
  KernelSpec kernel;
  std::shared_ptr<const RegularizedGram> factor;
  Eigen::VectorXd coefficients;
  double residual = 0.0;  // |(K + lambda I) c - y|_inf
};

/// Per-component kernel interpolants of the one-step map. Immutable once built
/// by fit(); safe to share across threads.
class SurrogateModel {
 public:
  const Eigen::MatrixXd& X() const { return X_; }
  const Eigen::MatrixXd& Y() const { return Y_; }
  int tau() const { return tau_; }
  int source_dim() const { return source_dim_; }
  const std::vector<int>& input_components() const { return inputs_; }
  const std::vector<int>& target_components() const { return targets_; }
  const std::vector<ComponentFit>& components() const { return components_; }
  const NuggetPolicy& nugget_policy() const { return policy_; }
  Eigen::Index output_dim() const { return static_cast<Eigen::Index>(components_.size()); }
  Eigen::Index input_dim() const { return X_.cols(); }

  /// Sum of coefficients per component; persisted to detect a bad reload.
  Eigen::VectorXd checksum() const;

 private:
  friend SurrogateModel fit(const DelayDataset&, const std::vector<KernelSpec>&, const NuggetPolicy&);

  Eigen::MatrixXd X_;
  Eigen::MatrixXd Y_;
  int tau_ = 1;
  int source_dim_ = 1;
  std::vector<int> inputs_;
  std::vector<int> targets_;
  NuggetPolicy policy_;
  std::vector<ComponentFit> components_;
};

/// Solves (K_i + lambda I) c_i = Y_i for every target component, one kernel
/// (with its theta) per component. The nugget escalates until the solve meets
/// |residual|_inf <= 1e-8 max(1, |Y_i|_inf).
SurrogateModel fit(const DelayDataset& data, const std::vector<KernelSpec>& kernels, const NuggetPolicy& nugget = {});
SurrogateModel fit(const DelayDataset& data, const std::vector<KernelSpec>& kernels, double nugget);

Eigen::VectorXd predict_mean(const SurrogateModel& model, const Eigen::VectorXd& x);
/// Row-wise predictions for a batch of delay vectors.
Eigen::MatrixXd predict_mean(const SurrogateModel& model, const Eigen::MatrixXd& Xq);

/// Conditional variance K(x,x) - k(x)^T (K + lambda I)^{-1} k(x) per component.
/// Round-off negatives above -1e-10 are clamped to zero.
Eigen::VectorXd predict_variance(const SurrogateModel& model, const Eigen::VectorXd& x);

/// Half-width sigma_i(x) * sqrt(Y_i^T K_i(Xf, Xf)^{-1} Y_i) where (Xf, Yf) is
/// reference_data, normally the training points followed by the test points.
Eigen::VectorXd error_interval(const SurrogateModel& model, const Eigen::VectorXd& x,
                               const DelayDataset& reference_data);
/// Batch form: row j holds the half-widths at row j of Xq.
Eigen::MatrixXd error_intervals(const SurrogateModel& model, const Eigen::MatrixXd& Xq,
                                const DelayDataset& reference_data);
/// The norm factor sqrt(Y_i^T K_i(Xf, Xf)^{-1} Y_i) for each component.
Eigen::VectorXd reference_norms(const SurrogateModel& model, const DelayDataset& reference_data);

/// Free-running iteration from tau consecutive states (rows, oldest first,
/// full source dimension). Returns n_steps predicted states of the target
/// components; every input component must also be a target.
TrajectoryRecord rollout(const SurrogateModel& model, const Eigen::MatrixXd& seed_window, int n_steps,
                         double dt = 1.0);

/// Teacher-forced one-step predictions on eval_series, row k predicting Y_k.
Eigen::MatrixXd one_step_predictions(const SurrogateModel& model, const TrajectoryRecord& eval_series);
/// Root-mean-square one-step error per component.
Eigen::VectorXd one_step_errors(const SurrogateModel& model, const TrajectoryRecord& eval_series);

void save_model(std::ostream& out, const SurrogateModel& model);
void save_model(const std::string& path, const SurrogateModel& model);
/// Refits from the stored data and throws ChecksumMismatch when the
/// recomputed coefficients disagree with the stored checksum.
SurrogateModel load_model(std::istream& in);
SurrogateModel load_model(const std::string& path);

}  // namespace kflow
