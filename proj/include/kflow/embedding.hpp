#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kflow/dynamics.hpp"
#include "kflow/kernels.hpp"
#include "kflow/regularized_gram.hpp"

namespace kflow {

/// Supervised pairs built from a series: row k of X is the window
/// (x_{k+tau-1}, ..., x_k) restricted to input_components, newest state first,
/// and row k of Y is x_{k+tau} restricted to target_components.
///
/// tau = 0 is the empty window: X has no columns and Y is the series itself,
/// which makes the memoryless baseline available to delay sweeps.
struct DelayDataset {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  int tau = 1;
  int source_dim = 1;
  std::vector<int> input_components;
  std::vector<int> target_components;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index input_dim() const { return X.cols(); }
  Eigen::Index output_dim() const { return Y.cols(); }
  DelayDataset subset(const std::vector<int>& rows) const;
};

/// An empty component list selects every component of the series.
DelayDataset delay_embed(const TrajectoryRecord& series, int tau, std::vector<int> targets = {},
                         std::vector<int> inputs = {});

/// Builds the window for predicting the state after `states` (newest last in
/// the matrix, i.e. natural time order) in the layout used by delay_embed.
Eigen::VectorXd delay_window(const Eigen::MatrixXd& states, const std::vector<int>& inputs);

/// Appends the rows of b below those of a; both must share tau and components.
DelayDataset concatenate(const DelayDataset& a, const DelayDataset& b);

struct KmdEnergyProfile {
  Eigen::VectorXd energies;  // one entry per delay 0..tau_max
  int tau_max = 0;
  KernelSpec base_kernel;
  /// v^T (K + lambda I)^{-1} v for the summed kernel; equals energies.sum().
  double total_energy = 0.0;
  double nugget = 0.0;
};

/// Kernel 1 + exp(-|x-y|^2) used for delay selection by default.
KernelSpec default_kmd_kernel();
/// Relative nugget 1e-7. The summed delay Gram is close to singular and the
/// energies are quadratic forms in its (large) coefficients, so at 1e-10 they
/// no longer add up to the total beyond ~1e-7 relative.
NuggetPolicy default_kmd_nugget();

/// Alignment energies of the delay kernels K_i(x, y) = K(S_i x, S_i y), where
/// S_i keeps the i most recent entries of a window (S_0 keeps none, so K_0 is
/// the constant K(0)). The nugget of the summed Gram is shared equally among
/// the K_i so that the energies add up to v^T (K + lambda I)^{-1} v.
KmdEnergyProfile kmd_energies(const TrajectoryRecord& series, int tau_max,
                              const KernelSpec& base_kernel = default_kmd_kernel(),
                              const NuggetPolicy& nugget = default_kmd_nugget());

/// Smallest delay attaining the maximal energy.
int select_tau_kmd(const KmdEnergyProfile& profile);

void write_energy_csv(std::ostream& out, const KmdEnergyProfile& profile);

}  // namespace kflow
