#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kflow/embedding.hpp"
#include "kflow/kernels.hpp"
#include "kflow/regularized_gram.hpp"

namespace kflow {

struct BatchSample {
  std::vector<int> indices_b;
  std::vector<int> indices_c;  // the first floor(N_b / 2) entries of indices_b
  std::uint64_t rng_seed = 0;
};

/// Uniform batch of size N_b from 0..N-1 and a uniform half of it.
BatchSample sample_batch(Eigen::Index N, Eigen::Index Nb, std::uint64_t seed);

/// 1 - y_c^T K(Xc,Xc)^{-1} y_c / y_b^T K(Xb,Xb)^{-1} y_b for one component.
double rho(const KernelSpec& kernel, const Eigen::VectorXd& theta, const Eigen::MatrixXd& Xb, const Eigen::VectorXd& Yb,
           const Eigen::MatrixXd& Xc, const Eigen::VectorXd& Yc, const NuggetPolicy& nugget = {});

/// Sum over target components of rho with each component's own kernel.
double rho(const std::vector<KernelSpec>& kernels, const DelayDataset& data, const BatchSample& batch,
           const NuggetPolicy& nugget = {});

/// Squared MMD between the empirical measures of the rows of S1 and S2, with
/// the i = j terms included (V-statistic).
double mmd2(const KernelSpec& kernel, const Eigen::VectorXd& theta, const Eigen::MatrixXd& S1,
            const Eigen::MatrixXd& S2);

/// mmd2 between two disjoint uniform samples of m rows of X.
double rho_mmd(const KernelSpec& kernel, const Eigen::VectorXd& theta, const Eigen::MatrixXd& X, Eigen::Index m,
               std::uint64_t seed);

enum class LyapunovEstimator { DivergenceFit, MeanLogDerivative };

struct LyapunovConfig {
  int rollout_len = 2000;
  int transient_skip = 100;
  /// Neighbours closer than this are ignored; by default min_separation_factor
  /// times the mean inter-point distance.
  std::optional<double> min_separation;
  double min_separation_factor = 1e-3;
  int theiler_window = 10;  // neighbours within this many steps are excluded
  int fit_length = 20;
  /// Tracking stops once a pair separates beyond this fraction of the extent.
  double saturation_fraction = 0.1;
  LyapunovEstimator estimator = LyapunovEstimator::DivergenceFit;

  void validate() const;
};

/// Largest Lyapunov exponent per step. DivergenceFit pairs each point with its
/// nearest admissible neighbour and averages the log-distance growth rates.
/// MeanLogDerivative averages log|f'(x)| over a scalar series.
double lyapunov_max(const TrajectoryRecord& series, const LyapunovConfig& config,
                    const std::function<double(double)>& derivative = {});
double lyapunov_max(const Eigen::MatrixXd& states, const LyapunovConfig& config,
                    const std::function<double(double)>& derivative = {});

/// Rebuilds tau consecutive states from row `row` of a dataset whose inputs
/// cover every source component.
Eigen::MatrixXd seed_window_from(const DelayDataset& data, Eigen::Index row = 0);

/// |lambda_N - lambda_{N/2}| for surrogates fitted on all of data and on a
/// seeded uniform half. force_full_half replaces the half by the full set.
double rho_L(const std::vector<KernelSpec>& kernels, const DelayDataset& data, const LyapunovConfig& config,
             const Eigen::MatrixXd& seed_window, std::uint64_t seed, const NuggetPolicy& nugget = {},
             bool force_full_half = false);

}  // namespace kflow
