#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "kflow/embedding.hpp"
#include "kflow/kernels.hpp"
#include "kflow/metrics.hpp"

namespace kflow {

enum class Metric { Rho, RhoL, RhoMMD };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

/// Bounds on slot `slot` of the kernel for component `component`.
/// lo == hi freezes the slot.
struct ThetaClamp {
  int component = 0;
  int slot = 0;
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const ThetaClamp&) const = default;
};

struct TrainConfig {
  Metric metric = Metric::Rho;
  int iterations = 100;
  double step_size = 0.1;
  double gradient_clip = 1.0;  // gradients longer than this are rescaled to it
  /// rho batch size N_b; 0 takes every point.
  Eigen::Index batch_size = 0;
  Eigen::Index mmd_sample_size = 50;
  std::uint64_t rng_seed = 0;
  double fd_step = 1e-4;
  std::vector<ThetaClamp> theta_clamps;
  /// Rescale the amplitude slots of each kernel to unit norm (rho_MMD would
  /// otherwise shrink the kernel to a constant).
  std::optional<bool> normalize_amplitudes;
  int snapshot_every = 10;
  /// A run of skipped iterations longer than this fraction aborts training.
  double stall_fraction = 0.5;
  NuggetPolicy nugget;
  LyapunovConfig lyapunov;
  /// Rollout start for rho_L; defaults to the window of the first delay vector.
  std::optional<Eigen::MatrixXd> rollout_seed;

  void validate() const;
  bool amplitudes_normalized() const { return normalize_amplitudes.value_or(metric == Metric::RhoMMD); }
};

struct TrainRecord {
  int iteration = 0;
  double loss = 0.0;  // NaN when the iteration was skipped
  std::uint64_t seed = 0;
  bool skipped = false;
  double gradient_norm = 0.0;
  int failed_probes = 0;
};

struct ThetaSnapshot {
  int iteration = 0;
  std::vector<Eigen::VectorXd> theta;  // per component
};

struct TrainHistory {
  std::vector<TrainRecord> records;
  std::vector<ThetaSnapshot> snapshots;
  std::vector<int> last_batch;  // rows of the final rho batch, empty for other metrics

  std::size_t size() const { return records.size(); }
};

struct TrainResult {
  std::vector<KernelSpec> kernels;  // theta* inside each spec
  TrainHistory history;
};

struct GradientResult {
  Eigen::VectorXd gradient;
  std::vector<bool> failed;  // probes that raised errors; their entries are 0
  int failed_count = 0;
};

/// Central differences with step fd_step * max(1, |theta_i|). Slots with
/// active[i] == false are skipped (zero, not flagged).
GradientResult numerical_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                                  const Eigen::VectorXd& theta, double fd_step, const std::vector<bool>& active = {});

/// Concatenated theta of several kernels, and the inverse split.
Eigen::VectorXd stack_theta(const std::vector<KernelSpec>& kernels);
std::vector<KernelSpec> with_theta(std::vector<KernelSpec> kernels, const Eigen::VectorXd& stacked);

/// The loss configured by `config` at the given kernels for iteration seed
/// `seed`. Exposed so callers can report the loss of an untrained kernel.
double evaluate_loss(const std::vector<KernelSpec>& kernels, const DelayDataset& data, const TrainConfig& config,
                     std::uint64_t seed);

/// Kernel Flows: per iteration draw a batch, differentiate the loss in theta
/// and step against the clipped gradient.
TrainResult kernel_flow(const DelayDataset& data, const std::vector<KernelSpec>& kernels, const TrainConfig& config);

void write_history_csv(std::ostream& out, const TrainHistory& history);

}  // namespace kflow
