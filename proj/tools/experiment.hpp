#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kflow/dynamics.hpp"
#include "kflow/embedding.hpp"
#include "kflow/regress.hpp"
#include "kflow/tau_sweep.hpp"
#include "kflow/train.hpp"

namespace kflow::cli {

struct SystemConfig {
  std::string kind = "logistic";  // bernoulli | logistic | henon | lorenz
  double a = 1.4;
  double b = 0.3;
  double s = 10.0;
  double r = 28.0;
  double beta = 10.0 / 3.0;
  double h = 0.01;
  /// Bernoulli orbits are computed in multiple precision unless this is off.
  bool exact = true;

  bool operator==(const SystemConfig&) const = default;
};

struct DataConfig {
  /// A scalar expression ("pi/3") or comma-separated components ("0.9,-0.9").
  std::string initial_condition = "0.1";
  /// Number of delay pairs (X_k, Y_k) in the training set.
  int train_points = 200;
  int test_points = 5000;
  std::vector<std::string> test_initial_conditions;
  /// Simulated components that are recorded; empty keeps all.
  std::vector<int> observe;
  int tau = 1;
  std::vector<int> inputs;   // components of the recorded series in each window; empty = all
  std::vector<int> targets;  // predicted components; empty = all

  bool operator==(const DataConfig&) const = default;
};

struct KernelConfig {
  std::vector<std::string> primitives{"gaussian"};
  int sin_power = 2;
  std::string mode = "raw";
  /// Initial parameters, one row per target component; a single row is shared.
  std::vector<std::vector<double>> theta0{{1.0, 1.0}};

  bool operator==(const KernelConfig&) const = default;
};

struct LyapunovSettings {
  int rollout_len = 2000;
  int transient_skip = 100;
  double min_separation_factor = 1e-3;
  int theiler_window = 10;
  int fit_length = 20;
  double saturation_fraction = 0.1;

  bool operator==(const LyapunovSettings&) const = default;
};

struct TrainSettings {
  std::string metric = "rho";
  int iterations = 100;
  double step_size = 0.1;
  double gradient_clip = 1.0;
  int batch_size = 0;
  int mmd_sample_size = 50;
  std::uint64_t seed = 0;
  double fd_step = 1e-4;
  std::string normalize_amplitudes = "auto";  // auto | on | off
  int snapshot_every = 10;
  double stall_fraction = 0.5;
  double nugget = 1e-10;  // relative to the mean Gram diagonal
  double nugget_cap = 1e-4;
  /// Interpolate with the last training batch instead of all points.
  bool fit_on_last_batch = false;
  std::vector<ThetaClamp> clamps;
  LyapunovSettings lyapunov;

  bool operator==(const TrainSettings&) const = default;
};

struct TauSettings {
  std::vector<int> taus{0, 1, 2, 3, 4, 5, 6};
  int tau_max = 6;
  /// Length of the scalar series used for the alignment energies.
  int kmd_points = 500;
  /// Relative nugget of the summed delay Gram; smaller values lose the
  /// energy-sum identity to round-off.
  double kmd_nugget = 1e-7;

  bool operator==(const TauSettings&) const = default;
};

struct ExperimentConfig {
  std::string name = "custom";
  std::string output_dir = "runs/custom";
  SystemConfig system;
  DataConfig data;
  KernelConfig kernel;
  TrainSettings train;
  TauSettings tau;

  bool operator==(const ExperimentConfig&) const = default;
};

std::string to_toml(const ExperimentConfig& config);
ExperimentConfig config_from_toml(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Sets a dotted field ("train.iterations") from its TOML literal; bare words
/// are taken as strings.
void apply_override(ExperimentConfig& config, const std::string& dotted, const std::string& value);
void validate(const ExperimentConfig& config);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

NuggetPolicy nugget_policy(const ExperimentConfig& config);
NuggetPolicy kmd_nugget_policy(const ExperimentConfig& config);
TrainConfig train_config(const ExperimentConfig& config);
std::vector<KernelSpec> initial_kernels(const ExperimentConfig& config);

/// Simulates `steps` steps from an initial condition and keeps the observed
/// components.
TrajectoryRecord simulate_system(const ExperimentConfig& config, const std::string& initial_condition, int steps);
/// Series with exactly `pairs` delay pairs for the configured tau.
TrajectoryRecord series_for_pairs(const ExperimentConfig& config, const std::string& initial_condition, int pairs);
DelayDataset embed(const ExperimentConfig& config, const TrajectoryRecord& series);

struct TrainingRun {
  DelayDataset data;        // full training set
  DelayDataset fit_data;    // the rows the surrogate interpolates
  TrainResult trained;
  SurrogateModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

TrainingRun run_training(const ExperimentConfig& config);
/// Surrogate with the initial kernels on the same interpolation points.
SurrogateModel untrained_model(const ExperimentConfig& config, const TrainingRun& run);

struct EvalRow {
  std::string initial_condition;
  Eigen::VectorXd rmse;
};
std::vector<EvalRow> evaluate(const SurrogateModel& model, const ExperimentConfig& config);

struct TauReport {
  std::vector<TauSweepEntry> sweep;
  KmdEnergyProfile energies;
  /// Delay with the largest energy among tau.taus, smallest on ties.
  int recommended = 0;
};

/// RMSE sweep over tau.taus and alignment energies up to their maximum for a
/// scalar series.
TauReport run_tau(const ExperimentConfig& config);

}  // namespace kflow::cli
