#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kflow/dynamics.hpp"
#include "kflow/kernels.hpp"
#include "kflow/train.hpp"

namespace kflow {

struct TauSweepEntry {
  int tau = 0;
  /// Root-mean-square one-step error over all target components; empty when
  /// embedding, training or evaluation failed for this tau.
  std::optional<double> rmse;
  std::string error;
};

/// For each tau: embed `series`, train the kernels and measure the one-step
/// error on eval_series. Failures are recorded per entry instead of aborting.
std::vector<TauSweepEntry> rmse_tau_sweep(const TrajectoryRecord& series, const std::vector<int>& taus,
                                          const std::vector<KernelSpec>& kernels, const TrainConfig& config,
                                          const TrajectoryRecord& eval_series);

/// Rows `tau,rmse`; failed entries are written as nan.
void write_sweep_csv(std::ostream& out, const std::vector<TauSweepEntry>& sweep);

}  // namespace kflow
