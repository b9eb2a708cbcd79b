#include "kflow/tau_sweep.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <spdlog/spdlog.h>

#include "kflow/csv.hpp"
#include "kflow/embedding.hpp"
#include "kflow/regress.hpp"

namespace kflow {

std::vector<TauSweepEntry> rmse_tau_sweep(const TrajectoryRecord& series, const std::vector<int>& taus,
                                          const std::vector<KernelSpec>& kernels, const TrainConfig& config,
                                          const TrajectoryRecord& eval_series) {
  std::vector<TauSweepEntry> out;
  for (int tau : taus) {
    TauSweepEntry entry;
    entry.tau = tau;
    try {
      const DelayDataset data = delay_embed(series, tau);
      const TrainResult trained = kernel_flow(data, kernels, config);
      const SurrogateModel model = fit(data, trained.kernels, config.nugget);
      const Eigen::VectorXd err = one_step_errors(model, eval_series);
      entry.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
    } catch (const Error& e) {
      spdlog::warn("tau {}: {}", tau, e.what());
      entry.error = e.what();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<TauSweepEntry>& sweep) {
  write_csv_header(out, {"tau", "rmse"});
  for (const auto& e : sweep) {
    write_csv_row(out, {static_cast<double>(e.tau), e.rmse.value_or(std::numeric_limits<double>::quiet_NaN())});
  }
}

}  // namespace kflow
