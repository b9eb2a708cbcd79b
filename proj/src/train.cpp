#include "kflow/train.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "kflow/csv.hpp"
#include "kflow/random.hpp"

namespace kflow {
namespace {

void normalize_amplitudes(KernelSpec& spec) {
  const auto slots = spec.amplitude_slots();
  double norm2 = 0.0;
  for (int s : slots) norm2 += spec.theta(s) * spec.theta(s);
  if (!(norm2 > 0.0)) return;
  const double inv = 1.0 / std::sqrt(norm2);
  for (int s : slots) spec.theta(s) *= inv;
}

struct SlotLayout {
  std::vector<int> offsets;  // start of each component in the stacked theta
  int total = 0;
};

SlotLayout layout_of(const std::vector<KernelSpec>& kernels) {
  SlotLayout l;
  for (const auto& k : kernels) {
    l.offsets.push_back(l.total);
    l.total += k.parameter_count();
  }
  return l;
}

void apply_clamps(Eigen::VectorXd& theta, const std::vector<ThetaClamp>& clamps, const SlotLayout& layout) {
  for (const auto& c : clamps) {
    const int i = layout.offsets[static_cast<std::size_t>(c.component)] + c.slot;
    theta(i) = std::clamp(theta(i), c.lo, c.hi);
  }
}

}  // namespace

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Rho: return "rho";
    case Metric::RhoL: return "rho_l";
    case Metric::RhoMMD: return "rho_mmd";
  }
  return "rho";
}

Metric metric_from_string(std::string_view name) {
  if (name == "rho") return Metric::Rho;
  if (name == "rho_l" || name == "rhol") return Metric::RhoL;
  if (name == "rho_mmd" || name == "mmd") return Metric::RhoMMD;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown metric '{}'", name));
}

void TrainConfig::validate() const {
  if (iterations < 0) throw Error(ErrorCode::InvalidArgument, "iterations must be non-negative");
  if (!(step_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "step_size must be positive");
  if (!(fd_step > 0.0 && fd_step <= 1e-2)) throw Error(ErrorCode::InvalidArgument, "fd_step must lie in (0, 1e-2]");
  if (!(gradient_clip > 0.0)) throw Error(ErrorCode::InvalidArgument, "gradient_clip must be positive");
  if (batch_size < 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be non-negative");
  if (snapshot_every < 1) throw Error(ErrorCode::InvalidArgument, "snapshot_every must be positive");
  for (const auto& c : theta_clamps) {
    if (!(c.lo <= c.hi)) throw Error(ErrorCode::InvalidArgument, "theta clamp has lo > hi");
  }
  if (metric == Metric::RhoL) lyapunov.validate();
}

GradientResult numerical_gradient(const std::function<double(const Eigen::VectorXd&)>& loss,
                                  const Eigen::VectorXd& theta, double fd_step, const std::vector<bool>& active) {
  GradientResult out;
  out.gradient = Eigen::VectorXd::Zero(theta.size());
  out.failed.assign(static_cast<std::size_t>(theta.size()), false);
  int probed = 0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (!active.empty() && !active[static_cast<std::size_t>(i)]) continue;
    ++probed;
    const double h = fd_step * std::max(1.0, std::abs(theta(i)));
    Eigen::VectorXd plus = theta;
    Eigen::VectorXd minus = theta;
    plus(i) += h;
    minus(i) -= h;
    try {
      const double g = (loss(plus) - loss(minus)) / (plus(i) - minus(i));
      if (!std::isfinite(g)) throw Error(ErrorCode::NonFinite, "non-finite difference quotient");
      out.gradient(i) = g;
    } catch (const Error& e) {
      spdlog::debug("gradient probe for slot {} failed: {}", i, e.what());
      out.failed[static_cast<std::size_t>(i)] = true;
      ++out.failed_count;
    }
  }
  if (probed > 0 && out.failed_count == probed) {
    throw Error(ErrorCode::AllProbesFailed, "every finite-difference probe failed");
  }
  return out;
}

Eigen::VectorXd stack_theta(const std::vector<KernelSpec>& kernels) {
  const SlotLayout layout = layout_of(kernels);
  Eigen::VectorXd out(layout.total);
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    check_arity(kernels[i], kernels[i].theta.size());
    out.segment(layout.offsets[i], kernels[i].theta.size()) = kernels[i].theta;
  }
  return out;
}

std::vector<KernelSpec> with_theta(std::vector<KernelSpec> kernels, const Eigen::VectorXd& stacked) {
  const SlotLayout layout = layout_of(kernels);
  if (stacked.size() != layout.total) {
    throw Error(ErrorCode::ParameterArity, fmt::format("{} parameters given, kernels take {}", stacked.size(), layout.total));
  }
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    kernels[i].theta = stacked.segment(layout.offsets[i], kernels[i].parameter_count());
  }
  return kernels;
}

double evaluate_loss(const std::vector<KernelSpec>& kernels, const DelayDataset& data, const TrainConfig& config,
                     std::uint64_t seed) {
  std::vector<KernelSpec> ks = kernels;
  if (config.amplitudes_normalized()) {
    for (auto& k : ks) normalize_amplitudes(k);
  }
  switch (config.metric) {
    case Metric::Rho: {
      const Eigen::Index Nb = config.batch_size == 0 ? data.size() : config.batch_size;
      return rho(ks, data, sample_batch(data.size(), Nb, seed), config.nugget);
    }
    case Metric::RhoMMD: {
      double total = 0.0;
      for (const auto& k : ks) total += rho_mmd(k, k.theta, data.X, config.mmd_sample_size, seed);
      return total;
    }
    case Metric::RhoL: {
      const Eigen::MatrixXd window = config.rollout_seed ? *config.rollout_seed : seed_window_from(data, 0);
      return rho_L(ks, data, config.lyapunov, window, seed, config.nugget);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown metric");
}

TrainResult kernel_flow(const DelayDataset& data, const std::vector<KernelSpec>& kernels, const TrainConfig& config) {
  config.validate();
  if (static_cast<Eigen::Index>(kernels.size()) != data.output_dim()) {
    throw Error(ErrorCode::ParameterArity, "one kernel per target component is required");
  }
  const SlotLayout layout = layout_of(kernels);
  for (const auto& c : config.theta_clamps) {
    if (c.component < 0 || c.component >= static_cast<int>(kernels.size()) || c.slot < 0 ||
        c.slot >= kernels[static_cast<std::size_t>(c.component)].parameter_count()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("clamp on missing slot {}:{}", c.component, c.slot));
    }
  }
  std::vector<bool> active(static_cast<std::size_t>(layout.total), true);
  for (const auto& c : config.theta_clamps) {
    if (c.lo == c.hi) active[static_cast<std::size_t>(layout.offsets[static_cast<std::size_t>(c.component)] + c.slot)] = false;
  }

  Eigen::VectorXd theta = stack_theta(kernels);
  apply_clamps(theta, config.theta_clamps, layout);

  TrainHistory history;
  int consecutive_skips = 0;
  const double stall_limit = config.stall_fraction * config.iterations;
  for (int it = 0; it < config.iterations; ++it) {
    const std::uint64_t seed = derive_seed(config.rng_seed, static_cast<std::uint64_t>(it));
    const auto loss = [&](const Eigen::VectorXd& t) { return evaluate_loss(with_theta(kernels, t), data, config, seed); };
    TrainRecord rec;
    rec.iteration = it;
    rec.seed = seed;
    try {
      rec.loss = loss(theta);
      GradientResult g = numerical_gradient(loss, theta, config.fd_step, active);
      rec.failed_probes = g.failed_count;
      rec.gradient_norm = g.gradient.norm();
      if (rec.gradient_norm > config.gradient_clip) g.gradient *= config.gradient_clip / rec.gradient_norm;
      theta -= config.step_size * g.gradient;
      apply_clamps(theta, config.theta_clamps, layout);
      if (config.amplitudes_normalized()) {
        auto ks = with_theta(kernels, theta);
        for (auto& k : ks) normalize_amplitudes(k);
        theta = stack_theta(ks);
      }
      consecutive_skips = 0;
    } catch (const Error& e) {
      rec.skipped = true;
      rec.loss = std::numeric_limits<double>::quiet_NaN();
      ++consecutive_skips;
      spdlog::warn("iteration {} skipped: {}", it, e.what());
      if (consecutive_skips > stall_limit) {
        throw Error(ErrorCode::TrainingStalled,
                    fmt::format("{} consecutive iterations failed (last: {})", consecutive_skips, e.what()));
      }
    }
    spdlog::debug("iteration {} loss {:.6g} |grad| {:.3g}", it, rec.loss, rec.gradient_norm);
    history.records.push_back(rec);
    if ((it + 1) % config.snapshot_every == 0 || it + 1 == config.iterations) {
      ThetaSnapshot snap;
      snap.iteration = it + 1;
      for (const auto& k : with_theta(kernels, theta)) snap.theta.push_back(k.theta);
      history.snapshots.push_back(std::move(snap));
    }
  }

  if (config.metric == Metric::Rho && config.iterations > 0) {
    const Eigen::Index Nb = config.batch_size == 0 ? data.size() : config.batch_size;
    history.last_batch = sample_batch(data.size(), Nb, history.records.back().seed).indices_b;
  }
  return TrainResult{with_theta(kernels, theta), std::move(history)};
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  write_csv_header(out, {"iter", "loss"});
  for (const auto& r : history.records) write_csv_row(out, {static_cast<double>(r.iteration), r.loss});
}

}  // namespace kflow
