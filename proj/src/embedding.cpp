#include "kflow/embedding.hpp"

#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "kflow/csv.hpp"

namespace kflow {
namespace {

std::vector<int> all_components(Eigen::Index d) {
  std::vector<int> out(static_cast<std::size_t>(d));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void check_components(const std::vector<int>& comps, Eigen::Index d, std::string_view what) {
  for (int c : comps) {
    if (c < 0 || c >= d) {
      throw Error(ErrorCode::DimensionMismatch, fmt::format("{} component {} out of range for dimension {}", what, c, d));
    }
  }
}

}  // namespace

DelayDataset DelayDataset::subset(const std::vector<int>& rows) const {
  DelayDataset out = *this;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.Y.resize(static_cast<Eigen::Index>(rows.size()), Y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    out.Y.row(static_cast<Eigen::Index>(i)) = Y.row(rows[i]);
  }
  return out;
}

DelayDataset delay_embed(const TrajectoryRecord& series, int tau, std::vector<int> targets, std::vector<int> inputs) {
  if (tau < 0) throw Error(ErrorCode::InvalidArgument, "tau must be non-negative");
  const Eigen::Index n = series.length();
  const Eigen::Index d = series.dim();
  if (n <= tau) {
    throw Error(ErrorCode::SeriesTooShort, fmt::format("series of length {} is too short for tau = {}", n, tau));
  }
  if (targets.empty()) targets = all_components(d);
  if (inputs.empty()) inputs = all_components(d);
  check_components(targets, d, "target");
  check_components(inputs, d, "input");

  DelayDataset ds;
  ds.tau = tau;
  ds.source_dim = static_cast<int>(d);
  ds.input_components = inputs;
  ds.target_components = targets;
  const Eigen::Index N = n - tau;
  const auto width = static_cast<Eigen::Index>(inputs.size());
  ds.X.resize(N, tau * width);
  ds.Y.resize(N, static_cast<Eigen::Index>(targets.size()));
  for (Eigen::Index k = 0; k < N; ++k) {
    for (int j = 0; j < tau; ++j) {
      const Eigen::Index t = k + tau - 1 - j;
      for (Eigen::Index c = 0; c < width; ++c) ds.X(k, j * width + c) = series.states(t, inputs[c]);
    }
    for (std::size_t c = 0; c < targets.size(); ++c) {
      ds.Y(k, static_cast<Eigen::Index>(c)) = series.states(k + tau, targets[c]);
    }
  }
  return ds;
}

Eigen::VectorXd delay_window(const Eigen::MatrixXd& states, const std::vector<int>& inputs) {
  const auto width = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index tau = states.rows();
  Eigen::VectorXd w(tau * width);
  for (Eigen::Index j = 0; j < tau; ++j) {
    for (Eigen::Index c = 0; c < width; ++c) w(j * width + c) = states(tau - 1 - j, inputs[c]);
  }
  return w;
}

DelayDataset concatenate(const DelayDataset& a, const DelayDataset& b) {
  if (a.tau != b.tau || a.input_components != b.input_components || a.target_components != b.target_components ||
      a.X.cols() != b.X.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "datasets have different embeddings");
  }
  DelayDataset out = a;
  out.X.resize(a.size() + b.size(), a.X.cols());
  out.Y.resize(a.size() + b.size(), a.Y.cols());
  out.X << a.X, b.X;
  out.Y << a.Y, b.Y;
  return out;
}

KernelSpec default_kmd_kernel() {
  KernelSpec spec;
  spec.primitives = {{KernelKind::Constant}, {KernelKind::Gaussian}};
  spec.mode = ParameterMode::Raw;
  spec.theta = Eigen::Vector3d(1.0, 1.0, 1.0);
  return spec;
}

NuggetPolicy default_kmd_nugget() {
  NuggetPolicy p;
  p.relative = 1e-7;
  return p;
}

KmdEnergyProfile kmd_energies(const TrajectoryRecord& series, int tau_max, const KernelSpec& base_kernel,
                              const NuggetPolicy& nugget) {
  if (tau_max < 0) throw Error(ErrorCode::InvalidArgument, "tau_max must be non-negative");
  if (series.dim() != 1) throw Error(ErrorCode::DimensionMismatch, "alignment energies need a scalar series");
  const Eigen::Index n = series.length();
  const Eigen::Index first = std::max(tau_max - 1, 0);
  const Eigen::Index count = n - 1 - first;
  if (count < 1) {
    throw Error(ErrorCode::SeriesTooShort, fmt::format("series of length {} is too short for tau_max = {}", n, tau_max));
  }
  check_arity(base_kernel, base_kernel.theta.size());

  Eigen::VectorXd v(count);
  Eigen::MatrixXd windows(count, tau_max);
  for (Eigen::Index row = 0; row < count; ++row) {
    const Eigen::Index t = first + row;
    v(row) = series.states(t + 1, 0);
    for (int j = 0; j < tau_max; ++j) windows(row, j) = series.states(t - j, 0);
  }

  // Squared distances of the truncated windows grow one column at a time.
  std::vector<Eigen::MatrixXd> parts;
  parts.reserve(static_cast<std::size_t>(tau_max) + 1);
  Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(count, count);
  for (int i = 0; i <= tau_max; ++i) {
    if (i > 0) {
      const Eigen::VectorXd col = windows.col(i - 1);
      sq += (col.replicate(1, count) - col.transpose().replicate(count, 1)).array().square().matrix();
    }
    const Eigen::MatrixXd dist = sq.array().sqrt().matrix();
    parts.push_back(gram_from_distances(base_kernel, base_kernel.theta, dist));
  }
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(count, count);
  for (const auto& K : parts) total += K;

  const RegularizedGram factor(total, nugget);
  const Eigen::VectorXd coeffs = factor.solve(v);
  const double share = factor.nugget() / static_cast<double>(tau_max + 1);

  KmdEnergyProfile profile;
  profile.tau_max = tau_max;
  profile.base_kernel = base_kernel;
  profile.nugget = factor.nugget();
  profile.energies.resize(tau_max + 1);
  for (int i = 0; i <= tau_max; ++i) {
    profile.energies(i) = coeffs.dot(parts[static_cast<std::size_t>(i)] * coeffs) + share * coeffs.squaredNorm();
  }
  profile.total_energy = v.dot(coeffs);
  return profile;
}

int select_tau_kmd(const KmdEnergyProfile& profile) {
  if (profile.energies.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty energy profile");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < profile.energies.size(); ++i) {
    if (profile.energies(i) > profile.energies(best)) best = i;
  }
  return static_cast<int>(best);
}

void write_energy_csv(std::ostream& out, const KmdEnergyProfile& profile) {
  write_csv_header(out, {"tau", "energy"});
  for (Eigen::Index i = 0; i < profile.energies.size(); ++i) {
    write_csv_row(out, {static_cast<double>(i), profile.energies(i)});
  }
}

}  // namespace kflow
