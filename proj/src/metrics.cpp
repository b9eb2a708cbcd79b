#include "kflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "kflow/random.hpp"
#include "kflow/regress.hpp"

namespace kflow {
namespace {

constexpr double kMinDenominator = 1e-14;
constexpr Eigen::Index kDistanceSampleCap = 500;

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

double mean_pairwise_distance(const Eigen::MatrixXd& S) {
  const Eigen::Index stride = std::max<Eigen::Index>(1, (S.rows() + kDistanceSampleCap - 1) / kDistanceSampleCap);
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < S.rows(); i += stride) rows.push_back(static_cast<int>(i));
  const Eigen::MatrixXd sub = take_rows(S, rows);
  const Eigen::Index m = sub.rows();
  if (m < 2) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) total += (sub.row(i) - sub.row(j)).norm();
  }
  return total / (0.5 * static_cast<double>(m) * static_cast<double>(m - 1));
}

double divergence_fit(const Eigen::MatrixXd& S, const LyapunovConfig& config) {
  const Eigen::Index n = S.rows();
  const int fit = config.fit_length;
  if (n < 2 * fit + 2 * config.theiler_window + 2) {
    throw Error(ErrorCode::SeriesTooShort, fmt::format("{} states are too few for a divergence fit", n));
  }
  if (!S.allFinite()) throw Error(ErrorCode::NonFinite, "series contains non-finite states");

  const double extent = (S.colwise().maxCoeff() - S.colwise().minCoeff()).norm();
  const double saturation = config.saturation_fraction * extent;
  const double min_sep = config.min_separation ? *config.min_separation
                                               : config.min_separation_factor * mean_pairwise_distance(S);
  const Eigen::Index last_ref = n - fit;  // references and neighbours need fit steps ahead

  // Candidates sorted along the first coordinate bound the neighbour search.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(last_ref));
  for (Eigen::Index i = 0; i < last_ref; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return S(a, 0) < S(b, 0) || (S(a, 0) == S(b, 0) && a < b);
  });
  std::vector<Eigen::Index> position(static_cast<std::size_t>(last_ref));
  for (std::size_t p = 0; p < order.size(); ++p) position[static_cast<std::size_t>(order[p])] = static_cast<Eigen::Index>(p);

  double slope_sum = 0.0;
  long pairs = 0;
  for (Eigen::Index i = 0; i < last_ref; ++i) {
    double best2 = std::numeric_limits<double>::infinity();
    Eigen::Index best = -1;
    const auto consider = [&](Eigen::Index j) {
      if (std::abs(j - i) <= config.theiler_window) return;
      const double d2 = (S.row(i) - S.row(j)).squaredNorm();
      if (d2 <= 0.0 || d2 < min_sep * min_sep) return;
      if (d2 < best2 || (d2 == best2 && j < best)) {
        best2 = d2;
        best = j;
      }
    };
    const Eigen::Index p = position[static_cast<std::size_t>(i)];
    for (Eigen::Index q = p + 1; q < last_ref; ++q) {
      const double gap = S(order[static_cast<std::size_t>(q)], 0) - S(i, 0);
      if (gap * gap > best2) break;
      consider(order[static_cast<std::size_t>(q)]);
    }
    for (Eigen::Index q = p - 1; q >= 0; --q) {
      const double gap = S(i, 0) - S(order[static_cast<std::size_t>(q)], 0);
      if (gap * gap > best2) break;
      consider(order[static_cast<std::size_t>(q)]);
    }
    if (best < 0) continue;

    const double d0 = std::sqrt(best2);
    int k = 0;
    double dk = d0;
    while (k < fit) {
      const double next = (S.row(i + k + 1) - S.row(best + k + 1)).norm();
      if (!(next < saturation) || next <= 0.0) break;
      dk = next;
      ++k;
    }
    if (k >= 1) {
      slope_sum += (std::log(dk) - std::log(d0)) / k;
      ++pairs;
    }
  }
  if (pairs == 0) throw Error(ErrorCode::NoValidNeighbors, "no admissible neighbour pair could be tracked");
  return slope_sum / static_cast<double>(pairs);
}

}  // namespace

BatchSample sample_batch(Eigen::Index N, Eigen::Index Nb, std::uint64_t seed) {
  if (Nb < 2 || Nb > N) {
    throw Error(ErrorCode::BatchTooLarge, fmt::format("batch size {} is not in [2, {}]", Nb, N));
  }
  BatchSample s;
  s.rng_seed = seed;
  s.indices_b = sample_without_replacement(static_cast<int>(N), static_cast<int>(Nb), seed);
  s.indices_c.assign(s.indices_b.begin(), s.indices_b.begin() + Nb / 2);
  return s;
}

double rho(const KernelSpec& kernel, const Eigen::VectorXd& theta, const Eigen::MatrixXd& Xb, const Eigen::VectorXd& Yb,
           const Eigen::MatrixXd& Xc, const Eigen::VectorXd& Yc, const NuggetPolicy& nugget) {
  const double den = RegularizedGram(gram(kernel, theta, Xb), nugget).quadratic_form(Yb);
  if (!(std::abs(den) > kMinDenominator)) {
    throw Error(ErrorCode::ZeroDenominator, fmt::format("y_b^T K_b^-1 y_b = {:.3g}", den));
  }
  const double num = RegularizedGram(gram(kernel, theta, Xc), nugget).quadratic_form(Yc);
  const double value = 1.0 - num / den;
  if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "rho is not finite");
  return value;
}

double rho(const std::vector<KernelSpec>& kernels, const DelayDataset& data, const BatchSample& batch,
           const NuggetPolicy& nugget) {
  if (static_cast<Eigen::Index>(kernels.size()) != data.output_dim()) {
    throw Error(ErrorCode::ParameterArity, "one kernel per target component is required");
  }
  const Eigen::MatrixXd Xb = take_rows(data.X, batch.indices_b);
  const Eigen::MatrixXd Yb = take_rows(data.Y, batch.indices_b);
  const Eigen::MatrixXd Xc = take_rows(data.X, batch.indices_c);
  const Eigen::MatrixXd Yc = take_rows(data.Y, batch.indices_c);
  double total = 0.0;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    total += rho(kernels[i], kernels[i].theta, Xb, Yb.col(c), Xc, Yc.col(c), nugget);
  }
  return total;
}

double mmd2(const KernelSpec& kernel, const Eigen::VectorXd& theta, const Eigen::MatrixXd& S1,
            const Eigen::MatrixXd& S2) {
  if (S1.rows() < 1 || S2.rows() < 1) throw Error(ErrorCode::InvalidArgument, "mmd2 needs non-empty samples");
  if (S1.cols() != S2.cols()) throw Error(ErrorCode::DimensionMismatch, "samples have different dimensions");
  const double m = static_cast<double>(S1.rows());
  const double n = static_cast<double>(S2.rows());
  const double xx = kernel_from_distances(kernel, theta, pairwise_distances(S1)).sum() / (m * m);
  const double yy = kernel_from_distances(kernel, theta, pairwise_distances(S2)).sum() / (n * n);
  const double xy = kernel_from_distances(kernel, theta, cross_distances(S1, S2)).sum() / (m * n);
  return xx + yy - 2.0 * xy;
}

double rho_mmd(const KernelSpec& kernel, const Eigen::VectorXd& theta, const Eigen::MatrixXd& X, Eigen::Index m,
               std::uint64_t seed) {
  if (m < 1 || 2 * m > X.rows()) {
    throw Error(ErrorCode::SampleTooLarge, fmt::format("two samples of {} need at least {} points, have {}", m, 2 * m,
                                                       X.rows()));
  }
  const auto idx = sample_without_replacement(static_cast<int>(X.rows()), static_cast<int>(2 * m), seed);
  const std::vector<int> first(idx.begin(), idx.begin() + m);
  const std::vector<int> second(idx.begin() + m, idx.end());
  return mmd2(kernel, theta, take_rows(X, first), take_rows(X, second));
}

void LyapunovConfig::validate() const {
  if (!(rollout_len > transient_skip && transient_skip >= 0)) {
    throw Error(ErrorCode::InvalidArgument, "lyapunov config needs rollout_len > transient_skip >= 0");
  }
  if (fit_length < 1 || theiler_window < 0) throw Error(ErrorCode::InvalidArgument, "invalid neighbour parameters");
}

double lyapunov_max(const Eigen::MatrixXd& states, const LyapunovConfig& config,
                    const std::function<double(double)>& derivative) {
  config.validate();
  if (config.estimator == LyapunovEstimator::MeanLogDerivative) {
    if (!derivative) throw Error(ErrorCode::InvalidArgument, "mean-log-derivative estimator needs f'");
    if (states.cols() != 1) throw Error(ErrorCode::DimensionMismatch, "mean-log-derivative needs a scalar series");
    if (states.rows() < 1) throw Error(ErrorCode::SeriesTooShort, "empty series");
    double total = 0.0;
    for (Eigen::Index k = 0; k < states.rows(); ++k) total += std::log(std::abs(derivative(states(k, 0))));
    const double value = total / static_cast<double>(states.rows());
    if (!std::isfinite(value)) throw Error(ErrorCode::NonFinite, "orbit hits a critical point");
    return value;
  }
  return divergence_fit(states, config);
}

double lyapunov_max(const TrajectoryRecord& series, const LyapunovConfig& config,
                    const std::function<double(double)>& derivative) {
  return lyapunov_max(series.states, config, derivative);
}

Eigen::MatrixXd seed_window_from(const DelayDataset& data, Eigen::Index row) {
  const auto width = static_cast<Eigen::Index>(data.input_components.size());
  if (width != data.source_dim) {
    throw Error(ErrorCode::InvalidArgument, "a seed window needs every source component among the inputs");
  }
  if (row < 0 || row >= data.size()) throw Error(ErrorCode::InvalidArgument, "seed row out of range");
  Eigen::MatrixXd window(data.tau, data.source_dim);
  for (int j = 0; j < data.tau; ++j) {
    for (Eigen::Index c = 0; c < width; ++c) {
      window(data.tau - 1 - j, data.input_components[static_cast<std::size_t>(c)]) = data.X(row, j * width + c);
    }
  }
  return window;
}

double rho_L(const std::vector<KernelSpec>& kernels, const DelayDataset& data, const LyapunovConfig& config,
             const Eigen::MatrixXd& seed_window, std::uint64_t seed, const NuggetPolicy& nugget,
             bool force_full_half) {
  config.validate();
  if (data.size() < 4) throw Error(ErrorCode::SeriesTooShort, "rho_L needs at least 4 delay vectors");
  const auto estimate = [&](const DelayDataset& subset) {
    const SurrogateModel model = fit(subset, kernels, nugget);
    const TrajectoryRecord traj = rollout(model, seed_window, config.rollout_len);
    return lyapunov_max(traj.states.bottomRows(config.rollout_len - config.transient_skip), config);
  };
  const double full = estimate(data);
  if (force_full_half) return std::abs(full - estimate(data));
  const auto half = sample_without_replacement(static_cast<int>(data.size()), static_cast<int>(data.size() / 2), seed);
  return std::abs(full - estimate(data.subset(half)));
}

}  // namespace kflow
