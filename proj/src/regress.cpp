#include "kflow/regress.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kflow/kernel_json.hpp"

namespace kflow {
namespace {

constexpr double kResidualTolerance = 1e-8;
constexpr double kVarianceFloor = -1e-10;
constexpr double kChecksumTolerance = 1e-9;

ComponentFit fit_component(const KernelSpec& kernel, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           NuggetPolicy policy) {
  const Eigen::MatrixXd K = gram(kernel, kernel.theta, X);
  const double scale = K.rows() > 0 ? std::max(K.diagonal().cwiseAbs().mean(), 1e-300) : 1.0;
  const double limit = kResidualTolerance * std::max(1.0, y.cwiseAbs().maxCoeff());
  while (true) {
    auto factor = std::make_shared<const RegularizedGram>(K, policy);
    Eigen::VectorXd c = factor->solve(y);
    const double residual = (factor->regularized() * c - y).cwiseAbs().maxCoeff();
    if (c.allFinite() && residual <= limit) {
      return ComponentFit{kernel, std::move(factor), std::move(c), residual};
    }
    const double next = factor->nugget() > 0.0 ? 10.0 * factor->nugget() : 1e-10 * scale;
    if (next > policy.cap_relative * scale * (1.0 + 1e-12)) {
      throw Error(ErrorCode::SingularGram,
                  fmt::format("interpolation residual {:.3g} exceeds {:.3g} at the nugget cap", residual, limit));
    }
    spdlog::debug("fit residual {:.3g} above {:.3g}; raising nugget to {:.3g}", residual, limit, next);
    policy.absolute = next;
  }
}

void check_query(const SurrogateModel& model, Eigen::Index dim) {
  if (dim != model.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("delay vector has dimension {}, model expects {}", dim, model.input_dim()));
  }
}

double clamp_variance(double v) {
  if (v < kVarianceFloor) {
    throw Error(ErrorCode::NegativeVariance, fmt::format("conditional variance {:.3g} is negative", v));
  }
  return std::max(v, 0.0);
}

template <typename T>
std::vector<std::vector<double>> rows_of(const T& M) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(M.rows()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(M(i, j));
  }
  return out;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& rows, Eigen::Index cols) {
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != cols) {
      throw Error(ErrorCode::InvalidArgument, "ragged matrix in model file");
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      M(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)].get<double>();
    }
  }
  return M;
}

}  // namespace

Eigen::VectorXd SurrogateModel::checksum() const {
  Eigen::VectorXd out(output_dim());
  for (Eigen::Index i = 0; i < output_dim(); ++i) out(i) = components_[static_cast<std::size_t>(i)].coefficients.sum();
  return out;
}

SurrogateModel fit(const DelayDataset& data, const std::vector<KernelSpec>& kernels, const NuggetPolicy& nugget) {
  if (data.size() < 1) throw Error(ErrorCode::SeriesTooShort, "cannot fit an empty dataset");
  if (static_cast<Eigen::Index>(kernels.size()) != data.output_dim()) {
    throw Error(ErrorCode::ParameterArity,
                fmt::format("{} kernels given for {} target components", kernels.size(), data.output_dim()));
  }
  SurrogateModel model;
  model.X_ = data.X;
  model.Y_ = data.Y;
  model.tau_ = data.tau;
  model.source_dim_ = data.source_dim;
  model.inputs_ = data.input_components;
  model.targets_ = data.target_components;
  model.policy_ = nugget;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    check_arity(kernels[i], kernels[i].theta.size());
    model.components_.push_back(fit_component(kernels[i], data.X, data.Y.col(static_cast<Eigen::Index>(i)), nugget));
  }
  return model;
}

SurrogateModel fit(const DelayDataset& data, const std::vector<KernelSpec>& kernels, double nugget) {
  NuggetPolicy policy;
  policy.absolute = nugget;
  return fit(data, kernels, policy);
}

Eigen::VectorXd predict_mean(const SurrogateModel& model, const Eigen::VectorXd& x) {
  check_query(model, x.size());
  Eigen::VectorXd out(model.output_dim());
  for (Eigen::Index i = 0; i < model.output_dim(); ++i) {
    const auto& comp = model.components()[static_cast<std::size_t>(i)];
    out(i) = cross_gram(comp.kernel, comp.kernel.theta, x, model.X()).dot(comp.coefficients);
  }
  return out;
}

Eigen::MatrixXd predict_mean(const SurrogateModel& model, const Eigen::MatrixXd& Xq) {
  check_query(model, Xq.cols());
  Eigen::MatrixXd out(Xq.rows(), model.output_dim());
  const Eigen::MatrixXd D = cross_distances(Xq, model.X());
  for (Eigen::Index i = 0; i < model.output_dim(); ++i) {
    const auto& comp = model.components()[static_cast<std::size_t>(i)];
    out.col(i) = kernel_from_distances(comp.kernel, comp.kernel.theta, D) * comp.coefficients;
  }
  return out;
}

Eigen::VectorXd predict_variance(const SurrogateModel& model, const Eigen::VectorXd& x) {
  check_query(model, x.size());
  Eigen::VectorXd out(model.output_dim());
  for (Eigen::Index i = 0; i < model.output_dim(); ++i) {
    const auto& comp = model.components()[static_cast<std::size_t>(i)];
    const Eigen::VectorXd k = cross_gram(comp.kernel, comp.kernel.theta, x, model.X());
    const double prior = eval_radial(comp.kernel, comp.kernel.theta, 0.0);
    out(i) = clamp_variance(prior - k.dot(comp.factor->solve(k)));
  }
  return out;
}

Eigen::VectorXd reference_norms(const SurrogateModel& model, const DelayDataset& reference_data) {
  if (reference_data.X.cols() != model.input_dim() || reference_data.output_dim() != model.output_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "reference data does not match the model embedding");
  }
  Eigen::VectorXd norms(model.output_dim());
  for (Eigen::Index i = 0; i < model.output_dim(); ++i) {
    const auto& comp = model.components()[static_cast<std::size_t>(i)];
    const Eigen::VectorXd y = reference_data.Y.col(i);
    const RegularizedGram factor(gram(comp.kernel, comp.kernel.theta, reference_data.X), model.nugget_policy());
    const double q = factor.quadratic_form(y);
    if (q < 0.0) {
      throw Error(ErrorCode::NegativeVariance,
                  fmt::format("reference norm y^T K^-1 y = {:.3g} is negative (indefinite kernel)", q));
    }
    norms(i) = std::sqrt(q);
  }
  return norms;
}

Eigen::MatrixXd error_intervals(const SurrogateModel& model, const Eigen::MatrixXd& Xq,
                                const DelayDataset& reference_data) {
  check_query(model, Xq.cols());
  const Eigen::VectorXd norms = reference_norms(model, reference_data);
  Eigen::MatrixXd out(Xq.rows(), model.output_dim());
  const Eigen::MatrixXd D = cross_distances(Xq, model.X());
  for (Eigen::Index i = 0; i < model.output_dim(); ++i) {
    const auto& comp = model.components()[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd Kq = kernel_from_distances(comp.kernel, comp.kernel.theta, D);
    const Eigen::MatrixXd solved = comp.factor->solve(Eigen::MatrixXd(Kq.transpose()));
    const double prior = eval_radial(comp.kernel, comp.kernel.theta, 0.0);
    for (Eigen::Index j = 0; j < Xq.rows(); ++j) {
      const double var = clamp_variance(prior - Kq.row(j).dot(solved.col(j)));
      out(j, i) = std::sqrt(var) * norms(i);
    }
  }
  return out;
}

Eigen::VectorXd error_interval(const SurrogateModel& model, const Eigen::VectorXd& x,
                               const DelayDataset& reference_data) {
  return error_intervals(model, Eigen::MatrixXd(x.transpose()), reference_data).row(0).transpose();
}

TrajectoryRecord rollout(const SurrogateModel& model, const Eigen::MatrixXd& seed_window, int n_steps, double dt) {
  if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be non-negative");
  if (seed_window.rows() != model.tau() || seed_window.cols() != model.source_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("seed window must be {} x {}", model.tau(), model.source_dim()));
  }
  // Where each input component is found in the prediction vector.
  std::vector<Eigen::Index> feedback;
  for (int c : model.input_components()) {
    const auto& t = model.target_components();
    const auto it = std::find(t.begin(), t.end(), c);
    if (it == t.end()) {
      throw Error(ErrorCode::DimensionMismatch, fmt::format("input component {} is not predicted; cannot roll out", c));
    }
    feedback.push_back(it - t.begin());
  }

  TrajectoryRecord traj;
  traj.dt = dt;
  traj.origin.system = "surrogate";
  traj.states.resize(n_steps, model.output_dim());
  Eigen::MatrixXd window = seed_window;
  for (int k = 0; k < n_steps; ++k) {
    const Eigen::VectorXd pred = predict_mean(model, delay_window(window, model.input_components()));
    if (!pred.allFinite()) throw Error(ErrorCode::NonFinite, fmt::format("surrogate rollout diverged at step {}", k));
    traj.states.row(k) = pred.transpose();
    if (model.tau() == 0) continue;
    Eigen::VectorXd next = window.row(window.rows() - 1).transpose();
    for (std::size_t j = 0; j < feedback.size(); ++j) next(model.input_components()[j]) = pred(feedback[j]);
    if (window.rows() > 1) window.topRows(window.rows() - 1) = window.bottomRows(window.rows() - 1).eval();
    window.row(window.rows() - 1) = next.transpose();
  }
  return traj;
}

Eigen::MatrixXd one_step_predictions(const SurrogateModel& model, const TrajectoryRecord& eval_series) {
  const DelayDataset ds = delay_embed(eval_series, model.tau(), model.target_components(), model.input_components());
  return predict_mean(model, ds.X);
}

Eigen::VectorXd one_step_errors(const SurrogateModel& model, const TrajectoryRecord& eval_series) {
  const DelayDataset ds = delay_embed(eval_series, model.tau(), model.target_components(), model.input_components());
  const Eigen::MatrixXd pred = predict_mean(model, ds.X);
  return ((pred - ds.Y).colwise().squaredNorm() / static_cast<double>(ds.size())).cwiseSqrt().transpose();
}

void save_model(std::ostream& out, const SurrogateModel& model) {
  nlohmann::ordered_json doc;
  doc["format"] = "kflow-surrogate";
  doc["version"] = 1;
  doc["tau"] = model.tau();
  doc["source_dim"] = model.source_dim();
  doc["input_components"] = model.input_components();
  doc["target_components"] = model.target_components();
  const auto& p = model.nugget_policy();
  doc["nugget"] = {{"relative", p.relative},
                   {"absolute", p.absolute ? nlohmann::ordered_json(*p.absolute) : nlohmann::ordered_json(nullptr)},
                   {"cap_relative", p.cap_relative},
                   {"allow_indefinite", p.allow_indefinite}};
  doc["kernels"] = nlohmann::ordered_json::array();
  for (const auto& comp : model.components()) doc["kernels"].push_back(to_json(comp.kernel));
  doc["X"] = rows_of(model.X());
  doc["Y"] = rows_of(model.Y());
  const Eigen::VectorXd sum = model.checksum();
  doc["checksum"] = std::vector<double>(sum.data(), sum.data() + sum.size());
  out << doc.dump(1) << '\n';
}

void save_model(const std::string& path, const SurrogateModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, fmt::format("cannot open '{}' for writing", path));
  save_model(out, model);
}

SurrogateModel load_model(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("model file is not valid JSON: {}", e.what()));
  }
  try {
    if (doc.at("format") != "kflow-surrogate") throw Error(ErrorCode::InvalidArgument, "not a surrogate model file");
    DelayDataset data;
    data.tau = doc.at("tau").get<int>();
    data.source_dim = doc.at("source_dim").get<int>();
    data.input_components = doc.at("input_components").get<std::vector<int>>();
    data.target_components = doc.at("target_components").get<std::vector<int>>();
    const auto in_dim = static_cast<Eigen::Index>(data.tau) * static_cast<Eigen::Index>(data.input_components.size());
    data.X = matrix_from(doc.at("X"), in_dim);
    data.Y = matrix_from(doc.at("Y"), static_cast<Eigen::Index>(data.target_components.size()));
    NuggetPolicy policy;
    const auto& nug = doc.at("nugget");
    policy.relative = nug.at("relative").get<double>();
    if (!nug.at("absolute").is_null()) policy.absolute = nug.at("absolute").get<double>();
    policy.cap_relative = nug.at("cap_relative").get<double>();
    policy.allow_indefinite = nug.at("allow_indefinite").get<bool>();
    std::vector<KernelSpec> kernels;
    for (const auto& k : doc.at("kernels")) kernels.push_back(kernel_spec_from_json(k));
    const auto stored = doc.at("checksum").get<std::vector<double>>();

    SurrogateModel model = fit(data, kernels, policy);
    const Eigen::VectorXd sum = model.checksum();
    if (static_cast<Eigen::Index>(stored.size()) != sum.size()) {
      throw Error(ErrorCode::ChecksumMismatch, "checksum length differs from component count");
    }
    for (Eigen::Index i = 0; i < sum.size(); ++i) {
      const double ref = stored[static_cast<std::size_t>(i)];
      if (!(std::abs(sum(i) - ref) <= kChecksumTolerance * std::max(1.0, std::abs(ref)))) {
        throw Error(ErrorCode::ChecksumMismatch,
                    fmt::format("component {}: coefficient checksum {} differs from stored {}", i, sum(i), ref));
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("malformed model file: {}", e.what()));
  }
}

SurrogateModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path));
  return load_model(in);
}

}  // namespace kflow
