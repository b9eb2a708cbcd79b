#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "experiment.hpp"
#include "kflow/csv.hpp"
#include "kflow/kernel_json.hpp"

namespace fs = std::filesystem;
using namespace kflow;
using namespace kflow::cli;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset_name;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "TOML experiment config");
  cmd->add_option("--preset", opts.preset_name, "built-in experiment preset");
  cmd->add_option("--seed", opts.seed, "training seed (train.seed)");
  cmd->add_option("--out", opts.out, "output directory (output_dir)");
  cmd->allow_extras();
}

/// Remaining "--dotted.name value" or "--dotted.name=value" pairs.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw Error(ErrorCode::InvalidArgument, fmt::format("unexpected argument '{}'", arg));
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw Error(ErrorCode::InvalidArgument, fmt::format("missing value for '{}'", arg));
      out.emplace_back(arg.substr(2), extras[i + 1]);
      ++i;
    }
  }
  return out;
}

ExperimentConfig resolve_config(const CommonOptions& opts, const std::vector<std::pair<std::string, std::string>>& overrides) {
  if (!opts.config_path.empty() && !opts.preset_name.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--config and --preset are mutually exclusive");
  }
  ExperimentConfig config;
  if (!opts.config_path.empty()) config = load_config(opts.config_path);
  if (!opts.preset_name.empty()) config = preset(opts.preset_name);
  for (const auto& [key, value] : overrides) apply_override(config, key, value);
  if (opts.seed) config.train.seed = *opts.seed;
  if (!opts.out.empty()) config.output_dir = opts.out;
  validate(config);
  return config;
}

fs::path prepare_output(const ExperimentConfig& config) {
  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  std::ofstream(dir / "config.toml") << to_toml(config);
  return dir;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& doc) {
  std::ofstream out = open_output(path.string());
  out << doc.dump(2) << '\n';
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

nlohmann::ordered_json rmse_json(const std::vector<EvalRow>& rows) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : rows) out.push_back({{"initial_condition", r.initial_condition}, {"rmse", to_vector(r.rmse)}});
  return out;
}

void print_rmse(const std::string& label, const std::vector<EvalRow>& rows) {
  for (const auto& r : rows) {
    std::string vals;
    for (Eigen::Index i = 0; i < r.rmse.size(); ++i) vals += fmt::format(" {:.6g}", r.rmse(i));
    std::cout << fmt::format("{:<10} x0={:<16} rmse{}\n", label, r.initial_condition, vals);
  }
}

int cmd_simulate(const ExperimentConfig& config, std::optional<int> steps) {
  const fs::path dir = prepare_output(config);
  const int n = steps.value_or(config.data.train_points + config.data.tau - 1);
  if (n < 0) throw Error(ErrorCode::InvalidArgument, "--steps must be non-negative");
  const TrajectoryRecord traj = simulate_system(config, config.data.initial_condition, n);
  write_csv((dir / "trajectory.csv").string(), traj);
  std::cout << fmt::format("system={} n={} dt={} file={}\n", config.system.kind, traj.length(), format_number(traj.dt),
                           (dir / "trajectory.csv").string());
  return 0;
}

int cmd_train(const ExperimentConfig& config) {
  const fs::path dir = prepare_output(config);
  reset_scale_clamp_count();
  const TrainingRun run = run_training(config);
  save_model((dir / "model.json").string(), run.model);
  {
    std::ofstream out = open_output((dir / "history.csv").string());
    write_history_csv(out, run.trained.history);
  }
  nlohmann::ordered_json snaps = nlohmann::ordered_json::array();
  for (const auto& s : run.trained.history.snapshots) {
    nlohmann::ordered_json kernels = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.theta.size(); ++i) {
      KernelSpec k = run.trained.kernels[i];
      k.theta = s.theta[i];
      kernels.push_back(to_json(k));
    }
    snaps.push_back({{"iteration", s.iteration}, {"kernels", kernels}});
  }
  write_json(dir / "theta.json", snaps);

  const auto trained_rmse = evaluate(run.model, config);
  const auto untrained_rmse = evaluate(untrained_model(config, run), config);
  const TrainConfig tc = train_config(config);
  int skipped = 0;
  for (const auto& r : run.trained.history.records) skipped += r.skipped ? 1 : 0;
  nlohmann::ordered_json report;
  report["name"] = config.name;
  report["metric"] = config.train.metric;
  report["iterations"] = config.train.iterations;
  report["seed"] = config.train.seed;
  report["initial_loss"] = run.initial_loss;
  report["final_loss"] = run.final_loss;
  report["skipped_iterations"] = skipped;
  report["amplitudes_normalized"] = tc.amplitudes_normalized();
  report["scale_clamps"] = scale_clamp_count();
  report["kernels"] = nlohmann::ordered_json::array();
  for (const auto& k : run.trained.kernels) report["kernels"].push_back(to_json(k));
  report["rmse_trained"] = rmse_json(trained_rmse);
  report["rmse_untrained"] = rmse_json(untrained_rmse);
  write_json(dir / "report.json", report);

  std::cout << fmt::format("loss {:.6g} -> {:.6g} after {} iterations ({} skipped)\n", run.initial_loss, run.final_loss,
                           config.train.iterations, skipped);
  for (std::size_t i = 0; i < run.trained.kernels.size(); ++i) {
    std::string vals;
    for (Eigen::Index j = 0; j < run.trained.kernels[i].theta.size(); ++j) {
      vals += fmt::format(" {:.6g}", run.trained.kernels[i].theta(j));
    }
    std::cout << fmt::format("theta[{}]{}\n", i, vals);
  }
  print_rmse("trained", trained_rmse);
  print_rmse("untrained", untrained_rmse);
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

int cmd_eval(const ExperimentConfig& config, const std::string& model_path, int rollout_steps) {
  const fs::path dir = prepare_output(config);
  const SurrogateModel model = load_model(model_path.empty() ? (dir / "model.json").string() : model_path);
  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < config.data.test_initial_conditions.size(); ++i) {
    const std::string& ic = config.data.test_initial_conditions[i];
    const TrajectoryRecord truth = series_for_pairs(config, ic, config.data.test_points);
    const DelayDataset ds = embed(config, truth);
    const Eigen::MatrixXd pred = predict_mean(model, ds.X);
    const Eigen::MatrixXd diff = ds.Y - pred;
    const Eigen::VectorXd rmse = (diff.colwise().squaredNorm() / static_cast<double>(ds.size())).cwiseSqrt().transpose();
    report.push_back({{"initial_condition", ic}, {"rmse", to_vector(rmse)}});
    print_rmse("eval", {EvalRow{ic, rmse}});

    // Teacher-forced one-step differences, indexed by the predicted step.
    std::ofstream out = open_output((dir / fmt::format("difference_{}.csv", i)).string());
    std::vector<std::string> header{"t"};
    for (Eigen::Index c = 0; c < diff.cols(); ++c) header.push_back(fmt::format("d{}", c));
    write_csv_header(out, header);
    for (Eigen::Index k = 0; k < diff.rows(); ++k) {
      std::vector<double> row{static_cast<double>(k + model.tau()) * truth.dt};
      for (Eigen::Index c = 0; c < diff.cols(); ++c) row.push_back(diff(k, c));
      write_csv_row(out, row);
    }
    if (rollout_steps > 0) {
      const TrajectoryRecord seed = simulate_system(config, ic, std::max(model.tau() - 1, 0));
      const TrajectoryRecord free =
          rollout(model, seed.states.topRows(model.tau()), rollout_steps, truth.dt);
      write_csv((dir / fmt::format("rollout_{}.csv", i)).string(), free);
    }
  }
  write_json(dir / "eval.json", report);
  return 0;
}

int cmd_tau(const ExperimentConfig& config) {
  const fs::path dir = prepare_output(config);
  const TauReport report = run_tau(config);
  const auto& sweep = report.sweep;
  const auto& profile = report.energies;
  {
    std::ofstream out = open_output((dir / "sweep.csv").string());
    write_sweep_csv(out, sweep);
  }
  {
    std::ofstream out = open_output((dir / "energies.csv").string());
    write_energy_csv(out, profile);
  }
  const int best = report.recommended;
  int succeeded = 0;
  std::cout << "tau  rmse          energy\n";
  for (const auto& e : sweep) {
    succeeded += e.rmse ? 1 : 0;
    std::cout << fmt::format("{:<4} {:<13} {:.6g}\n", e.tau, e.rmse ? fmt::format("{:.6g}", *e.rmse) : "failed",
                             profile.energies(e.tau));
  }
  std::cout << "recommended tau " << best << '\n';
  return succeeded > 0 ? 0 : 1;
}

int cmd_uncertainty(const ExperimentConfig& config, const std::string& model_path) {
  const fs::path dir = prepare_output(config);
  const SurrogateModel model = load_model(model_path.empty() ? (dir / "model.json").string() : model_path);
  if (config.data.test_initial_conditions.empty()) throw Error(ErrorCode::InvalidArgument, "no test initial condition");
  const std::string& ic = config.data.test_initial_conditions.front();
  const TrajectoryRecord truth = series_for_pairs(config, ic, config.data.test_points);
  const DelayDataset test = embed(config, truth);
  DelayDataset train;
  train.X = model.X();
  train.Y = model.Y();
  train.tau = model.tau();
  train.source_dim = model.source_dim();
  train.input_components = model.input_components();
  train.target_components = model.target_components();
  const Eigen::MatrixXd pred = predict_mean(model, test.X);
  const Eigen::MatrixXd delta = error_intervals(model, test.X, concatenate(train, test));

  std::ofstream out = open_output((dir / "uncertainty.csv").string());
  std::vector<std::string> header{"t"};
  for (Eigen::Index c = 0; c < pred.cols(); ++c) {
    header.push_back(fmt::format("truth{}", c));
    header.push_back(fmt::format("prediction{}", c));
    header.push_back(fmt::format("delta{}", c));
  }
  write_csv_header(out, header);
  for (Eigen::Index k = 0; k < pred.rows(); ++k) {
    std::vector<double> row{static_cast<double>(k + model.tau()) * truth.dt};
    for (Eigen::Index c = 0; c < pred.cols(); ++c) {
      row.push_back(test.Y(k, c));
      row.push_back(pred(k, c));
      row.push_back(delta(k, c));
    }
    write_csv_row(out, row);
  }
  std::cout << fmt::format("points={} max_delta={:.6g} file={}\n", pred.rows(), delta.size() ? delta.maxCoeff() : 0.0,
                           (dir / "uncertainty.csv").string());
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParameterArity:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::SeriesTooShort:
    case ErrorCode::Io: return 2;
    case ErrorCode::NonFinite: return 3;
    case ErrorCode::TrainingStalled: return 4;
    case ErrorCode::ChecksumMismatch: return 5;
    default: return 1;
  }
}

void configure_logging() {
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("KFLOW_LOG")) spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%l] %v");
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Kernel Flows surrogates for chaotic dynamical systems"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::optional<int> steps;
  std::string model_path;
  int rollout_steps = 0;

  auto* simulate = app.add_subcommand("simulate", "write a ground-truth trajectory CSV");
  add_common(simulate, opts);
  simulate->add_option("--steps", steps, "number of steps (states = steps + 1)");
  auto* train = app.add_subcommand("train", "learn kernel parameters and fit the surrogate");
  add_common(train, opts);
  auto* eval = app.add_subcommand("eval", "one-step RMSE of a saved model on the test initial conditions");
  add_common(eval, opts);
  eval->add_option("--model", model_path, "model JSON (default <out>/model.json)");
  eval->add_option("--rollout", rollout_steps, "also write a free-running rollout of this many steps");
  auto* tau = app.add_subcommand("tau", "delay sweep and alignment energies for a scalar series");
  add_common(tau, opts);
  auto* uncertainty = app.add_subcommand("uncertainty", "prediction error intervals along a test trajectory");
  add_common(uncertainty, opts);
  uncertainty->add_option("--model", model_path, "model JSON (default <out>/model.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    std::vector<std::string> extras = cmd->remaining();
    // Short aliases for simulate, e.g. `simulate --system logistic --x0 0.1`.
    if (cmd == simulate) {
      for (std::size_t i = 0; i < extras.size(); ++i) {
        if (extras[i] == "--system") extras[i] = "--system.kind";
        if (extras[i] == "--x0") extras[i] = "--data.initial_condition";
        if (extras[i] == "--h") extras[i] = "--system.h";
      }
    }
    const ExperimentConfig config = resolve_config(opts, parse_overrides(extras));
    if (cmd == simulate) return cmd_simulate(config, steps);
    if (cmd == train) return cmd_train(config);
    if (cmd == eval) return cmd_eval(config, model_path, rollout_steps);
    if (cmd == tau) return cmd_tau(config);
    return cmd_uncertainty(config, model_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
