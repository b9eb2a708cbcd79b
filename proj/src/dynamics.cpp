#include "kflow/dynamics.hpp"

#include <mpfr.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "kflow/csv.hpp"

namespace kflow {
namespace {

class MpfrValue {
 public:
  explicit MpfrValue(mpfr_prec_t prec) { mpfr_init2(v_, prec); }
  ~MpfrValue() { mpfr_clear(v_); }
  MpfrValue(const MpfrValue&) = delete;
  MpfrValue& operator=(const MpfrValue&) = delete;

  mpfr_ptr get() { return v_; }

 private:
  mpfr_t v_;
};

// expr := ['-'] factor (('*' | '/') factor)*
// factor := number | "pi"
void evaluate_expression(std::string_view expr, mpfr_ptr out, mpfr_prec_t prec) {
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < expr.size() && std::isspace(static_cast<unsigned char>(expr[pos]))) ++pos;
  };
  auto fail = [&](std::string_view why) -> void {
    throw Error(ErrorCode::InvalidArgument, fmt::format("bad initial value '{}': {}", expr, why));
  };
  MpfrValue factor(prec);
  auto read_factor = [&](mpfr_ptr dst) {
    skip_ws();
    if (expr.substr(pos, 2) == "pi") {
      mpfr_const_pi(dst, MPFR_RNDN);
      pos += 2;
      return;
    }
    const std::size_t start = pos;
    while (pos < expr.size() && (std::isdigit(static_cast<unsigned char>(expr[pos])) || expr[pos] == '.' ||
                                 expr[pos] == 'e' || expr[pos] == 'E' ||
                                 ((expr[pos] == '-' || expr[pos] == '+') && pos > start &&
                                  (expr[pos - 1] == 'e' || expr[pos - 1] == 'E')))) {
      ++pos;
    }
    if (start == pos) fail("expected a number or 'pi'");
    const std::string literal(expr.substr(start, pos - start));
    if (mpfr_set_str(dst, literal.c_str(), 10, MPFR_RNDN) != 0) fail("unparsable number");
  };

  skip_ws();
  bool negate = false;
  if (pos < expr.size() && expr[pos] == '-') {
    negate = true;
    ++pos;
  }
  read_factor(out);
  while (true) {
    skip_ws();
    if (pos >= expr.size()) break;
    const char op = expr[pos++];
    if (op != '*' && op != '/') fail("expected '*' or '/'");
    read_factor(factor.get());
    if (op == '*') {
      mpfr_mul(out, out, factor.get(), MPFR_RNDN);
    } else {
      if (mpfr_zero_p(factor.get())) fail("division by zero");
      mpfr_div(out, out, factor.get(), MPFR_RNDN);
    }
  }
  if (negate) mpfr_neg(out, out, MPFR_RNDN);
}

void require_dim(const Eigen::VectorXd& state, int dim, std::string_view what) {
  if (state.size() != dim) {
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("{} expects a {}-dimensional state, got {}", what, dim, state.size()));
  }
}

}  // namespace

int MapSystem::input_dim() const {
  switch (kind) {
    case MapKind::Bernoulli:
    case MapKind::Logistic:
      return 1;
    case MapKind::Henon:
    case MapKind::HenonScalar:
      return 2;
  }
  return 0;
}

int MapSystem::state_dim() const { return kind == MapKind::Henon ? 2 : 1; }

std::string_view to_string(MapKind kind) {
  switch (kind) {
    case MapKind::Bernoulli: return "bernoulli";
    case MapKind::Logistic: return "logistic";
    case MapKind::Henon: return "henon";
    case MapKind::HenonScalar: return "henon_scalar";
  }
  return "unknown";
}

MapKind map_kind_from_string(std::string_view name) {
  if (name == "bernoulli") return MapKind::Bernoulli;
  if (name == "logistic") return MapKind::Logistic;
  if (name == "henon") return MapKind::Henon;
  if (name == "henon_scalar") return MapKind::HenonScalar;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown map '{}'", name));
}

Eigen::VectorXd map_step(const MapSystem& system, const Eigen::VectorXd& state) {
  require_dim(state, system.input_dim(), to_string(system.kind));
  Eigen::VectorXd next(system.state_dim());
  switch (system.kind) {
    case MapKind::Bernoulli: {
      const double y = 2.0 * state(0);
      next(0) = y - std::floor(y);
      break;
    }
    case MapKind::Logistic:
      next(0) = 4.0 * state(0) * (1.0 - state(0));
      break;
    case MapKind::Henon:
      next(0) = 1.0 - system.a * state(0) * state(0) + state(1);
      next(1) = system.b * state(0);
      break;
    case MapKind::HenonScalar:
      next(0) = 1.0 - system.a * state(0) * state(0) + system.b * state(1);
      break;
  }
  return next;
}

Eigen::Vector3d lorenz_rhs(const OdeSystem& p, const Eigen::Vector3d& u) {
  return {p.s * (u(1) - u(0)), p.r * u(0) - u(1) - u(0) * u(2), u(0) * u(1) - p.b * u(2)};
}

TrajectoryRecord simulate(const MapSystem& system, const Eigen::VectorXd& x0, int n_steps) {
  if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be non-negative");
  require_dim(x0, system.input_dim(), to_string(system.kind));
  if (!x0.allFinite()) throw Error(ErrorCode::NonFinite, "initial condition is not finite");
  TrajectoryRecord traj;
  traj.dt = 1.0;
  traj.origin.system = std::string(to_string(system.kind));
  traj.states.resize(n_steps + 1, system.state_dim());

  Eigen::VectorXd state = x0;
  if (system.kind == MapKind::HenonScalar) {
    traj.states(0, 0) = state(0);
    for (int k = 1; k <= n_steps; ++k) {
      const double next = map_step(system, state)(0);
      if (!std::isfinite(next)) throw Error(ErrorCode::NonFinite, fmt::format("orbit diverged at step {}", k));
      state = Eigen::Vector2d(next, state(0));
      traj.states(k, 0) = next;
    }
    return traj;
  }
  if (system.kind == MapKind::Bernoulli) state(0) -= std::floor(state(0));
  traj.states.row(0) = state.transpose();
  for (int k = 1; k <= n_steps; ++k) {
    state = map_step(system, state);
    if (!state.allFinite()) throw Error(ErrorCode::NonFinite, fmt::format("orbit diverged at step {}", k));
    traj.states.row(k) = state.transpose();
  }
  return traj;
}

TrajectoryRecord simulate(const OdeSystem& system, const Eigen::Vector3d& x0, int n_steps) {
  if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be non-negative");
  if (!(system.h > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
  TrajectoryRecord traj;
  traj.dt = system.h;
  traj.origin.system = "lorenz";
  traj.states.resize(n_steps + 1, 3);
  Eigen::Vector3d state = x0;
  traj.states.row(0) = state.transpose();
  const auto rhs = [&](const Eigen::Vector3d& u) { return lorenz_rhs(system, u); };
  for (int k = 1; k <= n_steps; ++k) {
    try {
      state = rk4_step(rhs, state, system.h);
    } catch (const Error&) {
      throw Error(ErrorCode::NonFinite, fmt::format("Lorenz trajectory diverged at step {}", k));
    }
    traj.states.row(k) = state.transpose();
  }
  return traj;
}

TrajectoryRecord simulate_bernoulli_exact(std::string_view x0, int n_steps) {
  if (n_steps < 0) throw Error(ErrorCode::InvalidArgument, "n_steps must be non-negative");
  // Each step consumes one bit; keep a margin for the conversion to double.
  const mpfr_prec_t prec = static_cast<mpfr_prec_t>(n_steps) + 128;
  MpfrValue x(prec);
  evaluate_expression(x0, x.get(), prec);
  mpfr_frac(x.get(), x.get(), MPFR_RNDN);
  if (mpfr_sgn(x.get()) < 0) mpfr_add_ui(x.get(), x.get(), 1, MPFR_RNDN);

  TrajectoryRecord traj;
  traj.dt = 1.0;
  traj.origin.system = "bernoulli";
  traj.origin.initial_condition = std::string(x0);
  traj.states.resize(n_steps + 1, 1);
  for (int k = 0; k <= n_steps; ++k) {
    // Round down so a value just below 1 never becomes 1.0.
    traj.states(k, 0) = mpfr_get_d(x.get(), MPFR_RNDZ);
    mpfr_mul_2ui(x.get(), x.get(), 1, MPFR_RNDN);
    if (mpfr_cmp_ui(x.get(), 1) >= 0) mpfr_sub_ui(x.get(), x.get(), 1, MPFR_RNDN);
  }
  return traj;
}

double parse_initial_value(std::string_view expr) {
  MpfrValue x(256);
  evaluate_expression(expr, x.get(), 256);
  return mpfr_get_d(x.get(), MPFR_RNDN);
}

void write_csv(std::ostream& out, const TrajectoryRecord& traj) {
  std::vector<std::string> header{"t"};
  for (Eigen::Index j = 0; j < traj.dim(); ++j) header.push_back(fmt::format("x{}", j));
  write_csv_header(out, header);
  std::vector<double> row(static_cast<std::size_t>(traj.dim()) + 1);
  for (Eigen::Index k = 0; k < traj.length(); ++k) {
    row[0] = static_cast<double>(k) * traj.dt;
    for (Eigen::Index j = 0; j < traj.dim(); ++j) row[static_cast<std::size_t>(j) + 1] = traj.states(k, j);
    write_csv_row(out, row);
  }
}

void write_csv(const std::string& path, const TrajectoryRecord& traj) {
  auto out = open_output(path);
  write_csv(out, traj);
}

}  // namespace kflow
