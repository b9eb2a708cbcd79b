#include "kflow/kernels.hpp"

#include <array>
#include <atomic>
#include <numeric>

#include <fmt/format.h>

#include "kflow/kernel_json.hpp"

namespace kflow {
namespace {

std::atomic<std::uint64_t> g_scale_clamps{0};

struct KindInfo {
  KernelKind kind;
  std::string_view name;
  std::vector<std::string_view> slots;
  std::vector<bool> scales;
};

const std::array<KindInfo, 7>& kind_table() {
  static const std::array<KindInfo, 7> table{{
      {KernelKind::Constant, "constant", {"amplitude"}, {false}},
      {KernelKind::Triangular, "triangular", {"amplitude", "scale"}, {false, true}},
      {KernelKind::Gaussian, "gaussian", {"amplitude", "scale"}, {false, true}},
      {KernelKind::Laplace, "laplace", {"amplitude", "scale"}, {false, true}},
      {KernelKind::LocallyPeriodic,
       "locally_periodic",
       {"amplitude", "sin_weight", "frequency", "scale"},
       {false, false, false, true}},
      {KernelKind::Quadratic, "quadratic", {"amplitude"}, {false}},
      {KernelKind::PowerRational,
       "power_rational",
       {"amplitude", "offset", "inner_power", "outer_power"},
       {false, false, false, false}},
  }};
  return table;
}

const KindInfo& info(KernelKind kind) {
  for (const auto& entry : kind_table()) {
    if (entry.kind == kind) return entry;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown kernel kind");
}

}  // namespace

int slot_count(KernelKind kind) {
  switch (kind) {
    case KernelKind::Constant:
    case KernelKind::Quadratic:
      return 1;
    case KernelKind::Triangular:
    case KernelKind::Gaussian:
    case KernelKind::Laplace:
      return 2;
    case KernelKind::LocallyPeriodic:
    case KernelKind::PowerRational:
      return 4;
  }
  return 0;
}

std::vector<std::string_view> slot_names(KernelKind kind) { return info(kind).slots; }
std::vector<bool> scale_slots(KernelKind kind) { return info(kind).scales; }
std::string_view to_string(KernelKind kind) { return info(kind).name; }

KernelKind kernel_kind_from_string(std::string_view name) {
  for (const auto& entry : kind_table()) {
    if (entry.name == name) return entry.kind;
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown kernel kind '{}'", name));
}

std::string_view to_string(ParameterMode mode) { return mode == ParameterMode::Raw ? "raw" : "squared"; }

ParameterMode parameter_mode_from_string(std::string_view name) {
  if (name == "raw") return ParameterMode::Raw;
  if (name == "squared") return ParameterMode::SquaredAmplitudes;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown parameter mode '{}'", name));
}

int KernelSpec::parameter_count() const {
  return std::accumulate(primitives.begin(), primitives.end(), 0,
                         [](int acc, const KernelPrimitive& p) { return acc + slot_count(p.kind); });
}

std::vector<int> KernelSpec::offsets() const {
  std::vector<int> out;
  int offset = 0;
  for (const auto& p : primitives) {
    out.push_back(offset);
    offset += slot_count(p.kind);
  }
  return out;
}

std::vector<int> KernelSpec::amplitude_slots() const { return offsets(); }

void check_arity(const KernelSpec& spec, Eigen::Index n) {
  if (n != spec.parameter_count()) {
    throw Error(ErrorCode::ParameterArity,
                fmt::format("kernel expects {} parameters, got {}", spec.parameter_count(), n));
  }
}

std::uint64_t scale_clamp_count() noexcept { return g_scale_clamps.load(std::memory_order_relaxed); }
void reset_scale_clamp_count() noexcept { g_scale_clamps.store(0, std::memory_order_relaxed); }

namespace detail {

void note_scale_clamp() noexcept { g_scale_clamps.fetch_add(1, std::memory_order_relaxed); }

void throw_non_finite(KernelKind kind, double r) {
  throw Error(ErrorCode::NonFinite, fmt::format("{} term is not finite at r = {}", to_string(kind), r));
}

}  // namespace detail

nlohmann::ordered_json to_json(const KernelSpec& spec) {
  nlohmann::ordered_json doc;
  doc["mode"] = to_string(spec.mode);
  auto prims = nlohmann::ordered_json::array();
  for (const auto& p : spec.primitives) {
    nlohmann::ordered_json entry;
    entry["kind"] = to_string(p.kind);
    entry["flags"] = nlohmann::ordered_json::object();
    if (p.kind == KernelKind::LocallyPeriodic) entry["flags"]["sin_power"] = p.sin_power;
    prims.push_back(std::move(entry));
  }
  doc["primitives"] = std::move(prims);
  doc["theta"] = std::vector<double>(spec.theta.data(), spec.theta.data() + spec.theta.size());
  return doc;
}

KernelSpec kernel_spec_from_json(const nlohmann::json& doc) {
  try {
    KernelSpec spec;
    spec.mode = parameter_mode_from_string(doc.at("mode").get<std::string>());
    for (const auto& entry : doc.at("primitives")) {
      KernelPrimitive p;
      p.kind = kernel_kind_from_string(entry.at("kind").get<std::string>());
      if (entry.contains("flags") && entry["flags"].contains("sin_power")) {
        p.sin_power = entry["flags"]["sin_power"].get<int>();
        if (p.sin_power != 1 && p.sin_power != 2) {
          throw Error(ErrorCode::InvalidArgument, "sin_power must be 1 or 2");
        }
      }
      spec.primitives.push_back(p);
    }
    const auto theta = doc.at("theta").get<std::vector<double>>();
    spec.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    check_arity(spec, spec.theta.size());
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("malformed kernel document: {}", e.what()));
  }
}

}  // namespace kflow
