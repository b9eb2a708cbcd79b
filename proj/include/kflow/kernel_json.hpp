#pragma once

#include <nlohmann/json.hpp>

#include "kflow/kernels.hpp"

namespace kflow {

/// {"mode": ..., "primitives": [{"kind": ..., "flags": {...}}], "theta": [...]}
nlohmann::ordered_json to_json(const KernelSpec& spec);
KernelSpec kernel_spec_from_json(const nlohmann::json& doc);

}  // namespace kflow
