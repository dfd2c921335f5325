/*
 * Copyright (C) 2026 faultclass authors
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <json.hpp>

#include "faultclass/models.hpp"

namespace faultclass {

nlohmann::json config_to_json(const ModelConfig& config);
/// Keys missing from `j` keep their defaults. Throws std::invalid_argument
/// for unknown keys or ill-typed values.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});

}  // namespace faultclass
