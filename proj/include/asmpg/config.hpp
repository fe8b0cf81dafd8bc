#pragma once

#include <string>

#include <json.hpp>

#include "asmpg/trainer.hpp"

namespace asmpg {

inline constexpr int kConfigVersion = 1;

/// Parses a run config document. Every key is checked; unknown keys, wrong
/// types and out-of-domain values raise ConfigError naming the field.
TrainConfig config_from_json(const nlohmann::json& doc);

TrainConfig load_config(const std::string& path);

}  // namespace asmpg
