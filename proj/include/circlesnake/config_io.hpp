#pragma once

#include "circlesnake/json_util.hpp"
#include "circlesnake/model.hpp"

#include <string>

namespace csnake {

Json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const Json& j, const std::string& path = "");

Json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j, const std::string& path = "");

} // namespace csnake
