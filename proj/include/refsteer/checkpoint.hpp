#pragma once

#include <string>

#include <json.hpp>

#include "refsteer/nn.hpp"

namespace refsteer {

inline constexpr int kCheckpointSchemaVersion = 1;

/// {name: {rows, cols, data}} for every parameter in the list.
nlohmann::json params_to_json(const nn::ParamList& params);

/// Loads values by name; every parameter in `params` must be present with
/// a matching shape.
void params_from_json(const nlohmann::json& j, const nn::ParamList& params);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace refsteer
