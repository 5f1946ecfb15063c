#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "refsteer/demonstration.hpp"
#include "refsteer/metrics.hpp"

namespace refsteer {

nlohmann::json actions_to_json(const std::vector<Action>& actions);
std::vector<Action> actions_from_json(const nlohmann::json& j);

nlohmann::json demo_to_json(const Demonstration& demo);
Demonstration demo_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const RolloutRecord& record);
RolloutRecord record_from_json(const nlohmann::json& j);

/// JSON-lines files, one object per line; blank lines are skipped.
void write_demos(const std::string& path, const std::vector<Demonstration>& demos);
std::vector<Demonstration> read_demos(const std::string& path);
void write_records(const std::string& path, const std::vector<RolloutRecord>& records);
std::vector<RolloutRecord> read_records(const std::string& path);

}  // namespace refsteer
