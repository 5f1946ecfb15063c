#include "refsteer/io.hpp"

#include <fstream>

namespace refsteer {

namespace {

template <typename T, typename F>
std::vector<T> read_lines(const std::string& path, F&& parse) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open " + path);
  }
  std::vector<T> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T, typename F>
void write_lines(const std::string& path, const std::vector<T>& items, F&& dump) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write " + path);
  }
  for (const auto& item : items) {
    out << dump(item).dump() << '\n';
  }
  if (!out) {
    throw Error("write failed for " + path);
  }
}

nlohmann::json vec3_json(const Vec3& v) {
  return {v.x(), v.y(), v.z()};
}

}  // namespace

nlohmann::json actions_to_json(const std::vector<Action>& actions) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : actions) {
    const ActionVector v = flatten(a);
    arr.push_back(std::vector<double>(v.data(), v.data() + kActionDim));
  }
  return arr;
}

std::vector<Action> actions_from_json(const nlohmann::json& j) {
  std::vector<Action> out;
  for (const auto& row : j) {
    const auto v = row.get<std::vector<double>>();
    if (v.size() != static_cast<std::size_t>(kActionDim)) {
      throw Error("action rows must hold 8 values");
    }
    out.push_back(unflatten(Eigen::Map<const ActionVector>(v.data())));
  }
  return out;
}

nlohmann::json demo_to_json(const Demonstration& demo) {
  nlohmann::json obs = nlohmann::json::array();
  for (const auto& o : demo.observations) {
    obs.push_back(std::vector<double>(o.data(), o.data() + o.size()));
  }
  return {{"episode_id", demo.episode_id},
          {"task", demo.task},
          {"seed", demo.seed},
          {"actions", actions_to_json(demo.actions)},
          {"obs", std::move(obs)}};
}

Demonstration demo_from_json(const nlohmann::json& j) {
  Demonstration d;
  d.episode_id = j.at("episode_id").get<std::string>();
  d.task = j.at("task").get<std::string>();
  d.seed = j.at("seed").get<std::uint64_t>();
  d.actions = actions_from_json(j.at("actions"));
  for (const auto& row : j.at("obs")) {
    const auto v = row.get<std::vector<double>>();
    d.observations.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  if (d.observations.size() != d.actions.size()) {
    throw Error("demonstration " + d.episode_id + " has mismatched action and observation counts");
  }
  return d;
}

nlohmann::json record_to_json(const RolloutRecord& r) {
  return {{"task", r.task},
          {"method", r.method},
          {"seed", r.seed},
          {"referring", r.referring ? vec3_json(*r.referring) : nlohmann::json(nullptr)},
          {"k", r.k},
          {"trajectory", actions_to_json(r.trajectory)},
          {"anchors", actions_to_json(r.anchors)},
          {"success", r.success ? 1 : 0}};
}

RolloutRecord record_from_json(const nlohmann::json& j) {
  RolloutRecord r;
  r.task = j.at("task").get<std::string>();
  r.method = j.value("method", std::string("rev"));
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto& ref = j.at("referring");
  if (!ref.is_null()) {
    const auto v = ref.get<std::vector<double>>();
    if (v.size() != 3) {
      throw Error("referring point must hold 3 values");
    }
    r.referring = Vec3(v[0], v[1], v[2]);
  }
  r.k = j.at("k").get<int>();
  r.trajectory = actions_from_json(j.at("trajectory"));
  r.anchors = actions_from_json(j.at("anchors"));
  const auto& s = j.at("success");
  r.success = s.is_boolean() ? s.get<bool>() : s.get<int>() != 0;
  return r;
}

void write_demos(const std::string& path, const std::vector<Demonstration>& demos) {
  write_lines(path, demos, demo_to_json);
}

std::vector<Demonstration> read_demos(const std::string& path) {
  return read_lines<Demonstration>(path, demo_from_json);
}

void write_records(const std::string& path, const std::vector<RolloutRecord>& records) {
  write_lines(path, records, record_to_json);
}

std::vector<RolloutRecord> read_records(const std::string& path) {
  return read_lines<RolloutRecord>(path, record_from_json);
}

}  // namespace refsteer
