#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsteer/core.hpp"

namespace refsteer {

/// One expert episode. observations[t] is the world observation after
/// executing actions[0..t]; actions[0] is the initial pose.
struct Demonstration {
  std::string episode_id;
  std::string task;
  std::uint64_t seed = 0;
  Trajectory actions;
  std::vector<Eigen::VectorXd> observations;

  std::size_t size() const { return actions.size(); }
};

}  // namespace refsteer
