#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsteer/core.hpp"
#include "refsteer/demonstration.hpp"
#include "refsteer/rng.hpp"

namespace refsteer {

inline constexpr double kTableZ = 0.0;
inline constexpr double kGraspRadius = 0.03;
inline constexpr double kEeRadius = 0.01;
inline constexpr double kPushSubstep = 0.005;
inline constexpr int kObsDim = 15;

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const;
  bool contains_strictly(const Vec3& p) const;
  Vec3 clamp(const Vec3& p) const;
  /// Moves an interior point to the nearest face; exterior points pass through.
  Vec3 push_out(const Vec3& p) const;
  Vec3 center() const { return 0.5 * (lo + hi); }
};

/// Axis-aligned bounds intersected with a reach ball around the robot base.
struct Workspace {
  Box bounds;
  Vec3 base = Vec3::Zero();
  double reach = 0.0;

  bool contains(const Vec3& p) const;
  Vec3 clamp(const Vec3& p) const;
};

Workspace default_workspace();

struct WorldObject {
  int id = 0;
  Vec3 position = Vec3::Zero();
  double radius = 0.02;
  bool held = false;
  bool pushable = false;
};

struct WorldState {
  Action ee;
  std::vector<WorldObject> objects;
  int target_object = 0;
  Vec3 goal = Vec3::Zero();
  double goal_radius = 0.05;
  std::vector<Box> obstacles;
  Workspace workspace;
  Vec3 initial_ee = Vec3::Zero();

  const WorldObject& target() const { return objects.at(static_cast<std::size_t>(target_object)); }
};

enum class TaskKind { ReachVia, PickPlaceVia, PushTVia };

std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

struct Task {
  TaskKind kind = TaskKind::ReachVia;
  std::string name;
  HorizonConfig horizon;

  WorldState reset(Rng& rng) const;
  WorldState reset(std::uint64_t seed) const;
  bool success(const WorldState& state) const;
};

Task make_task(TaskKind kind);
Task make_task(const std::string& name);

/// Kinematic step: the end effector teleports to the clamped target pose,
/// sweeping pushable objects on the way; gripper edges grasp or release.
WorldState step(const WorldState& state, const Action& action);

/// [ee trans(3), ee rot(4), gripper, target object pos(3), held, goal(3)]
Eigen::VectorXd observe(const WorldState& state);

/// Scripted expert: straight segments through task waypoints with a
/// trapezoidal speed profile on each, resampled to exactly N actions.
/// Throws Error if the script fails its own success predicate.
Demonstration expert_demo(const Task& task, std::uint64_t seed);

/// Replays actions from the reset state of `seed`, returning every state.
std::vector<WorldState> replay(const Task& task, std::uint64_t seed, const Trajectory& actions);

/// Midpoint of the initial end effector and target object, lifted 0.1 m
/// above the table, plus isotropic Gaussian noise; rejection-sampled into
/// the workspace (100 straight misses throw).
ReferringPoint gen_via_point(const WorldState& state, double sigma, Rng& rng);

/// Perpendicular-bisector offsets p_m + lambda * d_perp with d_perp in the
/// table plane. Throws when p_e and p_o share an (x, y) location.
std::vector<Vec3> ood_offsets(const Vec3& p_e, const Vec3& p_o, const std::vector<double>& lambdas);

/// ood_offsets between the current end effector and target, filtered to the workspace.
std::vector<ReferringPoint> gen_ood_points(const WorldState& state,
                                           const std::vector<double>& lambdas = {0.1, 0.2, 0.3,
                                                                                 0.4});

enum class InfeasibleKind { OutOfReach, Blocked };

/// OutOfReach: a point 1.5 R from the base. Blocked: a uniform point inside
/// an obstacle, kept at least `margin` (where the box allows) from its faces.
ReferringPoint gen_infeasible_point(const WorldState& state, InfeasibleKind kind, Rng& rng,
                                    double margin = 0.05);

}  // namespace refsteer
