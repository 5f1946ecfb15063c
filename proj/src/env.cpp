#include "refsteer/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace refsteer {

bool Box::contains(const Vec3& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

bool Box::contains_strictly(const Vec3& p) const {
  return (p.array() > lo.array()).all() && (p.array() < hi.array()).all();
}

Vec3 Box::clamp(const Vec3& p) const {
  return p.cwiseMax(lo).cwiseMin(hi);
}

Vec3 Box::push_out(const Vec3& p) const {
  if (!contains_strictly(p)) {
    return p;
  }
  Vec3 out = p;
  double best = std::numeric_limits<double>::infinity();
  int axis = 0;
  bool to_hi = false;
  for (int d = 0; d < 3; ++d) {
    const double dl = p[d] - lo[d];
    const double dh = hi[d] - p[d];
    if (dl < best) {
      best = dl;
      axis = d;
      to_hi = false;
    }
    if (dh < best) {
      best = dh;
      axis = d;
      to_hi = true;
    }
  }
  out[axis] = to_hi ? hi[axis] : lo[axis];
  return out;
}

bool Workspace::contains(const Vec3& p) const {
  return bounds.contains(p) && (p - base).norm() <= reach;
}

Vec3 Workspace::clamp(const Vec3& p) const {
  Vec3 q = bounds.clamp(p);
  const Vec3 offset = q - base;
  const double dist = offset.norm();
  if (dist > reach) {
    q = base + offset * (reach / dist);
  }
  return q;
}

Workspace default_workspace() {
  Workspace ws;
  ws.bounds = Box{Vec3(0.0, 0.0, 0.0), Vec3(1.0, 1.0, 0.5)};
  ws.base = Vec3(0.5, 0.0, 0.0);
  ws.reach = 0.8;
  return ws;
}

// ---------------------------------------------------------------------------

std::string task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::ReachVia:
      return "reach-via";
    case TaskKind::PickPlaceVia:
      return "pick-place-via";
    case TaskKind::PushTVia:
      return "push-t-via";
  }
  return "unknown";
}

TaskKind parse_task(const std::string& name) {
  if (name == "reach-via") return TaskKind::ReachVia;
  if (name == "pick-place-via") return TaskKind::PickPlaceVia;
  if (name == "push-t-via") return TaskKind::PushTVia;
  throw Error("unknown task: " + name);
}

Task make_task(TaskKind kind) {
  Task task;
  task.kind = kind;
  task.name = task_name(kind);
  switch (kind) {
    case TaskKind::ReachVia:
      task.horizon = make_horizon(6, 6);
      break;
    case TaskKind::PickPlaceVia:
      task.horizon = make_horizon(9, 8);
      break;
    case TaskKind::PushTVia:
      task.horizon = make_horizon(10, 8);
      break;
  }
  return task;
}

Task make_task(const std::string& name) {
  return make_task(parse_task(name));
}

namespace {

Box default_obstacle() {
  return Box{Vec3(0.78, 0.05, 0.0), Vec3(0.95, 0.22, 0.2)};
}

double push_angle(const WorldState& s) {
  const Vec3 d = s.goal - s.target().position;
  return std::atan2(d.y(), d.x());
}

}  // namespace

WorldState Task::reset(Rng& rng) const {
  WorldState s;
  s.workspace = default_workspace();
  s.obstacles.push_back(default_obstacle());
  const Vec3 start(rng.uniform(0.15, 0.3), rng.uniform(0.15, 0.3), 0.2);
  s.ee = Action::at(start, 0.0, 0.0);
  s.initial_ee = start;

  WorldObject obj;
  obj.id = 0;
  switch (kind) {
    case TaskKind::ReachVia:
      obj.radius = 0.02;
      obj.position = Vec3(rng.uniform(0.6, 0.8), rng.uniform(0.45, 0.65), kTableZ + obj.radius);
      s.goal = obj.position;
      s.goal_radius = 0.05;
      break;
    case TaskKind::PickPlaceVia:
      obj.radius = 0.02;
      obj.position = Vec3(rng.uniform(0.35, 0.55), rng.uniform(0.45, 0.65), kTableZ + obj.radius);
      s.goal = Vec3(rng.uniform(0.65, 0.8), rng.uniform(0.3, 0.5), kTableZ + obj.radius);
      s.goal_radius = 0.05;
      break;
    case TaskKind::PushTVia: {
      obj.radius = 0.04;
      obj.pushable = true;
      obj.position = Vec3(rng.uniform(0.35, 0.5), rng.uniform(0.3, 0.45), kTableZ + obj.radius);
      const double theta = rng.uniform(std::numbers::pi / 3.0, 2.0 * std::numbers::pi / 3.0);
      s.goal = obj.position + 0.25 * Vec3(std::cos(theta), std::sin(theta), 0.0);
      s.goal_radius = 0.04;
      break;
    }
  }
  s.objects.push_back(obj);
  s.target_object = 0;
  return s;
}

WorldState Task::reset(std::uint64_t seed) const {
  Rng rng(seed);
  return reset(rng);
}

bool Task::success(const WorldState& s) const {
  const WorldObject& obj = s.target();
  switch (kind) {
    case TaskKind::ReachVia:
      return (s.ee.trans - obj.position).norm() <= s.goal_radius;
    case TaskKind::PickPlaceVia:
    case TaskKind::PushTVia:
      return !obj.held && (obj.position - s.goal).head<2>().norm() <= s.goal_radius;
  }
  return false;
}

// ---------------------------------------------------------------------------

namespace {

Vec3 clamp_to_world(const WorldState& s, const Vec3& target) {
  Vec3 p = s.workspace.clamp(target);
  for (const Box& box : s.obstacles) {
    p = box.push_out(p);
  }
  return s.workspace.clamp(p);
}

void sweep_push(WorldObject& obj, const Vec3& ee) {
  const double top = obj.position.z() + obj.radius;
  if (ee.z() > top) {
    return;
  }
  const double contact = obj.radius + kEeRadius;
  Eigen::Vector2d d = obj.position.head<2>() - ee.head<2>();
  const double dist = d.norm();
  if (dist >= contact) {
    return;
  }
  if (dist == 0.0) {
    d = Eigen::Vector2d(1.0, 0.0);
  } else {
    d /= dist;
  }
  obj.position.head<2>() = ee.head<2>() + contact * d;
}

}  // namespace

WorldState step(const WorldState& state, const Action& action) {
  WorldState next = state;
  const Vec3 from = state.ee.trans;
  const Vec3 to = clamp_to_world(state, action.trans);
  const double gripper = action.gripper >= 0.5 ? 1.0 : 0.0;

  const double travel = (to - from).norm();
  if (travel > 0.0) {
    const int substeps = std::max(1, static_cast<int>(std::ceil(travel / kPushSubstep)));
    for (int k = 1; k <= substeps; ++k) {
      const Vec3 p = from + (to - from) * (static_cast<double>(k) / substeps);
      for (WorldObject& obj : next.objects) {
        if (obj.pushable && !obj.held) {
          sweep_push(obj, p);
        }
      }
    }
  }
  next.ee.trans = to;
  next.ee.rot = canonical_quaternion(action.rot);
  next.ee.gripper = gripper;

  const bool closing = state.ee.gripper < 0.5 && gripper >= 0.5;
  const bool opening = state.ee.gripper >= 0.5 && gripper < 0.5;
  if (closing) {
    WorldObject* best = nullptr;
    double best_dist = kGraspRadius;
    for (WorldObject& obj : next.objects) {
      const double d = (obj.position - to).norm();
      if (!obj.held && d <= best_dist) {
        best = &obj;
        best_dist = d;
      }
    }
    if (best != nullptr) {
      best->held = true;
    }
  }
  for (WorldObject& obj : next.objects) {
    if (obj.held) {
      if (opening) {
        obj.held = false;
        obj.position = Vec3(to.x(), to.y(), kTableZ + obj.radius);
      } else {
        obj.position = to;
      }
    }
  }
  return next;
}

Eigen::VectorXd observe(const WorldState& s) {
  Eigen::VectorXd obs(kObsDim);
  obs.segment<8>(0) = flatten(s.ee);
  obs.segment<3>(8) = s.target().position;
  obs[11] = s.target().held ? 1.0 : 0.0;
  obs.segment<3>(12) = s.goal;
  return obs;
}

// ---------------------------------------------------------------------------

namespace {

struct Waypoint {
  Vec3 p;
  double yaw = 0.0;
  double gripper = 0.0;
};

double trapezoid(double u) {
  constexpr double a = 0.25;
  constexpr double vmax = 1.0 / (1.0 - a);
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  if (u < a) return 0.5 * vmax / a * u * u;
  if (u < 1.0 - a) return 0.5 * vmax * a + vmax * (u - a);
  const double r = 1.0 - u;
  return 1.0 - 0.5 * vmax / a * r * r;
}

std::vector<Waypoint> script(const Task& task, const WorldState& s, Rng& rng) {
  const Vec3 start = s.ee.trans;
  const Vec3 obj = s.target().position;
  std::vector<Waypoint> wps;
  wps.push_back({start, 0.0, 0.0});
  switch (task.kind) {
    case TaskKind::ReachVia: {
      const double yaw = rng.uniform(-0.5, 0.5);
      wps.push_back({obj + Vec3(0.0, 0.0, 0.08), yaw, 0.0});
      wps.push_back({obj, yaw, 0.0});
      break;
    }
    case TaskKind::PickPlaceVia: {
      const double yaw = rng.uniform(-std::numbers::pi / 4.0, std::numbers::pi / 4.0);
      const Vec3 goal(s.goal.x(), s.goal.y(), obj.z());
      wps.push_back({obj + Vec3(0.0, 0.0, 0.1), yaw, 0.0});
      wps.push_back({obj, yaw, 1.0});
      wps.push_back({obj + Vec3(0.0, 0.0, 0.13), yaw, 1.0});
      wps.push_back({goal + Vec3(0.0, 0.0, 0.13), yaw, 1.0});
      wps.push_back({goal + Vec3(0.0, 0.0, 0.02), yaw, 0.0});
      wps.push_back({goal + Vec3(0.0, 0.0, 0.1), yaw, 0.0});
      break;
    }
    case TaskKind::PushTVia: {
      const double theta = push_angle(s);
      const Vec3 u(std::cos(theta), std::sin(theta), 0.0);
      const double r = s.target().radius + kEeRadius;
      const double yaw = theta - std::numbers::pi / 2.0;
      const double low = kTableZ + 0.02;
      const Vec3 behind = obj - (r + 0.03) * u;
      const Vec3 finish = s.goal - r * u;
      wps.push_back({Vec3(behind.x(), behind.y(), 0.1), yaw, 0.0});
      wps.push_back({Vec3(behind.x(), behind.y(), low), yaw, 0.0});
      wps.push_back({Vec3(finish.x(), finish.y(), low), yaw, 0.0});
      wps.push_back({Vec3(finish.x(), finish.y(), 0.1), yaw, 0.0});
      break;
    }
  }
  return wps;
}

Trajectory time_parameterize(const std::vector<Waypoint>& wps, int n) {
  const int segments = static_cast<int>(wps.size()) - 1;
  const int intervals = n - 1;
  if (intervals < 2 * segments) {
    throw Error("horizon too short for the scripted waypoints");
  }
  std::vector<double> length(static_cast<std::size_t>(segments));
  double total = 0.0;
  for (int k = 0; k < segments; ++k) {
    const double dl = (wps[k + 1].p - wps[k].p).norm();
    const double dyaw = std::abs(wps[k + 1].yaw - wps[k].yaw) * 0.05;
    length[static_cast<std::size_t>(k)] = dl + dyaw + 0.01;
    total += length[static_cast<std::size_t>(k)];
  }
  std::vector<int> steps(static_cast<std::size_t>(segments));
  int assigned = 0;
  for (int k = 0; k < segments; ++k) {
    const int d = std::max(2, static_cast<int>(std::lround(intervals * length[k] / total)));
    steps[static_cast<std::size_t>(k)] = d;
    assigned += d;
  }
  while (assigned != intervals) {
    const auto longest = std::max_element(steps.begin(), steps.end());
    if (assigned > intervals) {
      --*longest;
      --assigned;
    } else {
      ++*longest;
      ++assigned;
    }
  }

  Trajectory actions;
  actions.push_back(Action::at(wps[0].p, wps[0].yaw, wps[0].gripper));
  for (int k = 0; k < segments; ++k) {
    const Waypoint& a = wps[static_cast<std::size_t>(k)];
    const Waypoint& b = wps[static_cast<std::size_t>(k + 1)];
    const int d = steps[static_cast<std::size_t>(k)];
    for (int tau = 1; tau <= d; ++tau) {
      const double s = trapezoid(static_cast<double>(tau) / d);
      const Vec3 p = tau == d ? b.p : Vec3(a.p + (b.p - a.p) * s);
      const double yaw = a.yaw + (b.yaw - a.yaw) * s;
      actions.push_back(Action::at(p, yaw, tau == d ? b.gripper : a.gripper));
    }
  }
  return actions;
}

}  // namespace

std::vector<WorldState> replay(const Task& task, std::uint64_t seed, const Trajectory& actions) {
  std::vector<WorldState> states;
  WorldState s = task.reset(seed);
  for (const Action& a : actions) {
    s = step(s, a);
    states.push_back(s);
  }
  return states;
}

Demonstration expert_demo(const Task& task, std::uint64_t seed) {
  Rng rng(seed);
  const WorldState initial = task.reset(rng);
  const auto wps = script(task, initial, rng);

  Demonstration demo;
  demo.task = task.name;
  demo.seed = seed;
  demo.episode_id = task.name + "-" + std::to_string(seed);
  demo.actions = time_parameterize(wps, task.horizon.n);

  WorldState s = initial;
  for (const Action& a : demo.actions) {
    s = step(s, a);
    demo.observations.push_back(observe(s));
  }
  if (!task.success(s)) {
    throw Error("scripted expert failed " + task.name + " for seed " + std::to_string(seed));
  }
  return demo;
}

// ---------------------------------------------------------------------------

ReferringPoint gen_via_point(const WorldState& state, double sigma, Rng& rng) {
  Vec3 centroid = 0.5 * (state.initial_ee + state.target().position);
  centroid.z() = kTableZ + 0.1;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Vec3 p = centroid + sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    if (state.workspace.contains(p)) {
      return ReferringPoint{p};
    }
  }
  throw Error("via-point sampling left the workspace 100 times in a row");
}

std::vector<Vec3> ood_offsets(const Vec3& p_e, const Vec3& p_o, const std::vector<double>& lambdas) {
  const Vec3 delta = p_o - p_e;
  const double planar = delta.head<2>().norm();
  if (planar == 0.0) {
    throw Error("OOD direction undefined: end effector and object share a planar location");
  }
  const Vec3 mid = 0.5 * (p_e + p_o);
  const Vec3 perp(-delta.y() / planar, delta.x() / planar, 0.0);
  std::vector<Vec3> out;
  out.reserve(lambdas.size());
  for (double lambda : lambdas) {
    out.push_back(mid + lambda * perp);
  }
  return out;
}

std::vector<ReferringPoint> gen_ood_points(const WorldState& state,
                                           const std::vector<double>& lambdas) {
  std::vector<ReferringPoint> out;
  for (const Vec3& p : ood_offsets(state.ee.trans, state.target().position, lambdas)) {
    if (state.workspace.contains(p)) {
      out.push_back(ReferringPoint{p});
    }
  }
  return out;
}

ReferringPoint gen_infeasible_point(const WorldState& state, InfeasibleKind kind, Rng& rng,
                                    double margin) {
  if (kind == InfeasibleKind::OutOfReach) {
    const double azimuth = rng.uniform(0.0, std::numbers::pi);
    const double elevation = rng.uniform(0.0, std::numbers::pi / 4.0);
    const Vec3 dir(std::cos(elevation) * std::cos(azimuth),
                   std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    return ReferringPoint{state.workspace.base + 1.5 * state.workspace.reach * dir};
  }
  if (state.obstacles.empty()) {
    throw Error("blocked referring point requested but the scene has no obstacles");
  }
  const Box& box =
      state.obstacles[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(state.obstacles.size()) - 1))];
  Vec3 p;
  for (int d = 0; d < 3; ++d) {
    const double half = 0.5 * (box.hi[d] - box.lo[d]);
    const double inset = std::min(margin, 0.45 * half);
    p[d] = rng.uniform(box.lo[d] + inset, box.hi[d] - inset);
  }
  return ReferringPoint{p};
}

}  // namespace refsteer
