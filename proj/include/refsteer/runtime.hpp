#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refsteer/env.hpp"
#include "refsteer/metrics.hpp"
#include "refsteer/policy.hpp"

namespace refsteer {

struct EngineOptions {
  /// 0 predicts the slot once per referring point; n > 0 re-predicts every
  /// n steps (ablation only).
  int tp_repredict_every = 0;
};

struct ActiveReferring {
  ReferringPoint point;
  int k = 0;
  TpPrediction prediction;
  bool remapped = false;
};

/// Closed-loop GDH/LDH rollout over one environment instance. Single owner;
/// referring commands are applied between steps.
class Engine {
 public:
  using ActionCallback = std::function<void(const Engine&, const Action&)>;

  /// Throws if the policy was trained for a different horizon or observation size.
  Engine(const Policy& policy, const Task& task, std::uint64_t seed, EngineOptions options = {});

  /// Fresh episode: history = [current pose], i = 1.
  void reset(std::uint64_t seed);

  /// Assigns (or re-assigns) the referring point and returns its slot k.
  /// A different point mid-rollout resets the anchor history first; the
  /// same point again is a no-op.
  int set_referring(const ReferringPoint& p);
  void clear_referring();

  /// One GDH call, the LDH interior of gap i (if any), then anchor i + 1.
  /// Returns the executed actions.
  std::vector<Action> step_once();
  void run_to_end();

  int i() const { return static_cast<int>(history_.size()); }
  const AnchorSequence& history() const { return history_; }
  const AnchorSequence& anchors() const { return anchors_; }
  /// Executed end-effector poses, starting with the initial pose.
  const Trajectory& executed() const { return executed_; }
  const WorldState& world() const { return world_; }
  const std::optional<ActiveReferring>& referring() const { return referring_; }
  bool done() const { return done_; }
  bool success() const { return success_; }
  int history_resets() const { return resets_; }
  std::uint64_t seed() const { return seed_; }
  const Task& task() const { return task_; }
  const Policy& policy() const { return policy_; }
  const std::vector<std::string>& log() const { return log_; }

  RolloutRecord record(const std::string& method = "rev") const;

  ActionCallback on_action;

 private:
  void execute(const Action& a);
  int predict_slot(const ReferringPoint& p);
  void update_done();

  const Policy& policy_;
  Task task_;
  EngineOptions options_;
  std::uint64_t seed_ = 0;
  Rng rng_;
  WorldState world_;
  AnchorSequence history_;
  AnchorSequence anchors_;
  Trajectory executed_;
  std::optional<ActiveReferring> referring_;
  int steps_since_prediction_ = 0;
  bool done_ = false;
  bool success_ = false;
  int resets_ = 0;
  std::vector<std::string> log_;
};

enum class ReferMode { None, Via, Ood, Infeasible, Fixed };

ReferMode parse_refer_mode(const std::string& name);
std::string to_string(ReferMode mode);

struct RolloutSpec {
  ReferMode mode = ReferMode::Via;
  std::optional<Vec3> fixed;
  InfeasibleKind infeasible = InfeasibleKind::OutOfReach;
  double via_sigma = 0.05;
  std::string method = "rev";  // "rev" or "baseline"
  EngineOptions engine;
};

/// The referring point an episode with this seed receives (none for ReferMode::None).
std::optional<Vec3> referring_for_episode(const Task& task, std::uint64_t seed, const RolloutSpec& spec);

RolloutRecord run_episode(const Policy& policy, const Task& task, std::uint64_t seed,
                          const RolloutSpec& spec);

/// Runs episodes on `jobs` worker threads; output order follows `seeds`.
std::vector<RolloutRecord> run_episodes(const Policy& policy, const Task& task,
                                        const std::vector<std::uint64_t>& seeds,
                                        const RolloutSpec& spec, int jobs = 1);

/// Open-loop baseline: one full-horizon sample conditioned on [obs; P].
RolloutRecord run_baseline_episode(const Policy& policy, const Task& task, std::uint64_t seed,
                                   const ReferringPoint& p);

}  // namespace refsteer
