#include "refsteer/runtime.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace refsteer {

namespace {

std::uint64_t sampler_seed(std::uint64_t seed) {
  return seed * 6364136223846793005ULL + 1442695040888963407ULL;
}

std::uint64_t referring_seed(std::uint64_t seed) {
  return seed ^ 0x9E3779B97F4A7C15ULL;
}

}  // namespace

Engine::Engine(const Policy& policy, const Task& task, std::uint64_t seed, EngineOptions options)
    : policy_(policy), task_(task), options_(options) {
  if (!(policy.horizon() == task.horizon)) {
    throw Error("policy horizon (N1=" + std::to_string(policy.horizon().n1) +
                ", N2=" + std::to_string(policy.horizon().n2) + ") does not match task " +
                task.name + " (N1=" + std::to_string(task.horizon.n1) +
                ", N2=" + std::to_string(task.horizon.n2) + ")");
  }
  if (policy.obs_dim() != kObsDim) {
    throw Error("policy observation size " + std::to_string(policy.obs_dim()) +
                " does not match the simulator's " + std::to_string(kObsDim));
  }
  reset(seed);
}

void Engine::reset(std::uint64_t seed) {
  seed_ = seed;
  rng_ = Rng(sampler_seed(seed));
  world_ = task_.reset(seed);
  history_ = {world_.ee};
  anchors_.clear();
  executed_ = {world_.ee};
  referring_.reset();
  steps_since_prediction_ = 0;
  done_ = false;
  success_ = false;
  resets_ = 0;
  log_.clear();
}

int Engine::predict_slot(const ReferringPoint& p) {
  const SlotBuffer buffer = build_slot_buffer(history_, policy_.horizon().n1);
  ActiveReferring ref;
  ref.point = p;
  ref.prediction = policy_.predict_position(buffer, p, observe(world_));
  ref.k = ref.prediction.k;
  if (ref.k <= i()) {
    std::ostringstream msg;
    msg << "predicted slot " << ref.k << " lies in the anchor history (i=" << i()
        << "); remapped to " << i() + 1;
    log_.push_back(msg.str());
    ref.k = i() + 1;
    ref.remapped = true;
  }
  referring_ = ref;
  steps_since_prediction_ = 0;
  return ref.k;
}

int Engine::set_referring(const ReferringPoint& p) {
  if (done_) {
    throw Error("episode is finished; reset before assigning a referring point");
  }
  if (!p.p.allFinite()) {
    throw Error("referring point must be finite");
  }
  if (referring_ && referring_->point.p == p.p) {
    return referring_->k;
  }
  if (referring_ && i() > 1) {
    history_ = {world_.ee};
    ++resets_;
    log_.push_back("referring point changed; anchor history reset");
  }
  return predict_slot(p);
}

void Engine::clear_referring() {
  referring_.reset();
}

void Engine::execute(const Action& a) {
  world_ = step(world_, a);
  executed_.push_back(world_.ee);
  if (task_.success(world_)) {
    success_ = true;
  }
  if (on_action) {
    on_action(*this, executed_.back());
  }
}

void Engine::update_done() {
  const bool pending = referring_ && referring_->k > i();
  done_ = (success_ && !pending) || i() >= policy_.horizon().n1;
}

std::vector<Action> Engine::step_once() {
  if (done_) {
    throw Error("episode is finished");
  }
  const int n1 = policy_.horizon().n1;
  if (referring_ && options_.tp_repredict_every > 0 && steps_since_prediction_ > 0 &&
      steps_since_prediction_ % options_.tp_repredict_every == 0) {
    predict_slot(referring_->point);
  }

  const int cur = i();
  Eigen::VectorXd obs = observe(world_);
  const bool inject = referring_ && referring_->k >= cur + 1;
  anchors_ = policy_.sample_anchors(obs, history_,
                                    inject ? std::optional<ReferringPoint>(referring_->point)
                                           : std::nullopt,
                                    inject ? referring_->k : 0, rng_);
  const Action a_i = anchors_[static_cast<std::size_t>(cur - 1)];
  const Action a_next = anchors_[static_cast<std::size_t>(cur)];

  std::vector<Action> planned;
  if (cur <= n1 - 2) {
    obs = observe(world_);
    planned = policy_.sample_interior(obs, a_i, a_next, cur, rng_);
  }
  planned.push_back(a_next);
  for (const Action& a : planned) {
    execute(a);
  }
  history_.push_back(a_next);
  ++steps_since_prediction_;
  update_done();
  return planned;
}

void Engine::run_to_end() {
  while (!done_) {
    step_once();
  }
}

RolloutRecord Engine::record(const std::string& method) const {
  RolloutRecord r;
  r.task = task_.name;
  r.method = method;
  r.seed = seed_;
  if (referring_) {
    r.referring = referring_->point.p;
    r.k = referring_->k;
  }
  r.trajectory = executed_;
  r.anchors = anchors_;
  r.success = success_;
  return r;
}

// ---------------------------------------------------------------------------

ReferMode parse_refer_mode(const std::string& name) {
  if (name == "none") return ReferMode::None;
  if (name == "via") return ReferMode::Via;
  if (name == "ood") return ReferMode::Ood;
  if (name == "infeasible") return ReferMode::Infeasible;
  if (name == "fixed") return ReferMode::Fixed;
  throw Error("unknown refer mode: " + name);
}

std::string to_string(ReferMode mode) {
  switch (mode) {
    case ReferMode::None:
      return "none";
    case ReferMode::Via:
      return "via";
    case ReferMode::Ood:
      return "ood";
    case ReferMode::Infeasible:
      return "infeasible";
    case ReferMode::Fixed:
      return "fixed";
  }
  return "unknown";
}

std::optional<Vec3> referring_for_episode(const Task& task, std::uint64_t seed, const RolloutSpec& spec) {
  const WorldState state = task.reset(seed);
  Rng rng(referring_seed(seed));
  switch (spec.mode) {
    case ReferMode::None:
      return std::nullopt;
    case ReferMode::Via:
      return gen_via_point(state, spec.via_sigma, rng).p;
    case ReferMode::Ood: {
      const auto points = gen_ood_points(state);
      if (points.empty()) {
        throw Error("no OOD point of episode " + std::to_string(seed) + " lies in the workspace");
      }
      return points[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(points.size()) - 1))].p;
    }
    case ReferMode::Infeasible:
      return gen_infeasible_point(state, spec.infeasible, rng).p;
    case ReferMode::Fixed:
      if (!spec.fixed) {
        throw Error("fixed refer mode needs a referring point");
      }
      return *spec.fixed;
  }
  return std::nullopt;
}

RolloutRecord run_baseline_episode(const Policy& policy, const Task& task, std::uint64_t seed,
                                   const ReferringPoint& p) {
  if (!(policy.horizon() == task.horizon)) {
    throw Error("policy horizon does not match task " + task.name);
  }
  Rng rng(sampler_seed(seed));
  WorldState world = task.reset(seed);
  const Trajectory plan = policy.sample_baseline(observe(world), p, rng);
  RolloutRecord r;
  r.task = task.name;
  r.method = "baseline";
  r.seed = seed;
  r.referring = p.p;
  r.trajectory.push_back(world.ee);
  for (const Action& a : plan) {
    world = step(world, a);
    r.trajectory.push_back(world.ee);
    r.success = r.success || task.success(world);
  }
  return r;
}

RolloutRecord run_episode(const Policy& policy, const Task& task, std::uint64_t seed,
                          const RolloutSpec& spec) {
  const auto ref = referring_for_episode(task, seed, spec);
  if (spec.method == "baseline") {
    if (!ref) {
      throw Error("the concat baseline needs a referring point");
    }
    return run_baseline_episode(policy, task, seed, ReferringPoint{*ref});
  }
  if (spec.method != "rev") {
    throw Error("unknown method: " + spec.method);
  }
  Engine engine(policy, task, seed, spec.engine);
  if (ref) {
    engine.set_referring(ReferringPoint{*ref});
  }
  engine.run_to_end();
  return engine.record(spec.method);
}

std::vector<RolloutRecord> run_episodes(const Policy& policy, const Task& task,
                                        const std::vector<std::uint64_t>& seeds,
                                        const RolloutSpec& spec, int jobs) {
  std::vector<RolloutRecord> out(seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t n = next.fetch_add(1);
      if (n >= seeds.size()) {
        return;
      }
      try {
        out[n] = run_episode(policy, task, seeds[n], spec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
        next = seeds.size();
        return;
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  return out;
}

}  // namespace refsteer
