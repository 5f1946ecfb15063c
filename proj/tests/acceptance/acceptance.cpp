// Acceptance suite: one PASS/FAIL line per criterion.
//
//   refsteer_acceptance [--ckpt DIR] [--save-ckpt DIR] [--only SUBSTRING]
//
// --ckpt skips training and evaluates an existing reach-via checkpoint.

#include <CLI11.hpp>

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <numbers>
#include <sstream>

#include "refsteer/augment.hpp"
#include "refsteer/core.hpp"
#include "refsteer/diffusion.hpp"
#include "refsteer/env.hpp"
#include "refsteer/heads.hpp"
#include "refsteer/metrics.hpp"
#include "refsteer/policy.hpp"
#include "refsteer/runtime.hpp"
#include "refsteer/temporal.hpp"
#include "refsteer/train.hpp"

using namespace refsteer;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared reach-via policy for the closed-loop criteria.

constexpr std::uint64_t kTrainSeedBase = 1000;
constexpr std::uint64_t kHeldOutSeedBase = 900000;
constexpr std::uint64_t kRolloutSeedBase = 500000;

std::vector<Demonstration> scripted_demos(const Task& task, int count, std::uint64_t base) {
  std::vector<Demonstration> demos;
  for (std::uint64_t s = base; static_cast<int>(demos.size()) < count; ++s) {
    try {
      demos.push_back(expert_demo(task, s));
    } catch (const Error&) {
      if (s > base + 100 * static_cast<std::uint64_t>(count)) {
        throw;
      }
    }
  }
  return demos;
}

TrainConfig reach_config() {
  TrainConfig c;
  c.n1 = 6;
  c.n2 = 6;
  c.lr = 1e-3;
  c.warmup = 200;
  c.epochs = 3000;  // 50 demos at batch 128: one iteration per epoch
  c.batch = 128;
  c.seed = 7;
  return c;
}

struct Shared {
  std::string ckpt;
  std::string save_ckpt;
  std::unique_ptr<Policy> policy;
  double train_seconds = 0.0;
};

Policy& reach_policy(Shared& shared) {
  if (shared.policy) {
    return *shared.policy;
  }
  if (!shared.ckpt.empty()) {
    shared.policy = Policy::load(shared.ckpt);
    return *shared.policy;
  }
  const Task task = make_task("reach-via");
  const auto demos = scripted_demos(task, 50, kTrainSeedBase);
  const TrainConfig config = reach_config();
  PolicyStats stats{ActionNormalizer::fit(demos), ObsNormalizer::fit(demos)};
  shared.policy = std::make_unique<Policy>(config, stats, task.name);
  TrainOptions opts;
  Trainer trainer(*shared.policy, demos, opts);
  Rng rng(config.seed + 1);
  const auto t0 = Clock::now();
  trainer.fit(rng);
  shared.train_seconds = seconds_since(t0);
  std::cout << "  (trained reach-via policy on 50 demos in " << fmt(shared.train_seconds, 3)
            << " s)\n";
  if (!shared.save_ckpt.empty()) {
    shared.policy->save(shared.save_ckpt);
  }
  return *shared.policy;
}

// ---------------------------------------------------------------------------

Outcome horizon_table(Shared&) {
  struct Row {
    int n, n1, n2;
  };
  const Row rows[] = {{54, 6, 12},  {70, 6, 16},  {11, 3, 8},   {20, 4, 8},  {70, 6, 16},
                      {11, 3, 8},   {158, 14, 12}, {164, 20, 8}, {200, 24, 8}, {65, 9, 8},
                      {74, 10, 8},  {74, 10, 8},  {164, 20, 8}};
  int ok = 0;
  for (const auto& r : rows) {
    const HorizonConfig h = make_horizon(r.n1, r.n2);
    ok += (h.n == r.n && h.n1 == r.n1 && h.n2 == r.n2) ? 1 : 0;
  }
  return {ok == 13, std::to_string(ok) + "/13 rows exact"};
}

Outcome mask_conformance(Shared&) {
  Rng rng(11);
  long checked = 0;
  long mismatches = 0;
  for (int n1 = 3; n1 <= 12; ++n1) {
    AnchorSequence history;
    for (int r = 0; r < n1; ++r) {
      history.push_back(Action::at(Vec3(rng.uniform(), rng.uniform(), rng.uniform()),
                                   rng.uniform(-1, 1), rng.uniform() < 0.5 ? 0.0 : 1.0));
    }
    const ReferringAction ref =
        ReferringAction::from_point({Vec3(rng.uniform(), rng.uniform(), rng.uniform())});
    for (int i = 1; i <= n1; ++i) {
      // M[j][d] = 1 iff j < i.
      const SteeringMask m = mask_gdh(i, n1, history);
      for (int j = 1; j <= n1; ++j) {
        for (int d = 0; d < kActionDim; ++d) {
          const bool expect = j < i;
          ++checked;
          mismatches += (m.m(j - 1, d) != expect) ? 1 : 0;
          if (expect) {
            mismatches += (m.known(j - 1, d) != flatten(history[static_cast<std::size_t>(j - 1)])[d]) ? 1 : 0;
          }
        }
      }
      for (int k = i; k <= n1; ++k) {
        // M'[j][d] = M[j][d], plus 1 on row k translation.
        const SteeringMask mr = mask_gdh_referring(i, k, n1, history, ref);
        for (int j = 1; j <= n1; ++j) {
          for (int d = 0; d < kActionDim; ++d) {
            const bool expect = j < i || (j == k && d < kTransDims);
            ++checked;
            mismatches += (mr.m(j - 1, d) != expect) ? 1 : 0;
            if (j == k && d < kTransDims && j >= i) {
              mismatches += (mr.known(j - 1, d) != ref.action.trans[d]) ? 1 : 0;
            }
          }
        }
      }
    }
  }
  for (int n2 = 1; n2 <= 24; ++n2) {
    const Action a = Action::at(Vec3(0.1, 0.2, 0.3), 0.4, 1.0);
    const Action b = Action::at(Vec3(0.5, 0.6, 0.7), -0.2, 0.0);
    const SteeringMask l = mask_ldh(n2, a, b);
    for (int r = 0; r < n2 + 2; ++r) {
      for (int d = 0; d < kActionDim; ++d) {
        const bool expect = r == 0 || r == n2 + 1;
        ++checked;
        mismatches += (l.m(r, d) != expect) ? 1 : 0;
      }
    }
    mismatches += (l.known.row(0).transpose() != flatten(a)) ? 1 : 0;
    mismatches += (l.known.row(n2 + 1).transpose() != flatten(b)) ? 1 : 0;
  }
  return {mismatches == 0, std::to_string(checked) + " entries, " + std::to_string(mismatches) +
                               " mismatches"};
}

/// Deterministic nonlinear predictor; exactness must not depend on the model.
class WigglyPredictor final : public NoisePredictor {
 public:
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x, int t, const Eigen::VectorXd& cond) const override {
    Eigen::MatrixXd out = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        out(r, c) = std::sin(1.7 * x(r, c) + 0.01 * t + cond[0] * static_cast<double>(r - c));
      }
    }
    return out;
  }
};

Outcome steering_exactness(Shared&) {
  const auto t0 = Clock::now();
  Rng rng(12);
  const WigglyPredictor model;
  const DiffusionSchedule schedule = make_schedule(100, ScheduleKind::Linear);
  int exact = 0;
  std::size_t pinned_total = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = rng.uniform_int(2, 24);
    SteeringMask mask(rows, kActionDim);
    const double density = rng.uniform(0.0, 1.0);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < kActionDim; ++c) {
        if (rng.uniform() < density) {
          mask.pin(r, c, rng.normal(0.0, 3.0));
        }
      }
    }
    Eigen::VectorXd cond(1);
    cond[0] = rng.normal();
    Rng chain(rng.fork());
    const Eigen::MatrixXd z = steered_sample(model, cond, mask, schedule, chain);
    bool ok = true;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < kActionDim; ++c) {
        if (mask.m(r, c)) {
          const double a = z(r, c);
          const double b = mask.known(r, c);
          ok = ok && std::memcmp(&a, &b, sizeof(double)) == 0;
        }
      }
    }
    pinned_total += mask.pinned_count();
    exact += ok ? 1 : 0;
  }
  return {exact == 1000, std::to_string(exact) + "/1000 samples bit-exact over " +
                             std::to_string(pinned_total) + " pinned entries (" +
                             fmt(seconds_since(t0), 3) + " s)"};
}

Outcome repr_reproduction(Shared& shared) {
  const auto t0 = Clock::now();
  const Policy& policy = reach_policy(shared);
  const Task task = make_task("reach-via");
  std::vector<std::uint64_t> seeds;
  for (int e = 0; e < 100; ++e) {
    seeds.push_back(kRolloutSeedBase + static_cast<std::uint64_t>(e));
  }
  RolloutSpec spec;
  spec.mode = ReferMode::Via;
  const auto records = run_episodes(policy, task, seeds, spec);
  const double repr = repr_metric(records, 0.05);
  const double sur = sur_metric(records, 0.05);
  const double elapsed = seconds_since(t0);
  const bool pass = repr == 1.0 && sur >= 0.70 && elapsed <= 1800.0;

  // Informational: the concat baseline on the same points.
  spec.method = "baseline";
  const auto base = run_episodes(policy, task, seeds, spec);
  std::ostringstream d;
  d << "RePR " << format_percent(repr) << ", SuR " << format_percent(sur)
    << " over 100 via rollouts (eps 0.05 m, " << fmt(elapsed, 3)
    << " s incl. training); baseline RePR " << format_percent(repr_metric(base, 0.05));
  return {pass, d.str()};
}

Outcome infeasible_points(Shared& shared) {
  const Policy& policy = reach_policy(shared);
  const Task task = make_task("reach-via");
  std::vector<std::uint64_t> seeds;
  for (int e = 0; e < 50; ++e) {
    seeds.push_back(kRolloutSeedBase + 1000 + static_cast<std::uint64_t>(e));
  }
  RolloutSpec spec;
  spec.mode = ReferMode::Infeasible;
  spec.infeasible = InfeasibleKind::OutOfReach;
  const auto records = run_episodes(policy, task, seeds, spec);
  double closest = std::numeric_limits<double>::infinity();
  for (const auto& r : records) {
    closest = std::min(closest, record_distance(r));
  }
  const double repr = repr_metric(records, 0.05);
  return {repr == 0.0, "RePR " + format_percent(repr) + " over 50 out-of-reach rollouts (closest " +
                           fmt(closest, 3) + " m)"};
}

Outcome ood_formula(Shared&) {
  Rng rng(13);
  const std::vector<double> lambdas{0.1, 0.2, 0.3, 0.4};
  double worst_equi = 0.0;
  double worst_construction = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 pe(rng.uniform(), rng.uniform(), rng.uniform(0.0, 0.5));
    const Vec3 po(rng.uniform(), rng.uniform(), rng.uniform(0.0, 0.5));
    const auto pts = ood_offsets(pe, po, lambdas);
    // Independent construction: rotate the planar direction by +90 degrees.
    const Vec3 pm = 0.5 * (pe + po);
    const Eigen::Vector2d v = (po - pe).head<2>();
    const Vec3 dperp = Vec3(-v.y(), v.x(), 0.0) / v.norm();
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      const Vec3& q = pts[l];
      worst_equi = std::max(worst_equi, std::abs((q - pe).norm() - (q - po).norm()));
      worst_construction = std::max(worst_construction, (q - (pm + lambdas[l] * dperp)).norm());
      // In the table plane, perpendicular to p_o - p_e, at distance lambda.
      worst_construction = std::max(worst_construction, std::abs(q.z() - pm.z()));
      worst_construction = std::max(worst_construction, std::abs((q - pm).dot(po - pe)));
      worst_construction = std::max(worst_construction, std::abs((q - pm).norm() - lambdas[l]));
    }
  }
  return {worst_equi <= 1e-9 && worst_construction <= 1e-9,
          "max equidistance error " + fmt(worst_equi, 3) + ", max construction error " +
              fmt(worst_construction, 3)};
}

Outcome spline_blend(Shared&) {
  Rng rng(14);
  const char* names[] = {"reach-via", "pick-place-via", "push-t-via"};
  std::vector<Demonstration> demos;
  for (const char* n : names) {
    const auto d = scripted_demos(make_task(n), 4, 77);
    demos.insert(demos.end(), d.begin(), d.end());
  }
  double worst_j = 0.0;
  double worst_edge = 0.0;
  double worst_profile = 0.0;
  int outside_exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Demonstration& demo = demos[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(demos.size()) - 1))];
    const HorizonConfig h = make_task(demo.task).horizon;
    const int window = rng.uniform_int(4, h.n2 + 1);
    const auto [lo, hi] = blendable_range(h.n, window);
    const int j = rng.uniform_int(lo, hi);
    Action perturbed = demo.actions[static_cast<std::size_t>(j - 1)];
    for (int d = 0; d < 3; ++d) {
      perturbed.trans[d] += rng.normal(0.0, 0.1);
    }
    const BlendResult res = blend_with_profile(demo, j, perturbed, window);
    const Trajectory& out = res.demo.actions;
    worst_j = std::max(worst_j, (out[static_cast<std::size_t>(j - 1)].trans - perturbed.trans).cwiseAbs().maxCoeff());
    // Position, velocity, acceleration and jerk of the displacement match
    // the unperturbed demo (zero displacement) at both window edges.
    for (int c = 0; c < 3; ++c) {
      for (int order = 0; order <= 3; ++order) {
        worst_edge = std::max(worst_edge, std::abs(res.profile.derivative(c, j - window, order)));
        worst_edge = std::max(worst_edge, std::abs(res.profile.derivative(c, j + window, order)));
      }
      // The applied displacement is the profile sampled at integer steps.
      for (int t = j - window; t <= j + window; ++t) {
        const double applied = out[static_cast<std::size_t>(t - 1)].trans[c] -
                               demo.actions[static_cast<std::size_t>(t - 1)].trans[c];
        worst_profile = std::max(worst_profile, std::abs(applied - res.profile.derivative(c, t, 0)));
      }
    }
    bool exact = true;
    for (int t = 1; t <= h.n; ++t) {
      if (t < j - window || t > j + window) {
        exact = exact && out[static_cast<std::size_t>(t - 1)] == demo.actions[static_cast<std::size_t>(t - 1)];
      }
    }
    outside_exact += exact ? 1 : 0;
  }
  const bool pass = worst_j <= 1e-9 && worst_edge <= 1e-6 && worst_profile <= 1e-9 &&
                    outside_exact == 1000;
  return {pass, "max |x_j - P| " + fmt(worst_j, 3) + ", max edge derivative residual " +
                    fmt(worst_edge, 3) + ", profile/applied gap " + fmt(worst_profile, 3) + ", " +
                    std::to_string(outside_exact) + "/1000 bit-exact outside"};
}

double tp_accuracy(const Policy& policy, const std::vector<TpClassifier::Example>& examples) {
  int hits = 0;
  for (const auto& ex : examples) {
    hits += policy.predict_position(ex.buffer, ReferringPoint{ex.point}, ex.obs).k == ex.label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

Outcome tp_classifier(Shared& shared) {
  const Policy& policy = reach_policy(shared);
  const auto t0 = Clock::now();
  const Task task = make_task("reach-via");
  const auto held_out = scripted_demos(task, 50, kHeldOutSeedBase);
  const TrainConfig& c = policy.config();
  Rng rng(15);
  const auto examples =
      make_tp_examples(held_out, policy.horizon(), c.sigma_aug, c.effective_blend_window(), 10000, rng);
  const double acc = tp_accuracy(policy, examples);
  // Informational: the same labeler with a tenth of the perturbation scale.
  const auto small = make_tp_examples(held_out, policy.horizon(), 0.1 * c.sigma_aug,
                                      c.effective_blend_window(), 2000, rng);
  std::ostringstream d;
  d << format_percent(acc) << " on 10000 held-out pairs (sigma " << c.sigma_aug << " m, "
    << fmt(seconds_since(t0), 3) << " s); " << format_percent(tp_accuracy(policy, small))
    << " at sigma " << 0.1 * c.sigma_aug << " m";
  return {acc >= 0.90, d.str()};
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

Outcome loss_gradients(Shared&) {
  Rng rng(16);
  double worst = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    // Cross-entropy on logits.
    const int k = rng.uniform_int(2, 12);
    Eigen::VectorXd logits(k);
    for (int n = 0; n < k; ++n) logits[n] = rng.normal(0.0, 2.0);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(k);
    y[rng.uniform_int(0, k - 1)] = 1.0;
    Eigen::VectorXd g;
    loss_cce_logits(logits, y, &g);
    for (int n = 0; n < k; ++n) {
      Eigen::VectorXd p = logits, m = logits;
      p[n] += h;
      m[n] -= h;
      worst = std::max(worst, rel_error(g[n], (loss_cce_logits(p, y) - loss_cce_logits(m, y)) / (2 * h)));
    }
    // Cross-entropy on probabilities, along directions that stay on the simplex.
    Eigen::VectorXd probs = (logits.array() - logits.maxCoeff()).exp();
    probs /= probs.sum();
    const Eigen::VectorXd gp = loss_cce_grad(probs, y);
    for (int n = 0; n + 1 < k; ++n) {
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(k);
      dir[n] = 1.0;
      dir[k - 1] = -1.0;
      const double step = 1e-3 * std::min(probs[n], probs[k - 1]);
      const double fd = (loss_cce(probs + step * dir, y) - loss_cce(probs - step * dir, y)) / (2 * step);
      worst = std::max(worst, rel_error(gp.dot(dir), fd));
    }
    // Two-term MSE.
    const int ra = rng.uniform_int(2, 6), rs = rng.uniform_int(1, 8);
    const double gamma = rng.uniform(0.1, 2.0);
    const Eigen::MatrixXd ap = Eigen::MatrixXd::Random(ra, kActionDim);
    const Eigen::MatrixXd at = Eigen::MatrixXd::Random(ra, kActionDim);
    const Eigen::MatrixXd sp = Eigen::MatrixXd::Random(rs, kActionDim);
    const Eigen::MatrixXd st = Eigen::MatrixXd::Random(rs, kActionDim);
    MseGrad grad;
    loss_mse(ap, at, sp, st, gamma, &grad);
    for (int n = 0; n < 4; ++n) {
      const int r = rng.uniform_int(0, ra - 1), c = rng.uniform_int(0, kActionDim - 1);
      Eigen::MatrixXd p = ap, m = ap;
      p(r, c) += h;
      m(r, c) -= h;
      worst = std::max(worst, rel_error(grad.anchors(r, c),
                                        (loss_mse(p, at, sp, st, gamma) - loss_mse(m, at, sp, st, gamma)) / (2 * h)));
      const int r2 = rng.uniform_int(0, rs - 1);
      Eigen::MatrixXd p2 = sp, m2 = sp;
      p2(r2, c) += h;
      m2(r2, c) -= h;
      worst = std::max(worst, rel_error(grad.segment(r2, c),
                                        (loss_mse(ap, at, p2, st, gamma) - loss_mse(ap, at, m2, st, gamma)) / (2 * h)));
    }
  }
  return {worst <= 1e-4, "max relative error " + fmt(worst, 3) + " over 100 instances"};
}

Outcome metric_kernels(Shared&) {
  Rng rng(17);
  int violations = 0;
  for (int set = 0; set < 1000; ++set) {
    std::vector<RolloutRecord> records(static_cast<std::size_t>(rng.uniform_int(1, 12)));
    for (auto& r : records) {
      r.task = "reach-via";
      if (rng.uniform() < 0.9) {
        r.referring = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
      }
      const int len = rng.uniform_int(1, 10);
      for (int t = 0; t < len; ++t) {
        r.trajectory.push_back(Action::at(Vec3(rng.uniform(), rng.uniform(), rng.uniform())));
      }
      r.success = rng.uniform() < 0.5;
    }
    const double eps = rng.uniform(0.01, 0.5);
    violations += sur_metric(records, eps) > repr_metric(records, eps) ? 1 : 0;
  }
  const double lambda = 0.01;
  const double e0 = std::abs(smoothness_score(0.0, lambda) - 1.0);
  const double e1 = std::abs(smoothness_score(lambda, lambda) - std::exp(-1.0));
  return {violations == 0 && e0 <= 1e-12 && e1 <= 1e-12,
          std::to_string(violations) + " sur > repr violations in 1000 sets; |S(0)-1| = " + fmt(e0, 3) +
              ", |S(lambda)-1/e| = " + fmt(e1, 3)};
}

Outcome closed_loop_invariants(Shared& shared) {
  const Policy& policy = reach_policy(shared);
  const Task task = make_task("reach-via");
  Rng rng(18);
  int ok_rollouts = 0;
  int changes_total = 0;
  std::string first_failure;
  for (int e = 0; e < 100; ++e) {
    Engine engine(policy, task, kRolloutSeedBase + 2000 + static_cast<std::uint64_t>(e));
    RolloutSpec via;
    engine.set_referring(ReferringPoint{*referring_for_episode(task, engine.seed(), via)});
    int changes = 0;
    bool ok = true;
    AnchorSequence previous = engine.history();
    int resets_before = engine.history_resets();
    while (!engine.done()) {
      if (engine.i() >= 2 && rng.uniform() < 0.3) {
        const Vec3 p = engine.world().workspace.clamp(
            engine.referring()->point.p + Vec3(rng.normal(0, 0.05), rng.normal(0, 0.05), rng.normal(0, 0.02)));
        if (p != engine.referring()->point.p) {
          engine.set_referring(ReferringPoint{p});
          ++changes;
          ok = ok && engine.history_resets() == resets_before + 1 && engine.i() == 1 &&
               engine.history().front() == engine.world().ee;
          resets_before = engine.history_resets();
          previous = engine.history();
        }
        // Re-sending the same point changes nothing.
        engine.set_referring(engine.referring()->point);
        ok = ok && engine.history_resets() == resets_before;
      }
      engine.step_once();
      const AnchorSequence& now = engine.history();
      ok = ok && now.size() == previous.size() + 1 &&
           std::equal(previous.begin(), previous.end(), now.begin());
      previous = now;
    }
    ok = ok && engine.history_resets() == changes;
    changes_total += changes;
    if (ok) {
      ++ok_rollouts;
    } else if (first_failure.empty()) {
      first_failure = "; first failure at episode " + std::to_string(e);
    }
  }
  return {ok_rollouts == 100, std::to_string(ok_rollouts) + "/100 rollouts append-only with one reset per change (" +
                                  std::to_string(changes_total) + " changes)" + first_failure};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Shared shared;
  std::string only;
  app.add_option("--ckpt", shared.ckpt, "Use this reach-via checkpoint instead of training");
  app.add_option("--save-ckpt", shared.save_ckpt, "Save the freshly trained checkpoint here");
  app.add_option("--only", only, "Run criteria whose name contains this substring");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(Shared&)>>> criteria{
      {"horizon-table", horizon_table},
      {"mask-conformance", mask_conformance},
      {"steering-exactness", steering_exactness},
      {"repr-reproduction", repr_reproduction},
      {"infeasible-points", infeasible_points},
      {"ood-formula", ood_formula},
      {"spline-blend", spline_blend},
      {"tp-classifier", tp_classifier},
      {"loss-gradients", loss_gradients},
      {"metric-kernels", metric_kernels},
      {"closed-loop-invariants", closed_loop_invariants},
  };

  int failed = 0;
  int run = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name.find(only) == std::string::npos) {
      continue;
    }
    ++run;
    Outcome o;
    try {
      o = fn(shared);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << run - failed << "/" << run << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
