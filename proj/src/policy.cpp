#include "refsteer/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <filesystem>

#include "refsteer/checkpoint.hpp"

namespace refsteer {

namespace {

HeadSpec head_spec(int rows, int obs_dim, int extra, const PolicyArchitecture& arch) {
  HeadSpec s;
  s.rows = rows;
  s.obs_dim = obs_dim;
  s.extra_dim = extra;
  s.encoder = arch.encoder;
  s.hidden = arch.hidden;
  s.time_embed_dim = arch.time_embed_dim;
  return s;
}

nlohmann::json arch_to_json(const PolicyArchitecture& a) {
  return {{"encoder", a.encoder},
          {"hidden", a.hidden},
          {"time_embed_dim", a.time_embed_dim},
          {"tpp",
           {{"d_model", a.tpp.d_model},
            {"heads", a.tpp.heads},
            {"layers", a.tpp.layers},
            {"d_ff", a.tpp.d_ff}}}};
}

PolicyArchitecture arch_from_json(const nlohmann::json& j) {
  PolicyArchitecture a;
  a.encoder = j.at("encoder").get<std::vector<int>>();
  a.hidden = j.at("hidden").get<std::vector<int>>();
  a.time_embed_dim = j.at("time_embed_dim").get<int>();
  const auto& t = j.at("tpp");
  a.tpp.d_model = t.at("d_model").get<int>();
  a.tpp.heads = t.at("heads").get<int>();
  a.tpp.layers = t.at("layers").get<int>();
  a.tpp.d_ff = t.at("d_ff").get<int>();
  return a;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}

}  // namespace

Policy::Policy(const TrainConfig& config, const PolicyStats& stats, const std::string& task,
               const PolicyArchitecture& arch)
    : config_(config),
      horizon_(make_horizon(config.n1, config.n2)),
      schedule_(make_schedule(config.diffusion_steps, ScheduleKind::Linear)),
      stats_(stats),
      task_(task),
      arch_(arch) {
  config_.validate();
  const int obs_dim = stats.obs.dim();
  if (obs_dim < 1) {
    throw Error("policy needs fitted observation statistics");
  }
  Rng rng(config.seed);
  gdh_ = DiffusionHead(head_spec(horizon_.n1, obs_dim, 2 * horizon_.n1, arch), rng, "gdh");
  ldh_ = DiffusionHead(head_spec(horizon_.n2 + 2, obs_dim, horizon_.n1 - 2, arch), rng, "ldh");
  baseline_ = DiffusionHead(head_spec(horizon_.n, obs_dim, 3, arch), rng, "baseline");
  TpSpec tp = arch.tpp;
  tp.n1 = horizon_.n1;
  tp.obs_dim = obs_dim;
  arch_.tpp = tp;
  tpp_ = TpClassifier(tp, rng);
}

AnchorSequence Policy::sample_anchors(const Eigen::VectorXd& obs, const AnchorSequence& history,
                                      const std::optional<ReferringPoint>& ref, int ref_slot,
                                      Rng& rng) const {
  if (history.empty()) {
    throw Error("anchor generation needs at least the initial anchor");
  }
  const int i = static_cast<int>(history.size()) + 1;
  const SteeringMask mask =
      ref ? mask_gdh_referring(i, ref_slot, horizon_.n1, history, ReferringAction::from_point(*ref))
          : mask_gdh(i, horizon_.n1, history);
  const Eigen::MatrixXd z = gdh_.sample(stats_.obs.normalize(obs), gdh_mask_flags(mask),
                                        stats_.action.normalize(mask), schedule_, rng, sampler);
  return decode_actions(stats_.action.denormalize(z), mask);
}

std::vector<Action> Policy::sample_interior(const Eigen::VectorXd& obs, const Action& a_i,
                                            const Action& a_next, int i, Rng& rng) const {
  const SteeringMask mask = mask_ldh(horizon_.n2, a_i, a_next);
  const Eigen::MatrixXd z =
      ldh_.sample(stats_.obs.normalize(obs), ldh_step_onehot(i, horizon_.n1),
                  stats_.action.normalize(mask), schedule_, rng, sampler);
  std::vector<Action> all = decode_actions(stats_.action.denormalize(z), mask);
  return {all.begin() + 1, all.end() - 1};
}

Trajectory Policy::sample_baseline(const Eigen::VectorXd& obs, const ReferringPoint& p,
                                   Rng& rng) const {
  const SteeringMask mask(horizon_.n, kActionDim);
  const Eigen::MatrixXd z = baseline_.sample(stats_.obs.normalize(obs),
                                             stats_.action.normalize_point(p.p), mask, schedule_,
                                             rng, sampler);
  return decode_actions(stats_.action.denormalize(z), mask);
}

TpPrediction Policy::predict_position(const SlotBuffer& buffer, const ReferringPoint& p,
                                      const Eigen::VectorXd& obs) const {
  return tpp_.predict(buffer, p.p, obs, stats_);
}

nn::ParamList Policy::head_params() {
  nn::ParamList out;
  gdh_.collect(out);
  ldh_.collect(out);
  return out;
}

nn::ParamList Policy::tpp_params() {
  nn::ParamList out;
  tpp_.collect(out);
  return out;
}

nn::ParamList Policy::baseline_params() {
  nn::ParamList out;
  baseline_.collect(out);
  return out;
}

void Policy::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  auto& self = const_cast<Policy&>(*this);
  nn::ParamList gdh, ldh, base, tpp;
  self.gdh_.collect(gdh);
  self.ldh_.collect(ldh);
  self.baseline_.collect(base);
  self.tpp_.collect(tpp);

  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["task"] = task_;
  j["config"] = config_.to_json();
  j["horizon"] = {{"n1", horizon_.n1}, {"n2", horizon_.n2}, {"n", horizon_.n}};
  j["schedule"] = {{"kind", to_string(schedule_.kind)}, {"steps", schedule_.steps},
                   {"betas", schedule_.beta}};
  j["architecture"] = arch_to_json(arch_);
  j["sections"]["gdh"] = params_to_json(gdh);
  j["sections"]["ldh"] = params_to_json(ldh);
  j["sections"]["baseline"] = params_to_json(base);
  j["sections"]["tpp"] = params_to_json(tpp);
  j["sections"]["obs-encoder"] = {{"obs_dim", stats_.obs.dim()},
                                  {"obs_mean", to_std(stats_.obs.mean)},
                                  {"obs_scale", to_std(stats_.obs.scale)},
                                  {"action_lo", to_std(stats_.action.lo)},
                                  {"action_hi", to_std(stats_.action.hi)}};
  j["training"] = training_summary;
  write_json_file((std::filesystem::path(dir) / "checkpoint.json").string(), j);
}

std::unique_ptr<Policy> Policy::load(const std::string& dir) {
  const auto path = (std::filesystem::path(dir) / "checkpoint.json").string();
  const nlohmann::json j = read_json_file(path);
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
      throw Error("checkpoint schema version " + std::to_string(version) + " is not supported");
    }
    const TrainConfig config = TrainConfig::from_json(j.at("config"));
    const auto& enc = j.at("sections").at("obs-encoder");
    PolicyStats stats;
    stats.obs.mean = vector_from_json(enc.at("obs_mean"));
    stats.obs.scale = vector_from_json(enc.at("obs_scale"));
    const Eigen::VectorXd lo = vector_from_json(enc.at("action_lo"));
    const Eigen::VectorXd hi = vector_from_json(enc.at("action_hi"));
    if (lo.size() != kActionDim || hi.size() != kActionDim) {
      throw Error("checkpoint action normalizer has the wrong dimension");
    }
    stats.action.lo = lo;
    stats.action.hi = hi;

    auto policy = std::make_unique<Policy>(config, stats, j.at("task").get<std::string>(),
                                           arch_from_json(j.at("architecture")));
    const auto& sched = j.at("schedule");
    policy->schedule_ = schedule_from_betas(sched.at("betas").get<std::vector<double>>(),
                                            parse_schedule_kind(sched.at("kind").get<std::string>()));
    const auto& h = j.at("horizon");
    if (h.at("n").get<int>() != policy->horizon_.n) {
      throw Error("checkpoint horizon is inconsistent with its config");
    }
    const auto& sections = j.at("sections");
    nn::ParamList gdh, ldh, base, tpp;
    policy->gdh_.collect(gdh);
    policy->ldh_.collect(ldh);
    policy->baseline_.collect(base);
    policy->tpp_.collect(tpp);
    params_from_json(sections.at("gdh"), gdh);
    params_from_json(sections.at("ldh"), ldh);
    params_from_json(sections.at("baseline"), base);
    params_from_json(sections.at("tpp"), tpp);
    if (j.contains("training")) {
      policy->training_summary = j.at("training");
    }
    return policy;
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path + " is malformed: " + e.what());
  }
}

// ---------------------------------------------------------------------------

std::vector<TpClassifier::Example> make_tp_examples(const std::vector<Demonstration>& demos,
                                                    const HorizonConfig& horizon, double sigma,
                                                    int window, int count, Rng& rng) {
  if (demos.empty()) {
    throw Error("no demonstrations to label");
  }
  const auto idx = anchor_indices(horizon);
  std::vector<TpClassifier::Example> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const auto& demo =
        demos[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(demos.size()) - 1))];
    const AugmentedSample aug = sample_referring_augmentation(demo, horizon, sigma, window, rng);
    const int i = split_history(horizon.n1, rng);
    const AnchorSequence anchors = downsample_anchors(aug.demo, horizon).anchors;
    TpClassifier::Example ex;
    ex.buffer = build_slot_buffer(AnchorSequence(anchors.begin(), anchors.begin() + i), horizon.n1);
    ex.point = aug.ref_action.action.trans;
    ex.obs = demo.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(i - 1)] - 1)];
    ex.label = aug.k_label;
    out.push_back(std::move(ex));
  }
  return out;
}

Trainer::Trainer(Policy& policy, std::vector<Demonstration> demos, TrainOptions options)
    : policy_(policy), demos_(std::move(demos)), options_(std::move(options)) {
  if (demos_.empty()) {
    throw Error("training needs at least one demonstration");
  }
  for (const auto& d : demos_) {
    if (static_cast<int>(d.actions.size()) != policy_.horizon().n ||
        d.observations.size() != d.actions.size()) {
      throw Error("demonstration " + d.episode_id + " does not match the configured horizon N = " +
                  std::to_string(policy_.horizon().n));
    }
    if (d.observations.front().size() != policy_.obs_dim()) {
      throw Error("demonstration " + d.episode_id + " has the wrong observation dimension");
    }
  }
  const auto& c = policy_.config();
  const nn::AdamWConfig opt{c.betas[0], c.betas[1], c.eps, 1e-6};
  heads_opt_ = nn::AdamW(policy_.head_params(), opt);
  tpp_opt_ = nn::AdamW(policy_.tpp_params(), opt);
  baseline_opt_ = nn::AdamW(policy_.baseline_params(), opt);
}

long Trainer::iterations_per_epoch() const {
  const long b = policy_.config().batch;
  return (static_cast<long>(demos_.size()) + b - 1) / b;
}

StepStats Trainer::train_step(Rng& rng) {
  return step_impl(rng, options_.train_heads, options_.train_tpp);
}

StepStats Trainer::step_impl(Rng& rng, bool heads, bool tpp) {
  const auto& cfg = policy_.config();
  const HorizonConfig& h = policy_.horizon();
  const auto& sched = policy_.schedule();
  const auto& stats = policy_.stats();
  const auto idx = anchor_indices(h);
  const int window = cfg.effective_blend_window();
  const int b = cfg.batch;
  const int obs_dim = policy_.obs_dim();
  const bool base = heads && options_.train_baseline;

  DiffusionHead::Batch gb, lb, bb;
  gb.x0.resize(b, h.n1 * kActionDim);
  gb.pinned.resize(b, h.n1 * kActionDim);
  gb.obs.resize(b, obs_dim);
  gb.extra.resize(b, 2 * h.n1);
  lb.x0.resize(b, (h.n2 + 2) * kActionDim);
  lb.pinned.resize(b, (h.n2 + 2) * kActionDim);
  lb.obs.resize(b, obs_dim);
  lb.extra.resize(b, h.n1 - 2);
  if (base) {
    bb.x0.resize(b, h.n * kActionDim);
    bb.pinned = MaskPattern::Constant(b, h.n * kActionDim, false);
    bb.obs.resize(b, obs_dim);
    bb.extra.resize(b, 3);
  }
  std::vector<TpClassifier::Example> tp_batch;

  auto obs_at = [&](const Demonstration& d, int index1) {
    return stats.obs.normalize(d.observations[static_cast<std::size_t>(index1 - 1)]);
  };

  for (int e = 0; e < b; ++e) {
    const Demonstration& demo =
        demos_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(demos_.size()) - 1))];
    const AugmentedSample aug = sample_referring_augmentation(demo, h, cfg.sigma_aug, window, rng);
    const int i = split_history(h.n1, rng);
    const AnchorSequence aug_anchors = downsample_anchors(aug.demo, h).anchors;

    if (tpp) {
      TpClassifier::Example ex;
      ex.buffer = build_slot_buffer(AnchorSequence(aug_anchors.begin(), aug_anchors.begin() + i), h.n1);
      ex.point = aug.ref_action.action.trans;
      ex.obs = demo.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(i - 1)] - 1)];
      ex.label = aug.k_label;
      tp_batch.push_back(std::move(ex));
    }
    if (!heads) {
      continue;
    }

    // Global head: history of length i pinned, referring translation pinned
    // when the augmentation lands beyond the history.
    const bool use_aug = rng.uniform() < options_.p_augment;
    const Demonstration& src = use_aug ? aug.demo : demo;
    const AnchorSequence anchors = use_aug ? aug_anchors : downsample_anchors(demo, h).anchors;
    MaskPattern pattern = (use_aug && aug.k_label > i) ? gdh_referring_pattern(i + 1, aug.k_label, h.n1)
                                                       : gdh_pattern(i + 1, h.n1);
    gb.x0.row(e) = flatten_rows(stats.action.normalize(to_matrix(anchors)));
    for (int r = 0; r < h.n1; ++r) {
      gb.pinned.row(e).segment(r * kActionDim, kActionDim) = pattern.row(r);
    }
    gb.obs.row(e) = obs_at(demo, idx[static_cast<std::size_t>(i - 1)]).transpose();
    gb.extra.row(e) = gdh_mask_flags(pattern).transpose();

    // Local head: one uniformly drawn gap.
    const int g = rng.uniform_int(1, h.n1 - 2);
    const int first = idx[static_cast<std::size_t>(g - 1)];
    const Trajectory window_actions(src.actions.begin() + (first - 1),
                                    src.actions.begin() + (first - 1) + h.n2 + 2);
    lb.x0.row(e) = flatten_rows(stats.action.normalize(to_matrix(window_actions)));
    const MaskPattern lp = ldh_pattern(h.n2);
    for (int r = 0; r < h.n2 + 2; ++r) {
      lb.pinned.row(e).segment(r * kActionDim, kActionDim) = lp.row(r);
    }
    lb.obs.row(e) = obs_at(demo, first).transpose();
    lb.extra.row(e) = ldh_step_onehot(g, h.n1).transpose();

    if (base) {
      bb.x0.row(e) = flatten_rows(stats.action.normalize(to_matrix(aug.demo.actions)));
      bb.obs.row(e) = obs_at(demo, 1).transpose();
      bb.extra.row(e) = stats.action.normalize_point(aug.ref_action.action.trans).transpose();
    }
  }

  auto fill_noise = [&](DiffusionHead::Batch& batch) {
    batch.t.resize(static_cast<std::size_t>(b));
    for (auto& t : batch.t) {
      t = rng.uniform_int(1, sched.steps);
    }
    batch.noise = rng.normal_matrix(b, batch.x0.cols());
  };

  ++step_;
  StepStats s;
  s.step = step_;
  s.lr = warmup_lr(cfg.lr, step_, cfg.warmup);
  if (options_.cosine_decay && total_steps_ > cfg.warmup && step_ > cfg.warmup) {
    const double progress = static_cast<double>(step_ - cfg.warmup) /
                            static_cast<double>(total_steps_ - cfg.warmup);
    s.lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(1.0, progress)));
  }

  if (heads) {
    fill_noise(gb);
    fill_noise(lb);
    nn::zero_grad(heads_opt_.params());
    s.mse_gdh = policy_.gdh().train_loss(gb, sched, cfg.alpha);
    s.mse_ldh = policy_.ldh().train_loss(lb, sched, cfg.alpha * cfg.gamma);
    heads_opt_.step(s.lr);
  }
  if (base) {
    fill_noise(bb);
    nn::zero_grad(baseline_opt_.params());
    s.mse_baseline = policy_.baseline().train_loss(bb, sched, 1.0);
    baseline_opt_.step(s.lr);
  }
  if (tpp) {
    nn::zero_grad(tpp_opt_.params());
    int correct = 0;
    s.cce = policy_.tpp().train_loss(tp_batch, stats, 1.0, true, &correct);
    s.tp_accuracy = static_cast<double>(correct) / static_cast<double>(tp_batch.size());
    tpp_opt_.step(s.lr);
  }
  s.total = total_loss(s.cce, s.mse_gdh + cfg.gamma * s.mse_ldh, cfg.alpha);
  if (!std::isfinite(s.total)) {
    throw Error("non-finite training loss at step " + std::to_string(step_) + " (gdh " +
                std::to_string(s.mse_gdh) + ", ldh " + std::to_string(s.mse_ldh) + ", cce " +
                std::to_string(s.cce) + ")");
  }
  return s;
}

std::vector<StepStats> Trainer::fit(Rng& rng) {
  const long total = static_cast<long>(policy_.config().epochs) * iterations_per_epoch();
  std::vector<StepStats> history;
  total_steps_ = total;
  auto run = [&](bool heads, bool tpp) {
    step_ = 0;
    for (long n = 0; n < total; ++n) {
      history.push_back(step_impl(rng, heads, tpp));
      const StepStats& s = history.back();
      if (options_.log && options_.log_every > 0 && s.step % options_.log_every == 0) {
        options_.log("step " + std::to_string(s.step) + "/" + std::to_string(total) +
                     " lr " + std::to_string(s.lr) + " total " + std::to_string(s.total) +
                     " gdh " + std::to_string(s.mse_gdh) + " ldh " + std::to_string(s.mse_ldh) +
                     " base " + std::to_string(s.mse_baseline) + " cce " + std::to_string(s.cce) +
                     " tp-acc " + std::to_string(s.tp_accuracy));
      }
    }
  };
  if (options_.joint) {
    run(options_.train_heads, options_.train_tpp);
  } else {
    if (options_.train_heads) run(true, false);
    if (options_.train_tpp) run(false, true);
  }
  return history;
}

double Trainer::validation_action_mse(int episodes, Rng& rng) const {
  const HorizonConfig& h = policy_.horizon();
  const auto idx = anchor_indices(h);
  const double gamma = policy_.config().gamma;
  const Eigen::RowVectorXd scale = policy_.stats().action.half_range().transpose();
  double sum = 0.0;
  for (int e = 0; e < episodes; ++e) {
    const Demonstration& demo =
        demos_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(demos_.size()) - 1))];
    const AnchorSequence target = downsample_anchors(demo, h).anchors;
    const AnchorSequence pred = policy_.sample_anchors(demo.observations.front(), {target.front()},
                                                       std::nullopt, 0, rng);
    const int g = rng.uniform_int(1, h.n1 - 2);
    const int first = idx[static_cast<std::size_t>(g - 1)];
    const Trajectory seg_target(demo.actions.begin() + first, demo.actions.begin() + first + h.n2);
    const auto seg_pred =
        policy_.sample_interior(demo.observations[static_cast<std::size_t>(first - 1)],
                                target[static_cast<std::size_t>(g - 1)],
                                target[static_cast<std::size_t>(g)], g, rng);
    auto norm = [&](const std::vector<Action>& a) {
      return Eigen::MatrixXd(to_matrix(a).array().rowwise() / scale.array());
    };
    sum += loss_mse(norm(pred), norm(target), norm(seg_pred), norm(seg_target), gamma);
  }
  return sum / std::max(1, episodes);
}

}  // namespace refsteer
