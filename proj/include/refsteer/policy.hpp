#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsteer/augment.hpp"
#include "refsteer/core.hpp"
#include "refsteer/demonstration.hpp"
#include "refsteer/diffusion.hpp"
#include "refsteer/heads.hpp"
#include "refsteer/temporal.hpp"
#include "refsteer/train.hpp"

namespace refsteer {

struct PolicyArchitecture {
  std::vector<int> encoder{128, 64};
  std::vector<int> hidden{256, 256, 256};
  int time_embed_dim = 32;
  TpSpec tpp;  // n1 and obs_dim are filled in from the config
};

/// Everything a rollout needs: schedule, normalizers, both heads, the slot
/// classifier and the concat-conditioning baseline. Parameters live inside
/// the object, so it must stay put while an optimizer references it.
class Policy {
 public:
  Policy(const TrainConfig& config, const PolicyStats& stats, const std::string& task,
         const PolicyArchitecture& arch = {});
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  /// Anchors for history length |history| (the GDH generates slot
  /// |history| + 1 onwards). If `ref_slot` is given, its translation is
  /// pinned to the referring point; it must lie beyond the history.
  AnchorSequence sample_anchors(const Eigen::VectorXd& obs, const AnchorSequence& history,
                                const std::optional<ReferringPoint>& ref, int ref_slot, Rng& rng) const;

  /// The N2 interior actions of gap i between a_i and a_next.
  std::vector<Action> sample_interior(const Eigen::VectorXd& obs, const Action& a_i,
                                      const Action& a_next, int i, Rng& rng) const;

  /// Full-horizon open-loop trajectory conditioned on [obs; P].
  Trajectory sample_baseline(const Eigen::VectorXd& obs, const ReferringPoint& p, Rng& rng) const;

  TpPrediction predict_position(const SlotBuffer& buffer, const ReferringPoint& p,
                                const Eigen::VectorXd& obs) const;

  void save(const std::string& dir) const;
  static std::unique_ptr<Policy> load(const std::string& dir);

  const TrainConfig& config() const { return config_; }
  const HorizonConfig& horizon() const { return horizon_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  const PolicyStats& stats() const { return stats_; }
  const std::string& task() const { return task_; }
  int obs_dim() const { return stats_.obs.dim(); }

  DiffusionHead& gdh() { return gdh_; }
  DiffusionHead& ldh() { return ldh_; }
  DiffusionHead& baseline() { return baseline_; }
  TpClassifier& tpp() { return tpp_; }
  const TpClassifier& tpp() const { return tpp_; }

  nn::ParamList head_params();
  nn::ParamList tpp_params();
  nn::ParamList baseline_params();

  SamplerOptions sampler;
  nlohmann::json training_summary = nlohmann::json::object();

 private:
  TrainConfig config_;
  HorizonConfig horizon_;
  DiffusionSchedule schedule_;
  PolicyStats stats_;
  std::string task_;
  PolicyArchitecture arch_;
  DiffusionHead gdh_;
  DiffusionHead ldh_;
  DiffusionHead baseline_;
  TpClassifier tpp_;
};

struct TrainOptions {
  /// Probability that a GDH example uses an augmented demo (the T-P
  /// classifier and baseline always see augmented demos).
  double p_augment = 0.5;
  /// Train the classifier in the same optimizer steps as the heads.
  bool joint = true;
  bool train_baseline = true;
  bool train_heads = true;
  bool train_tpp = true;
  /// Cosine decay of the learning rate to zero after warmup.
  bool cosine_decay = true;
  int log_every = 0;
  std::function<void(const std::string&)> log;
};

struct StepStats {
  long step = 0;
  double lr = 0.0;
  double total = 0.0;
  double cce = 0.0;
  double mse_gdh = 0.0;
  double mse_ldh = 0.0;
  double mse_baseline = 0.0;
  double tp_accuracy = 0.0;
};

/// Builds per-iteration batches from demonstrations and runs AdamW with
/// linear warmup on cce + alpha * (mse_gdh + gamma * mse_ldh).
class Trainer {
 public:
  Trainer(Policy& policy, std::vector<Demonstration> demos, TrainOptions options = {});

  StepStats train_step(Rng& rng);
  /// epochs * ceil(|demos| / batch) iterations.
  std::vector<StepStats> fit(Rng& rng);
  long iterations_per_epoch() const;

  /// Action-space MSE of sampled anchors and interiors against the demos.
  double validation_action_mse(int episodes, Rng& rng) const;

 private:
  StepStats step_impl(Rng& rng, bool heads, bool tpp);

  Policy& policy_;
  std::vector<Demonstration> demos_;
  TrainOptions options_;
  nn::AdamW heads_opt_;
  nn::AdamW tpp_opt_;
  nn::AdamW baseline_opt_;
  long step_ = 0;
  long total_steps_ = 0;
};

/// Slot-classifier examples exactly as the augmentation labeler produces
/// them: a blended demo, a Gaussian history split and the nearest slot.
std::vector<TpClassifier::Example> make_tp_examples(const std::vector<Demonstration>& demos,
                                                    const HorizonConfig& horizon, double sigma,
                                                    int window, int count, Rng& rng);

}  // namespace refsteer
