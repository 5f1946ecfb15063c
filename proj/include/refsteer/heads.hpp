#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsteer/core.hpp"
#include "refsteer/demonstration.hpp"
#include "refsteer/diffusion.hpp"
#include "refsteer/nn.hpp"
#include "refsteer/rng.hpp"

namespace refsteer {

using MaskPattern = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Rows j < i set across all dims (1-based i, rows j).
MaskPattern gdh_pattern(int i, int n1);
/// gdh_pattern plus the translation dims of row k.
MaskPattern gdh_referring_pattern(int i, int k, int n1);
/// First and last of n2 + 2 rows set.
MaskPattern ldh_pattern(int n2);

/// History rows 1..i-1 pinned to `history`. Throws if i is outside [1, N1]
/// or the history is shorter than i - 1.
SteeringMask mask_gdh(int i, int n1, const AnchorSequence& history);

/// mask_gdh plus row k translation pinned to the referring point.
/// Requires i <= k <= N1.
SteeringMask mask_gdh_referring(int i, int k, int n1, const AnchorSequence& history,
                                const ReferringAction& ref);

/// Local buffer of n2 + 2 rows with the endpoint anchors pinned.
SteeringMask mask_ldh(int n2, const Action& a_i, const Action& a_next);

/// Per-dimension affine map of actions onto [-1, 1] from data extrema.
struct ActionNormalizer {
  ActionVector lo = ActionVector::Constant(-1.0);
  ActionVector hi = ActionVector::Constant(1.0);

  static ActionNormalizer fit(const std::vector<Demonstration>& demos, double margin = 0.05);

  ActionVector center() const { return 0.5 * (lo + hi); }
  ActionVector half_range() const;

  Eigen::MatrixXd normalize(const Eigen::MatrixXd& rows) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& rows) const;
  /// The same map applied to a steering mask's known values.
  SteeringMask normalize(const SteeringMask& mask) const;
  Vec3 normalize_point(const Vec3& p) const;
};

struct ObsNormalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static ObsNormalizer fit(const std::vector<Demonstration>& demos);
  Eigen::VectorXd normalize(const Eigen::VectorXd& obs) const;
  int dim() const { return static_cast<int>(mean.size()); }
};

struct PolicyStats {
  ActionNormalizer action;
  ObsNormalizer obs;
};

/// Shared shape of every diffusion head: an observation encoder, an
/// extra condition block and an MLP noise predictor over a (rows x 8) buffer.
struct HeadSpec {
  int rows = 0;
  int obs_dim = 0;
  int extra_dim = 0;
  std::vector<int> encoder{128, 64};
  std::vector<int> hidden{256, 256, 256};
  int time_embed_dim = 32;
};

class DiffusionHead {
 public:
  DiffusionHead() = default;
  DiffusionHead(const HeadSpec& spec, Rng& rng, const std::string& name);

  /// Encoded observation followed by the extra condition block.
  Eigen::VectorXd condition(const Eigen::VectorXd& obs_norm, const Eigen::VectorXd& extra) const;

  /// Sampling in normalized action space.
  Eigen::MatrixXd sample(const Eigen::VectorXd& obs_norm, const Eigen::VectorXd& extra,
                         const SteeringMask& mask_norm, const DiffusionSchedule& schedule,
                         Rng& rng, const SamplerOptions& options = {}) const;

  struct Batch {
    nn::Mat x0;                 // batch x rows*8, normalized, row-major buffers
    MaskPattern pinned;         // batch x rows*8
    nn::Mat obs;                // batch x obs_dim, normalized
    nn::Mat extra;              // batch x extra_dim
    std::vector<int> t;
    nn::Mat noise;              // batch x rows*8
  };

  /// Masked noise-prediction MSE over unpinned entries; pinned entries of
  /// x_t are the clean x0 values, as at inference. Accumulates gradients
  /// scaled by `weight` and returns the unweighted loss.
  double train_loss(const Batch& batch, const DiffusionSchedule& schedule, double weight,
                    bool accumulate = true);

  void collect(nn::ParamList& out);
  const HeadSpec& spec() const { return spec_; }

 private:
  HeadSpec spec_;
  nn::Mlp encoder_;
  MlpDenoiser denoiser_;
};

/// Condition flags describing a GDH mask: per row, fully pinned and
/// translation pinned.
Eigen::VectorXd gdh_mask_flags(const SteeringMask& mask);
Eigen::VectorXd gdh_mask_flags(const MaskPattern& pattern);

/// One-hot of the gap index i in [1, N1 - 2].
Eigen::VectorXd ldh_step_onehot(int i, int n1);

/// Renormalizes rotations and thresholds grippers; pinned entries in
/// `raw_mask` are restored bit-exactly afterwards.
std::vector<Action> decode_actions(const Eigen::MatrixXd& raw, const SteeringMask& raw_mask);

}  // namespace refsteer
