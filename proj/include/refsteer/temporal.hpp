#pragma once

#include <vector>

#include <Eigen/Core>

#include "refsteer/core.hpp"
#include "refsteer/heads.hpp"
#include "refsteer/nn.hpp"
#include "refsteer/rng.hpp"

namespace refsteer {

/// Fixed-length view of the anchor history: the history followed by copies
/// of its last anchor. History slots share position id 1; padded slots count
/// upwards from 2.
struct SlotBuffer {
  std::vector<Action> slots;
  std::vector<int> pe_ids;
  int history_len = 0;
};

SlotBuffer build_slot_buffer(const AnchorSequence& history, int n1);

struct TpPrediction {
  Eigen::VectorXd probs;
  int k = 0;  // 1-based
};

/// First index of the maximum (1-based).
int argmax_lowest(const Eigen::VectorXd& v);

struct TpSpec {
  int n1 = 0;
  int obs_dim = 0;
  int d_model = 128;
  int heads = 4;
  int layers = 2;
  int d_ff = 256;
};

/// Transformer slot classifier. Tokens: N1 slots (normalized action plus the
/// slot-to-point offset, with position embeddings), one observation token and
/// the referring point token last (point plus observation); logits are read
/// from the point token.
class TpClassifier {
 public:
  struct Example {
    SlotBuffer buffer;
    Vec3 point;
    Eigen::VectorXd obs;  // raw observation
    int label = 0;        // 1-based
  };

  TpClassifier() = default;
  TpClassifier(const TpSpec& spec, Rng& rng);

  TpPrediction predict(const SlotBuffer& buffer, const Vec3& point, const Eigen::VectorXd& obs,
                       const PolicyStats& stats) const;

  /// Mean cross-entropy over the batch; gradients scaled by `weight` are
  /// accumulated when requested. `correct` receives the argmax hit count.
  double train_loss(const std::vector<Example>& batch, const PolicyStats& stats, double weight,
                    bool accumulate = true, int* correct = nullptr);

  void collect(nn::ParamList& out);
  const TpSpec& spec() const { return spec_; }

 private:
  struct Cache;
  nn::Mat tokens(const std::vector<const Example*>& batch, const PolicyStats& stats,
                 nn::Mat* slot_in, nn::Mat* obs_in, nn::Mat* point_in,
                 std::vector<int>* pe) const;
  nn::Mat logits(const std::vector<const Example*>& batch, const PolicyStats& stats,
                 Cache* cache) const;

  TpSpec spec_;
  nn::Linear slot_proj_;
  nn::Linear obs_proj_;
  nn::Linear point_proj_;
  nn::Embedding pe_;
  nn::Embedding type_;
  std::vector<nn::EncoderBlock> blocks_;
  nn::LayerNorm final_ln_;
  nn::Linear head_;
};

}  // namespace refsteer
