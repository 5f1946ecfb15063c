#include "refsteer/temporal.hpp"

#include <cmath>

namespace refsteer {

SlotBuffer build_slot_buffer(const AnchorSequence& history, int n1) {
  const int i = static_cast<int>(history.size());
  if (i < 1) {
    throw Error("slot buffer needs at least the initial anchor");
  }
  if (i > n1) {
    throw Error("anchor history of " + std::to_string(i) + " exceeds N1 = " + std::to_string(n1));
  }
  SlotBuffer buf;
  buf.history_len = i;
  buf.slots = history;
  buf.pe_ids.assign(static_cast<std::size_t>(i), 1);
  for (int s = i + 1; s <= n1; ++s) {
    buf.slots.push_back(history.back());
    buf.pe_ids.push_back(s - i + 1);
  }
  return buf;
}

int argmax_lowest(const Eigen::VectorXd& v) {
  if (v.size() == 0) {
    throw Error("argmax of an empty vector");
  }
  Eigen::Index best = 0;
  for (Eigen::Index s = 1; s < v.size(); ++s) {
    if (v[s] > v[best]) {
      best = s;
    }
  }
  return static_cast<int>(best) + 1;
}

// ---------------------------------------------------------------------------

namespace {
constexpr int kSlotFeatures = kActionDim + 3;
constexpr int kSlotType = 0;
constexpr int kObsType = 1;
constexpr int kPointType = 2;
}  // namespace

struct TpClassifier::Cache {
  nn::Mat slot_in;
  nn::Mat obs_in;
  nn::Mat point_in;
  std::vector<int> pe;
  std::vector<nn::EncoderBlock::Cache> blocks;
  nn::Mat point_rows;
  nn::LayerNorm::Cache ln;
  nn::Mat ln_out;
};

TpClassifier::TpClassifier(const TpSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.n1 < 3 || spec.obs_dim < 1) {
    throw Error("T-P classifier needs N1 >= 3 and a positive observation dimension");
  }
  slot_proj_ = nn::Linear(kSlotFeatures, spec.d_model, rng, "tpp.slot_proj");
  obs_proj_ = nn::Linear(spec.obs_dim, spec.d_model, rng, "tpp.obs_proj");
  point_proj_ = nn::Linear(3 + spec.obs_dim, spec.d_model, rng, "tpp.point_proj");
  pe_ = nn::Embedding(spec.n1 + 1, spec.d_model, rng, "tpp.pe");
  type_ = nn::Embedding(3, spec.d_model, rng, "tpp.type");
  for (int l = 0; l < spec.layers; ++l) {
    blocks_.emplace_back(spec.d_model, spec.heads, spec.d_ff, rng, "tpp.block" + std::to_string(l));
  }
  final_ln_ = nn::LayerNorm(spec.d_model, "tpp.final_ln");
  head_ = nn::Linear(spec.d_model, spec.n1, rng, "tpp.head");
}

nn::Mat TpClassifier::tokens(const std::vector<const Example*>& batch, const PolicyStats& stats,
                             nn::Mat* slot_in, nn::Mat* obs_in, nn::Mat* point_in,
                             std::vector<int>* pe) const {
  const int n1 = spec_.n1;
  const int seq = n1 + 2;
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  slot_in->resize(b * n1, kSlotFeatures);
  obs_in->resize(b, spec_.obs_dim);
  point_in->resize(b, 3 + spec_.obs_dim);
  pe->assign(static_cast<std::size_t>(b * n1), 0);
  const Vec3 trans_scale = stats.action.half_range().head<3>();

  for (Eigen::Index e = 0; e < b; ++e) {
    const Example& ex = *batch[static_cast<std::size_t>(e)];
    if (static_cast<int>(ex.buffer.slots.size()) != n1) {
      throw Error("slot buffer length does not match the classifier's N1");
    }
    const Eigen::MatrixXd raw = to_matrix(ex.buffer.slots);
    const Eigen::MatrixXd norm = stats.action.normalize(raw);
    for (int s = 0; s < n1; ++s) {
      const Eigen::Index row = e * n1 + s;
      slot_in->row(row).head(kActionDim) = norm.row(s);
      const Vec3 offset = (raw.row(s).head<3>().transpose() - ex.point).cwiseQuotient(trans_scale);
      slot_in->row(row).tail(3) = offset.transpose();
      (*pe)[static_cast<std::size_t>(row)] = ex.buffer.pe_ids[static_cast<std::size_t>(s)];
    }
    obs_in->row(e) = stats.obs.normalize(ex.obs).transpose();
    point_in->row(e).head<3>() = stats.action.normalize_point(ex.point).transpose();
    point_in->row(e).tail(spec_.obs_dim) = obs_in->row(e);
  }

  const nn::Mat slot_tok = slot_proj_.forward(*slot_in) + pe_.forward(*pe);
  const nn::Mat obs_tok = obs_proj_.forward(*obs_in);
  const nn::Mat point_tok = point_proj_.forward(*point_in);
  const nn::Mat types = type_.forward({kSlotType, kObsType, kPointType});

  nn::Mat x(b * seq, spec_.d_model);
  for (Eigen::Index e = 0; e < b; ++e) {
    x.middleRows(e * seq, n1) = slot_tok.middleRows(e * n1, n1).rowwise() + types.row(0);
    x.row(e * seq + n1) = obs_tok.row(e) + types.row(1);
    x.row(e * seq + n1 + 1) = point_tok.row(e) + types.row(2);
  }
  return x;
}

nn::Mat TpClassifier::logits(const std::vector<const Example*>& batch, const PolicyStats& stats,
                             Cache* cache) const {
  const int seq = spec_.n1 + 2;
  nn::Mat slot_in, obs_in, point_in;
  std::vector<int> pe;
  nn::Mat x = tokens(batch, stats, &slot_in, &obs_in, &point_in, &pe);
  if (cache != nullptr) {
    cache->blocks.assign(blocks_.size(), {});
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = cache != nullptr ? blocks_[l].forward(x, seq, cache->blocks[l]) : blocks_[l].forward(x, seq);
  }
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  nn::Mat point_rows(b, spec_.d_model);
  for (Eigen::Index e = 0; e < b; ++e) {
    point_rows.row(e) = x.row(e * seq + seq - 1);
  }
  nn::Mat normed;
  if (cache != nullptr) {
    normed = final_ln_.forward(point_rows, cache->ln);
    cache->slot_in = std::move(slot_in);
    cache->obs_in = std::move(obs_in);
    cache->point_in = std::move(point_in);
    cache->pe = std::move(pe);
    cache->point_rows = point_rows;
    cache->ln_out = normed;
  } else {
    normed = final_ln_.forward(point_rows);
  }
  return head_.forward(normed);
}

TpPrediction TpClassifier::predict(const SlotBuffer& buffer, const Vec3& point,
                                   const Eigen::VectorXd& obs, const PolicyStats& stats) const {
  if (!point.allFinite()) {
    throw Error("referring point must be finite");
  }
  Example ex{buffer, point, obs, 0};
  const nn::Mat z = logits({&ex}, stats, nullptr);
  TpPrediction out;
  out.probs = nn::softmax_rows(z).row(0).transpose();
  out.k = argmax_lowest(out.probs);
  return out;
}

double TpClassifier::train_loss(const std::vector<Example>& batch, const PolicyStats& stats,
                                double weight, bool accumulate, int* correct) {
  if (batch.empty()) {
    return 0.0;
  }
  std::vector<const Example*> ptrs;
  for (const auto& ex : batch) {
    if (ex.label < 1 || ex.label > spec_.n1) {
      throw Error("T-P label outside [1, N1]");
    }
    ptrs.push_back(&ex);
  }
  Cache cache;
  const nn::Mat z = logits(ptrs, stats, &cache);
  const nn::Mat p = nn::softmax_rows(z);
  const Eigen::Index b = z.rows();
  double loss = 0.0;
  int hits = 0;
  nn::Mat dz = p;
  for (Eigen::Index e = 0; e < b; ++e) {
    const int y = batch[static_cast<std::size_t>(e)].label - 1;
    loss -= std::log(std::max(p(e, y), 1e-12));
    dz(e, y) -= 1.0;
    if (argmax_lowest(p.row(e).transpose()) - 1 == y) {
      ++hits;
    }
  }
  loss /= static_cast<double>(b);
  if (correct != nullptr) {
    *correct = hits;
  }
  if (!std::isfinite(loss)) {
    throw Error("non-finite T-P classifier loss");
  }
  if (!accumulate) {
    return loss;
  }

  dz *= weight / static_cast<double>(b);
  const nn::Mat dnorm = head_.backward(cache.ln_out, dz);
  const nn::Mat dpoint_rows = final_ln_.backward(cache.ln, dnorm);
  const int n1 = spec_.n1;
  const int seq = n1 + 2;
  nn::Mat dx = nn::Mat::Zero(b * seq, spec_.d_model);
  for (Eigen::Index e = 0; e < b; ++e) {
    dx.row(e * seq + seq - 1) = dpoint_rows.row(e);
  }
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    dx = blocks_[l].backward(cache.blocks[l], seq, dx);
  }

  nn::Mat dslot(b * n1, spec_.d_model);
  nn::Mat dobs(b, spec_.d_model);
  nn::Mat dpoint(b, spec_.d_model);
  for (Eigen::Index e = 0; e < b; ++e) {
    dslot.middleRows(e * n1, n1) = dx.middleRows(e * seq, n1);
    dobs.row(e) = dx.row(e * seq + n1);
    dpoint.row(e) = dx.row(e * seq + n1 + 1);
  }
  slot_proj_.backward(cache.slot_in, dslot);
  pe_.backward(cache.pe, dslot);
  obs_proj_.backward(cache.obs_in, dobs);
  point_proj_.backward(cache.point_in, dpoint);
  nn::Mat dtypes(3, spec_.d_model);
  dtypes.row(0) = dslot.colwise().sum();
  dtypes.row(1) = dobs.colwise().sum();
  dtypes.row(2) = dpoint.colwise().sum();
  type_.backward({kSlotType, kObsType, kPointType}, dtypes);
  return loss;
}

void TpClassifier::collect(nn::ParamList& out) {
  slot_proj_.collect(out);
  obs_proj_.collect(out);
  point_proj_.collect(out);
  pe_.collect(out);
  type_.collect(out);
  for (auto& block : blocks_) {
    block.collect(out);
  }
  final_ln_.collect(out);
  head_.collect(out);
}

}  // namespace refsteer
