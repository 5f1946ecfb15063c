#include "refsteer/heads.hpp"

#include <cmath>

namespace refsteer {

MaskPattern gdh_pattern(int i, int n1) {
  if (n1 < 3 || i < 1 || i > n1) {
    throw Error("GDH mask needs 1 <= i <= N1 and N1 >= 3 (i=" + std::to_string(i) +
                ", N1=" + std::to_string(n1) + ")");
  }
  MaskPattern m = MaskPattern::Constant(n1, kActionDim, false);
  m.topRows(i - 1).setConstant(true);
  return m;
}

MaskPattern gdh_referring_pattern(int i, int k, int n1) {
  MaskPattern m = gdh_pattern(i, n1);
  if (k < i || k > n1) {
    throw Error("referring slot k=" + std::to_string(k) + " outside the future region [" +
                std::to_string(i) + ", " + std::to_string(n1) + "]");
  }
  m.row(k - 1).head(kTransDims).setConstant(true);
  return m;
}

MaskPattern ldh_pattern(int n2) {
  if (n2 < 1) {
    throw Error("LDH mask needs N2 >= 1");
  }
  MaskPattern m = MaskPattern::Constant(n2 + 2, kActionDim, false);
  m.row(0).setConstant(true);
  m.row(n2 + 1).setConstant(true);
  return m;
}

SteeringMask mask_gdh(int i, int n1, const AnchorSequence& history) {
  gdh_pattern(i, n1);
  if (static_cast<int>(history.size()) < i - 1) {
    throw Error("anchor history holds " + std::to_string(history.size()) +
                " entries but the mask injects " + std::to_string(i - 1));
  }
  SteeringMask mask(n1, kActionDim);
  for (int r = 0; r < i - 1; ++r) {
    mask.pin_row(r, flatten(history[static_cast<std::size_t>(r)]).transpose());
  }
  return mask;
}

SteeringMask mask_gdh_referring(int i, int k, int n1, const AnchorSequence& history,
                                const ReferringAction& ref) {
  gdh_referring_pattern(i, k, n1);
  SteeringMask mask = mask_gdh(i, n1, history);
  for (int d = 0; d < kActionDim; ++d) {
    if (ref.constrained_dims[static_cast<std::size_t>(d)]) {
      mask.pin(k - 1, d, flatten(ref.action)[d]);
    }
  }
  return mask;
}

SteeringMask mask_ldh(int n2, const Action& a_i, const Action& a_next) {
  ldh_pattern(n2);
  SteeringMask mask(n2 + 2, kActionDim);
  mask.pin_row(0, flatten(a_i).transpose());
  mask.pin_row(n2 + 1, flatten(a_next).transpose());
  return mask;
}

// ---------------------------------------------------------------------------

ActionNormalizer ActionNormalizer::fit(const std::vector<Demonstration>& demos, double margin) {
  if (demos.empty()) {
    throw Error("cannot fit an action normalizer without demonstrations");
  }
  ActionVector lo = ActionVector::Constant(std::numeric_limits<double>::infinity());
  ActionVector hi = -lo;
  for (const auto& demo : demos) {
    for (const auto& a : demo.actions) {
      const ActionVector v = flatten(a);
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  ActionNormalizer n;
  for (int d = 0; d < kActionDim; ++d) {
    const double span = hi[d] - lo[d];
    if (span < 1e-9) {
      n.lo[d] = lo[d] - 1.0;
      n.hi[d] = lo[d] + 1.0;
    } else {
      n.lo[d] = lo[d] - margin * span;
      n.hi[d] = hi[d] + margin * span;
    }
  }
  return n;
}

ActionVector ActionNormalizer::half_range() const {
  return 0.5 * (hi - lo);
}

Eigen::MatrixXd ActionNormalizer::normalize(const Eigen::MatrixXd& rows) const {
  const Eigen::RowVectorXd c = center().transpose();
  const Eigen::RowVectorXd h = half_range().transpose();
  return (rows.rowwise() - c).array().rowwise() / h.array();
}

Eigen::MatrixXd ActionNormalizer::denormalize(const Eigen::MatrixXd& rows) const {
  const Eigen::RowVectorXd c = center().transpose();
  const Eigen::RowVectorXd h = half_range().transpose();
  return (rows.array().rowwise() * h.array()).matrix().rowwise() + c;
}

SteeringMask ActionNormalizer::normalize(const SteeringMask& mask) const {
  SteeringMask out = mask;
  out.known = mask.m.select(normalize(mask.known), Eigen::MatrixXd::Zero(mask.rows(), mask.cols()));
  return out;
}

Vec3 ActionNormalizer::normalize_point(const Vec3& p) const {
  return (p - center().head<3>()).cwiseQuotient(half_range().head<3>());
}

ObsNormalizer ObsNormalizer::fit(const std::vector<Demonstration>& demos) {
  if (demos.empty() || demos.front().observations.empty()) {
    throw Error("cannot fit an observation normalizer without observations");
  }
  const Eigen::Index dim = demos.front().observations.front().size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
  double count = 0.0;
  for (const auto& demo : demos) {
    for (const auto& o : demo.observations) {
      if (o.size() != dim) {
        throw Error("observation dimension differs across demonstrations");
      }
      sum += o;
      sq += o.cwiseProduct(o);
      count += 1.0;
    }
  }
  ObsNormalizer n;
  n.mean = sum / count;
  const Eigen::VectorXd var = (sq / count - n.mean.cwiseProduct(n.mean)).cwiseMax(0.0);
  n.scale = var.cwiseSqrt().unaryExpr([](double s) { return s < 1e-6 ? 1.0 : s; });
  return n;
}

Eigen::VectorXd ObsNormalizer::normalize(const Eigen::VectorXd& obs) const {
  if (obs.size() != mean.size()) {
    throw Error("observation has dimension " + std::to_string(obs.size()) + ", expected " +
                std::to_string(mean.size()));
  }
  return (obs - mean).cwiseQuotient(scale);
}

// ---------------------------------------------------------------------------

DiffusionHead::DiffusionHead(const HeadSpec& spec, Rng& rng, const std::string& name)
    : spec_(spec) {
  std::vector<int> enc{spec.obs_dim};
  enc.insert(enc.end(), spec.encoder.begin(), spec.encoder.end());
  encoder_ = nn::Mlp(enc, rng, name + ".encoder");
  DenoiserSpec ds;
  ds.buffer_rows = spec.rows;
  ds.buffer_cols = kActionDim;
  ds.condition_dim = spec.encoder.back() + spec.extra_dim;
  ds.time_embed_dim = spec.time_embed_dim;
  ds.hidden = spec.hidden;
  denoiser_ = MlpDenoiser(ds, rng, name + ".denoiser");
}

Eigen::VectorXd DiffusionHead::condition(const Eigen::VectorXd& obs_norm,
                                         const Eigen::VectorXd& extra) const {
  if (extra.size() != spec_.extra_dim) {
    throw Error("condition block has size " + std::to_string(extra.size()) + ", expected " +
                std::to_string(spec_.extra_dim));
  }
  const nn::Mat emb = encoder_.forward(obs_norm.transpose());
  Eigen::VectorXd cond(emb.cols() + extra.size());
  cond << emb.row(0).transpose(), extra;
  return cond;
}

Eigen::MatrixXd DiffusionHead::sample(const Eigen::VectorXd& obs_norm, const Eigen::VectorXd& extra,
                                      const SteeringMask& mask_norm,
                                      const DiffusionSchedule& schedule, Rng& rng,
                                      const SamplerOptions& options) const {
  if (mask_norm.rows() != spec_.rows || mask_norm.cols() != kActionDim) {
    throw Error("steering mask shape does not match the head buffer");
  }
  return steered_sample(denoiser_, condition(obs_norm, extra), mask_norm, schedule, rng, options);
}

double DiffusionHead::train_loss(const Batch& batch, const DiffusionSchedule& schedule,
                                 double weight, bool accumulate) {
  const Eigen::Index b = batch.x0.rows();
  const Eigen::Index flat = batch.x0.cols();
  nn::Mat xt(b, flat);
  for (Eigen::Index r = 0; r < b; ++r) {
    const double ab = schedule.alpha_bar_at(batch.t[static_cast<std::size_t>(r)]);
    xt.row(r) = std::sqrt(ab) * batch.x0.row(r) + std::sqrt(1.0 - ab) * batch.noise.row(r);
  }
  xt = batch.pinned.select(batch.x0, xt);

  nn::Mlp::Cache enc_cache;
  const nn::Mat emb = encoder_.forward(batch.obs, enc_cache);
  nn::Mat cond(b, emb.cols() + batch.extra.cols());
  cond << emb, batch.extra;

  nn::Mlp::Cache den_cache;
  const nn::Mat pred = denoiser_.forward(xt, batch.t, cond, den_cache);
  const Eigen::ArrayXXd free = (!batch.pinned).cast<double>();
  const double count = free.sum();
  if (count == 0.0) {
    return 0.0;
  }
  const nn::Mat diff = ((pred - batch.noise).array() * free).matrix();
  const double loss = diff.squaredNorm() / count;
  if (!std::isfinite(loss)) {
    throw Error("non-finite diffusion loss");
  }
  if (accumulate) {
    const nn::Mat dy = diff * (2.0 * weight / count);
    const nn::Mat dcond = denoiser_.backward(den_cache, dy);
    encoder_.backward(enc_cache, dcond.leftCols(emb.cols()));
  }
  return loss;
}

void DiffusionHead::collect(nn::ParamList& out) {
  encoder_.collect(out);
  denoiser_.collect(out);
}

// ---------------------------------------------------------------------------

Eigen::VectorXd gdh_mask_flags(const MaskPattern& pattern) {
  Eigen::VectorXd flags(2 * pattern.rows());
  for (Eigen::Index r = 0; r < pattern.rows(); ++r) {
    flags[2 * r] = pattern.row(r).all() ? 1.0 : 0.0;
    flags[2 * r + 1] = pattern.row(r).head(kTransDims).all() ? 1.0 : 0.0;
  }
  return flags;
}

Eigen::VectorXd gdh_mask_flags(const SteeringMask& mask) {
  return gdh_mask_flags(mask.m);
}

Eigen::VectorXd ldh_step_onehot(int i, int n1) {
  if (i < 1 || i > n1 - 2) {
    throw Error("LDH step index " + std::to_string(i) + " outside [1, N1 - 2]");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n1 - 2);
  v[i - 1] = 1.0;
  return v;
}

std::vector<Action> decode_actions(const Eigen::MatrixXd& raw, const SteeringMask& raw_mask) {
  Eigen::MatrixXd fixed = raw;
  apply_steering(raw_mask, fixed);
  std::vector<Action> out;
  out.reserve(static_cast<std::size_t>(fixed.rows()));
  for (Eigen::Index r = 0; r < fixed.rows(); ++r) {
    ActionVector v = fixed.row(r).transpose();
    if (v.segment<4>(kRotOffset).squaredNorm() < 1e-12) {
      v.segment<4>(kRotOffset) << 1.0, 0.0, 0.0, 0.0;
    }
    out.push_back(unflatten(v));
  }
  return out;
}

}  // namespace refsteer
