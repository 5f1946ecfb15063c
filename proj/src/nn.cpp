#include "refsteer/nn.hpp"

#include <cmath>

#include "refsteer/core.hpp"

namespace refsteer::nn {

void zero_grad(const ParamList& params) {
  for (Param* p : params) {
    p->grad.setZero(p->value.rows(), p->value.cols());
  }
}

std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params) {
    n += static_cast<std::size_t>(p->value.size());
  }
  return n;
}

Mat silu(const Mat& x) {
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Mat silu_backward(const Mat& pre, const Mat& dy) {
  return pre.binaryExpr(dy, [](double v, double g) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return g * s * (1.0 + v * (1.0 - s));
  });
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

Linear::Linear(int in, int out, Rng& rng, const std::string& name) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight.name = name + ".weight";
  weight.value.resize(in, out);
  for (Eigen::Index i = 0; i < weight.value.size(); ++i) {
    weight.value.data()[i] = rng.uniform(-bound, bound);
  }
  bias.name = name + ".bias";
  bias.decay = false;
  bias.value.resize(1, out);
  for (Eigen::Index i = 0; i < bias.value.size(); ++i) {
    bias.value.data()[i] = rng.uniform(-bound, bound);
  }
  weight.grad.setZero(in, out);
  bias.grad.setZero(1, out);
}

Mat Linear::forward(const Mat& x) const {
  Mat y(x.rows(), weight.value.cols());
  y.noalias() = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  weight.grad.noalias() += x.transpose() * dy;
  bias.grad.row(0) += dy.colwise().sum();
  Mat dx(dy.rows(), weight.value.rows());
  dx.noalias() = dy * weight.value.transpose();
  return dx;
}

void Linear::collect(ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---------------------------------------------------------------------------

Mlp::Mlp(const std::vector<int>& widths, Rng& rng, const std::string& name) {
  if (widths.size() < 2) {
    throw Error("an MLP needs at least input and output widths");
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers.emplace_back(widths[l], widths[l + 1], rng, name + ".l" + std::to_string(l));
  }
}

Mat Mlp::forward(const Mat& x) const {
  Mat h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Mat z = layers[l].forward(h);
    h = (l + 1 < layers.size()) ? silu(z) : std::move(z);
  }
  return h;
}

Mat Mlp::forward(const Mat& x, Cache& cache) const {
  cache.inputs.assign(layers.size(), Mat());
  cache.pre.assign(layers.size(), Mat());
  Mat h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    cache.inputs[l] = h;
    Mat z = layers[l].forward(h);
    if (l + 1 < layers.size()) {
      h = silu(z);
      cache.pre[l] = std::move(z);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Mat Mlp::backward(const Cache& cache, const Mat& dy) {
  Mat g = dy;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) {
      g = silu_backward(cache.pre[l], g);
    }
    g = layers[l].backward(cache.inputs[l], g);
  }
  return g;
}

void Mlp::collect(ParamList& out) {
  for (auto& layer : layers) {
    layer.collect(out);
  }
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(int dim, const std::string& name) {
  gamma.name = name + ".gamma";
  gamma.value = Mat::Ones(1, dim);
  gamma.grad = Mat::Zero(1, dim);
  gamma.decay = false;
  beta.name = name + ".beta";
  beta.value = Mat::Zero(1, dim);
  beta.grad = Mat::Zero(1, dim);
  beta.decay = false;
}

Mat LayerNorm::forward(const Mat& x) const {
  Cache scratch;
  return forward(x, scratch);
}

Mat LayerNorm::forward(const Mat& x, Cache& cache) const {
  const double d = static_cast<double>(x.cols());
  cache.xhat.resize(x.rows(), x.cols());
  cache.rstd.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).sum() / d;
    const auto centered = (x.row(r).array() - mu).matrix();
    const double var = centered.squaredNorm() / d;
    const double rstd = 1.0 / std::sqrt(var + eps);
    cache.rstd[r] = rstd;
    cache.xhat.row(r) = centered * rstd;
  }
  Mat y = cache.xhat.array().rowwise() * gamma.value.row(0).array();
  y.rowwise() += beta.value.row(0);
  return y;
}

Mat LayerNorm::backward(const Cache& cache, const Mat& dy) {
  gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  const Mat dxhat = dy.array().rowwise() * gamma.value.row(0).array();
  const double d = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_g = dxhat.row(r).sum() / d;
    const double mean_gx = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.rstd[r] *
                (dxhat.row(r).array() - mean_g - cache.xhat.row(r).array() * mean_gx).matrix();
  }
  return dx;
}

void LayerNorm::collect(ParamList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------------------

Embedding::Embedding(int count, int dim, Rng& rng, const std::string& name) {
  table.name = name + ".table";
  table.value.resize(count, dim);
  for (Eigen::Index i = 0; i < table.value.size(); ++i) {
    table.value.data()[i] = rng.normal(0.0, 0.02);
  }
  table.grad = Mat::Zero(count, dim);
}

Mat Embedding::forward(const std::vector<int>& ids) const {
  Mat out(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= table.value.rows()) {
      throw Error("embedding id out of range: " + std::to_string(ids[r]));
    }
    out.row(static_cast<Eigen::Index>(r)) = table.value.row(ids[r]);
  }
  return out;
}

void Embedding::backward(const std::vector<int>& ids, const Mat& dy) {
  for (std::size_t r = 0; r < ids.size(); ++r) {
    table.grad.row(ids[r]) += dy.row(static_cast<Eigen::Index>(r));
  }
}

void Embedding::collect(ParamList& out) {
  out.push_back(&table);
}

// ---------------------------------------------------------------------------

SelfAttention::SelfAttention(int d, int heads, Rng& rng, const std::string& name)
    : d_model(d),
      n_heads(heads),
      qkv(d, 3 * d, rng, name + ".qkv"),
      out(d, d, rng, name + ".out") {
  if (d % heads != 0) {
    throw Error("model width must be divisible by the head count");
  }
}

Mat SelfAttention::attend(const Mat& qkv_rows, int seq_len, std::vector<Mat>* probs) const {
  const int dh = d_model / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index batch = qkv_rows.rows() / seq_len;
  Mat heads(qkv_rows.rows(), d_model);
  if (probs != nullptr) {
    probs->assign(static_cast<std::size_t>(batch * n_heads), Mat());
  }
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index r0 = b * seq_len;
    for (int h = 0; h < n_heads; ++h) {
      const auto q = qkv_rows.block(r0, h * dh, seq_len, dh);
      const auto k = qkv_rows.block(r0, d_model + h * dh, seq_len, dh);
      const auto v = qkv_rows.block(r0, 2 * d_model + h * dh, seq_len, dh);
      Mat scores(seq_len, seq_len);
      scores.noalias() = q * k.transpose();
      scores *= scale;
      Mat p = softmax_rows(scores);
      heads.block(r0, h * dh, seq_len, dh).noalias() = p * v;
      if (probs != nullptr) {
        (*probs)[static_cast<std::size_t>(b * n_heads + h)] = std::move(p);
      }
    }
  }
  return heads;
}

Mat SelfAttention::forward(const Mat& x, int seq_len) const {
  return out.forward(attend(qkv.forward(x), seq_len, nullptr));
}

Mat SelfAttention::forward(const Mat& x, int seq_len, Cache& cache) const {
  cache.x = x;
  cache.qkv = qkv.forward(x);
  cache.heads = attend(cache.qkv, seq_len, &cache.probs);
  return out.forward(cache.heads);
}

Mat SelfAttention::backward(const Cache& cache, int seq_len, const Mat& dy) {
  const int dh = d_model / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Mat dheads = out.backward(cache.heads, dy);
  Mat dqkv = Mat::Zero(cache.qkv.rows(), cache.qkv.cols());
  const Eigen::Index batch = cache.qkv.rows() / seq_len;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index r0 = b * seq_len;
    for (int h = 0; h < n_heads; ++h) {
      const Mat& p = cache.probs[static_cast<std::size_t>(b * n_heads + h)];
      const auto q = cache.qkv.block(r0, h * dh, seq_len, dh);
      const auto k = cache.qkv.block(r0, d_model + h * dh, seq_len, dh);
      const auto v = cache.qkv.block(r0, 2 * d_model + h * dh, seq_len, dh);
      const auto dout = dheads.block(r0, h * dh, seq_len, dh);
      dqkv.block(r0, 2 * d_model + h * dh, seq_len, dh).noalias() = p.transpose() * dout;
      Mat dp(seq_len, seq_len);
      dp.noalias() = dout * v.transpose();
      const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      Mat ds = p.array() * (dp.colwise() - row_dot).array();
      ds *= scale;
      dqkv.block(r0, h * dh, seq_len, dh).noalias() = ds * k;
      dqkv.block(r0, d_model + h * dh, seq_len, dh).noalias() = ds.transpose() * q;
    }
  }
  return qkv.backward(cache.x, dqkv);
}

void SelfAttention::collect(ParamList& params) {
  qkv.collect(params);
  out.collect(params);
}

// ---------------------------------------------------------------------------

EncoderBlock::EncoderBlock(int d_model, int n_heads, int d_ff, Rng& rng, const std::string& name)
    : ln1(d_model, name + ".ln1"),
      attn(d_model, n_heads, rng, name + ".attn"),
      ln2(d_model, name + ".ln2"),
      ffn({d_model, d_ff, d_model}, rng, name + ".ffn") {}

Mat EncoderBlock::forward(const Mat& x, int seq_len) const {
  Mat h = x + attn.forward(ln1.forward(x), seq_len);
  return h + ffn.forward(ln2.forward(h));
}

Mat EncoderBlock::forward(const Mat& x, int seq_len, Cache& cache) const {
  Mat h = x + attn.forward(ln1.forward(x, cache.ln1), seq_len, cache.attn);
  return h + ffn.forward(ln2.forward(h, cache.ln2), cache.ffn);
}

Mat EncoderBlock::backward(const Cache& cache, int seq_len, const Mat& dy) {
  Mat dh = dy + ln2.backward(cache.ln2, ffn.backward(cache.ffn, dy));
  return dh + ln1.backward(cache.ln1, attn.backward(cache.attn, seq_len, dh));
}

void EncoderBlock::collect(ParamList& out) {
  ln1.collect(out);
  attn.collect(out);
  ln2.collect(out);
  ffn.collect(out);
}

// ---------------------------------------------------------------------------

AdamW::AdamW(ParamList params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Param* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    if (p.decay && config_.weight_decay > 0.0) {
      p.value *= (1.0 - lr * config_.weight_decay);
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + config_.eps);
  }
}

// ---------------------------------------------------------------------------

Mat sinusoidal_embedding(const std::vector<int>& positions, int dim) {
  const int half = dim / 2;
  Mat out = Mat::Zero(static_cast<Eigen::Index>(positions.size()), dim);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    for (int j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * j / std::max(1, half - 1));
      const double arg = positions[r] * freq;
      out(static_cast<Eigen::Index>(r), j) = std::sin(arg);
      out(static_cast<Eigen::Index>(r), half + j) = std::cos(arg);
    }
  }
  return out;
}

}  // namespace refsteer::nn
