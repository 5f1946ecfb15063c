#pragma once

// Small dense layers with hand-written backward passes. Forward passes are
// const and cache-free unless a cache is passed, so trained networks can be
// shared read-only across concurrent samplers.

#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsteer/rng.hpp"

namespace refsteer::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;
  bool decay = true;
};

using ParamList = std::vector<Param*>;

void zero_grad(const ParamList& params);
std::size_t count_parameters(const ParamList& params);

Mat silu(const Mat& x);
Mat silu_backward(const Mat& pre, const Mat& dy);

/// Row-wise softmax.
Mat softmax_rows(const Mat& logits);

class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, Rng& rng, const std::string& name);

  /// x: (batch x in) -> (batch x out)
  Mat forward(const Mat& x) const;
  /// Accumulates parameter gradients; returns d/dx.
  Mat backward(const Mat& x, const Mat& dy);
  void collect(ParamList& out);

  int in_features() const { return static_cast<int>(weight.value.rows()); }
  int out_features() const { return static_cast<int>(weight.value.cols()); }

  Param weight;  // in x out
  Param bias;    // 1 x out
};

/// Fully-connected stack with SiLU between layers (none after the last).
class Mlp {
 public:
  struct Cache {
    std::vector<Mat> inputs;
    std::vector<Mat> pre;
  };

  Mlp() = default;
  Mlp(const std::vector<int>& widths, Rng& rng, const std::string& name);

  Mat forward(const Mat& x) const;
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Cache& cache, const Mat& dy);
  void collect(ParamList& out);

  int in_features() const { return layers.front().in_features(); }
  int out_features() const { return layers.back().out_features(); }

  std::vector<Linear> layers;
};

class LayerNorm {
 public:
  struct Cache {
    Mat xhat;
    Vec rstd;
  };

  LayerNorm() = default;
  LayerNorm(int dim, const std::string& name);

  Mat forward(const Mat& x) const;
  Mat forward(const Mat& x, Cache& cache) const;
  Mat backward(const Cache& cache, const Mat& dy);
  void collect(ParamList& out);

  Param gamma;  // 1 x dim
  Param beta;   // 1 x dim
  double eps = 1e-5;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(int count, int dim, Rng& rng, const std::string& name);

  Mat forward(const std::vector<int>& ids) const;
  void backward(const std::vector<int>& ids, const Mat& dy);
  void collect(ParamList& out);

  Param table;  // count x dim
};

/// Multi-head self-attention over batches of equal-length sequences stored
/// as stacked rows: (batch * seq_len) x d_model.
class SelfAttention {
 public:
  struct Cache {
    Mat x;
    Mat qkv;
    Mat heads;
    std::vector<Mat> probs;
  };

  SelfAttention() = default;
  SelfAttention(int d_model, int n_heads, Rng& rng, const std::string& name);

  Mat forward(const Mat& x, int seq_len) const;
  Mat forward(const Mat& x, int seq_len, Cache& cache) const;
  Mat backward(const Cache& cache, int seq_len, const Mat& dy);
  void collect(ParamList& out);

  int d_model = 0;
  int n_heads = 1;
  Linear qkv;
  Linear out;

 private:
  Mat attend(const Mat& qkv_rows, int seq_len, std::vector<Mat>* probs) const;
};

/// Pre-norm encoder block: x + attn(ln(x)), then h + ffn(ln(h)).
class EncoderBlock {
 public:
  struct Cache {
    LayerNorm::Cache ln1;
    SelfAttention::Cache attn;
    LayerNorm::Cache ln2;
    Mlp::Cache ffn;
  };

  EncoderBlock() = default;
  EncoderBlock(int d_model, int n_heads, int d_ff, Rng& rng, const std::string& name);

  Mat forward(const Mat& x, int seq_len) const;
  Mat forward(const Mat& x, int seq_len, Cache& cache) const;
  Mat backward(const Cache& cache, int seq_len, const Mat& dy);
  void collect(ParamList& out);

  LayerNorm ln1;
  SelfAttention attn;
  LayerNorm ln2;
  Mlp ffn;
};

struct AdamWConfig {
  double beta1 = 0.95;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

/// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(ParamList params, AdamWConfig config);

  void step(double lr);
  long steps_taken() const { return t_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamWConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long t_ = 0;
};

/// Sinusoidal embedding of integer positions, (count x dim).
Mat sinusoidal_embedding(const std::vector<int>& positions, int dim);

}  // namespace refsteer::nn
