#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "refsteer/demonstration.hpp"
#include "refsteer/rng.hpp"

namespace refsteer {

/// -sum y log p with log clamped at 1e-12. Throws unless probs is a
/// simplex (nonnegative, sums to 1 within 1e-6) of the same size as y.
double loss_cce(const Eigen::VectorXd& probs, const Eigen::VectorXd& y);
/// d loss_cce / d probs.
Eigen::VectorXd loss_cce_grad(const Eigen::VectorXd& probs, const Eigen::VectorXd& y);

/// Cross-entropy of softmax(logits); writes d/dlogits when requested.
double loss_cce_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& y,
                       Eigen::VectorXd* dlogits = nullptr);

struct MseGrad {
  Eigen::MatrixXd anchors;
  Eigen::MatrixXd segment;
};

/// mean((A' - A'_hat)^2) + gamma * mean((A_i - A_i_hat)^2).
double loss_mse(const Eigen::MatrixXd& anchors_pred, const Eigen::MatrixXd& anchors_target,
                const Eigen::MatrixXd& segment_pred, const Eigen::MatrixXd& segment_target,
                double gamma, MseGrad* grad = nullptr);

double total_loss(double cce, double mse, double alpha);

/// Linear warmup: lr * min(1, step / warmup) for 1-based step numbers.
double warmup_lr(double lr, long step, long warmup);

struct TrainConfig {
  int n1 = 6;
  int n2 = 6;
  int diffusion_steps = 100;
  double lr = 1e-4;
  std::array<double, 2> betas{0.95, 0.999};
  double eps = 1e-8;
  int warmup = 500;
  int epochs = 100;
  int batch = 64;
  double gamma = 1.0;
  double alpha = 1.0;
  double sigma_aug = 0.1;
  int blend_window = 0;  // 0 selects N2 + 1
  double sms_lambda = 0.01;
  double repr_eps = 0.05;
  std::uint64_t seed = 0;

  int effective_blend_window() const { return blend_window > 0 ? blend_window : n2 + 1; }
  void validate() const;

  /// Unknown keys are rejected; absent keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

}  // namespace refsteer
