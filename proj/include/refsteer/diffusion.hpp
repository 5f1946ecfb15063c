#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "refsteer/core.hpp"
#include "refsteer/nn.hpp"
#include "refsteer/rng.hpp"

namespace refsteer {

enum class ScheduleKind { Linear, Cosine };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Discrete DDPM noise schedule. Vectors are indexed by t - 1 for t in [1, T].
struct DiffusionSchedule {
  int steps = 0;
  ScheduleKind kind = ScheduleKind::Linear;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
  double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
  double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
};

/// Linear schedules span beta in [beta_start, beta_end]; cosine follows the
/// squared-cosine alpha_bar curve with beta capped at 0.999.
DiffusionSchedule make_schedule(int steps, ScheduleKind kind, double beta_start = 1e-4,
                                double beta_end = 0.02);

/// Rebuilds a schedule from an explicit beta sequence (checkpoint loading).
DiffusionSchedule schedule_from_betas(std::vector<double> beta, ScheduleKind kind);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise
Eigen::MatrixXd forward_noise(const DiffusionSchedule& schedule, const Eigen::MatrixXd& x0, int t,
                              const Eigen::MatrixXd& noise);

/// Per-entry binary mask plus the values it pins.
struct SteeringMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> m;
  Eigen::MatrixXd known;

  SteeringMask() = default;
  SteeringMask(Eigen::Index rows, Eigen::Index cols);

  Eigen::Index rows() const { return m.rows(); }
  Eigen::Index cols() const { return m.cols(); }

  void pin(Eigen::Index row, Eigen::Index col, double value);
  void pin_row(Eigen::Index row, const Eigen::RowVectorXd& values);
  bool row_fully_pinned(Eigen::Index row) const;
  bool row_any_pinned(Eigen::Index row) const;
  std::size_t pinned_count() const;
};

/// z <- m * known + (1 - m) * z, applied by selection so pinned entries
/// receive `known` bit for bit.
void apply_steering(const SteeringMask& mask, Eigen::MatrixXd& z);

/// Predicts the noise component of a noisy buffer at diffusion step t.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& x, int t,
                                  const Eigen::VectorXd& cond) const = 0;
};

struct DenoiserSpec {
  int buffer_rows = 0;
  int buffer_cols = 0;
  int condition_dim = 0;
  int time_embed_dim = 32;
  std::vector<int> hidden{256, 256, 256};
};

/// Fully-connected noise predictor over [flattened buffer, condition,
/// sinusoidal timestep embedding]. Buffers are flattened row-major.
class MlpDenoiser final : public NoisePredictor {
 public:
  MlpDenoiser() = default;
  MlpDenoiser(const DenoiserSpec& spec, Rng& rng, const std::string& name);

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x, int t,
                          const Eigen::VectorXd& cond) const override;

  /// Batched form: rows of `x` are flattened buffers.
  nn::Mat forward(const nn::Mat& x, const std::vector<int>& t, const nn::Mat& cond) const;
  nn::Mat forward(const nn::Mat& x, const std::vector<int>& t, const nn::Mat& cond,
                  nn::Mlp::Cache& cache) const;
  /// Returns the gradient with respect to the condition block.
  nn::Mat backward(const nn::Mlp::Cache& cache, const nn::Mat& dy);

  void collect(nn::ParamList& out) { net_.collect(out); }
  const DenoiserSpec& spec() const { return spec_; }
  int flat_dim() const { return spec_.buffer_rows * spec_.buffer_cols; }

 private:
  nn::Mat assemble(const nn::Mat& x, const std::vector<int>& t, const nn::Mat& cond) const;

  DenoiserSpec spec_;
  nn::Mlp net_;
};

Eigen::RowVectorXd flatten_rows(const Eigen::MatrixXd& buffer);
Eigen::MatrixXd unflatten_rows(const Eigen::RowVectorXd& flat, Eigen::Index rows, Eigen::Index cols);

struct SamplerOptions {
  /// Clamp on the predicted clean sample; 0 disables.
  double clip_denoised = 0.0;
};

/// Full reverse chain from pure noise with the steering overwrite applied to
/// the initial noise, after every reverse step and once more at the end.
/// Throws Error if the predictor emits non-finite values.
Eigen::MatrixXd steered_sample(const NoisePredictor& model, const Eigen::VectorXd& cond,
                               const SteeringMask& mask, const DiffusionSchedule& schedule,
                               Rng& rng, const SamplerOptions& options = {});

}  // namespace refsteer
