#include "refsteer/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace refsteer {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  throw Error("unknown schedule kind: " + name);
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::Linear ? "linear" : "cosine";
}

DiffusionSchedule schedule_from_betas(std::vector<double> beta, ScheduleKind kind) {
  if (beta.empty()) {
    throw Error("diffusion schedule needs at least one step");
  }
  DiffusionSchedule s;
  s.steps = static_cast<int>(beta.size());
  s.kind = kind;
  s.beta = std::move(beta);
  double running = 1.0;
  for (double b : s.beta) {
    if (!(b > 0.0 && b < 1.0)) {
      throw Error("beta values must lie in (0, 1)");
    }
    s.alpha.push_back(1.0 - b);
    running *= 1.0 - b;
    s.alpha_bar.push_back(running);
  }
  return s;
}

DiffusionSchedule make_schedule(int steps, ScheduleKind kind, double beta_start, double beta_end) {
  if (steps < 1) {
    throw Error("diffusion schedule needs T >= 1, got " + std::to_string(steps));
  }
  std::vector<double> beta(static_cast<std::size_t>(steps));
  if (kind == ScheduleKind::Linear) {
    for (int t = 0; t < steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
      beta[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
    }
  } else {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 0; t < steps; ++t) {
      const double b = 1.0 - f(t + 1.0) / f(t);
      beta[static_cast<std::size_t>(t)] = std::clamp(b, 1e-8, 0.999);
    }
  }
  return schedule_from_betas(std::move(beta), kind);
}

Eigen::MatrixXd forward_noise(const DiffusionSchedule& schedule, const Eigen::MatrixXd& x0, int t,
                              const Eigen::MatrixXd& noise) {
  if (t < 1 || t > schedule.steps) {
    throw Error("diffusion step " + std::to_string(t) + " outside [1, " +
                std::to_string(schedule.steps) + "]");
  }
  if (x0.rows() != noise.rows() || x0.cols() != noise.cols()) {
    throw Error("forward_noise shape mismatch");
  }
  const double ab = schedule.alpha_bar_at(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

// ---------------------------------------------------------------------------

SteeringMask::SteeringMask(Eigen::Index rows, Eigen::Index cols)
    : m(Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, false)),
      known(Eigen::MatrixXd::Zero(rows, cols)) {}

void SteeringMask::pin(Eigen::Index row, Eigen::Index col, double value) {
  if (!std::isfinite(value)) {
    throw Error("steering mask cannot pin a non-finite value");
  }
  m(row, col) = true;
  known(row, col) = value;
}

void SteeringMask::pin_row(Eigen::Index row, const Eigen::RowVectorXd& values) {
  for (Eigen::Index c = 0; c < cols(); ++c) {
    pin(row, c, values[c]);
  }
}

bool SteeringMask::row_fully_pinned(Eigen::Index row) const {
  return m.row(row).all();
}

bool SteeringMask::row_any_pinned(Eigen::Index row) const {
  return m.row(row).any();
}

std::size_t SteeringMask::pinned_count() const {
  return static_cast<std::size_t>(m.count());
}

void apply_steering(const SteeringMask& mask, Eigen::MatrixXd& z) {
  if (mask.rows() != z.rows() || mask.cols() != z.cols()) {
    throw Error("steering mask shape does not match the buffer");
  }
  z = mask.m.select(mask.known, z);
}

// ---------------------------------------------------------------------------

Eigen::RowVectorXd flatten_rows(const Eigen::MatrixXd& buffer) {
  Eigen::RowVectorXd flat(buffer.size());
  for (Eigen::Index r = 0; r < buffer.rows(); ++r) {
    flat.segment(r * buffer.cols(), buffer.cols()) = buffer.row(r);
  }
  return flat;
}

Eigen::MatrixXd unflatten_rows(const Eigen::RowVectorXd& flat, Eigen::Index rows,
                               Eigen::Index cols) {
  Eigen::MatrixXd buffer(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    buffer.row(r) = flat.segment(r * cols, cols);
  }
  return buffer;
}

MlpDenoiser::MlpDenoiser(const DenoiserSpec& spec, Rng& rng, const std::string& name)
    : spec_(spec) {
  std::vector<int> widths;
  widths.push_back(spec.buffer_rows * spec.buffer_cols + spec.condition_dim + spec.time_embed_dim);
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(spec.buffer_rows * spec.buffer_cols);
  net_ = nn::Mlp(widths, rng, name);
}

nn::Mat MlpDenoiser::assemble(const nn::Mat& x, const std::vector<int>& t,
                              const nn::Mat& cond) const {
  if (x.cols() != flat_dim() || cond.cols() != spec_.condition_dim ||
      x.rows() != cond.rows() || static_cast<std::size_t>(x.rows()) != t.size()) {
    throw Error("denoiser input shape mismatch");
  }
  nn::Mat in(x.rows(), x.cols() + cond.cols() + spec_.time_embed_dim);
  in.leftCols(x.cols()) = x;
  in.middleCols(x.cols(), cond.cols()) = cond;
  in.rightCols(spec_.time_embed_dim) = nn::sinusoidal_embedding(t, spec_.time_embed_dim);
  return in;
}

nn::Mat MlpDenoiser::forward(const nn::Mat& x, const std::vector<int>& t,
                             const nn::Mat& cond) const {
  return net_.forward(assemble(x, t, cond));
}

nn::Mat MlpDenoiser::forward(const nn::Mat& x, const std::vector<int>& t, const nn::Mat& cond,
                             nn::Mlp::Cache& cache) const {
  return net_.forward(assemble(x, t, cond), cache);
}

nn::Mat MlpDenoiser::backward(const nn::Mlp::Cache& cache, const nn::Mat& dy) {
  const nn::Mat din = net_.backward(cache, dy);
  return din.middleCols(flat_dim(), spec_.condition_dim);
}

Eigen::MatrixXd MlpDenoiser::predict(const Eigen::MatrixXd& x, int t,
                                     const Eigen::VectorXd& cond) const {
  const nn::Mat out = forward(flatten_rows(x), {t}, cond.transpose());
  return unflatten_rows(out.row(0), x.rows(), x.cols());
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd steered_sample(const NoisePredictor& model, const Eigen::VectorXd& cond,
                               const SteeringMask& mask, const DiffusionSchedule& schedule,
                               Rng& rng, const SamplerOptions& options) {
  Eigen::MatrixXd x = rng.normal_matrix(mask.rows(), mask.cols());
  apply_steering(mask, x);
  for (int t = schedule.steps; t >= 1; --t) {
    const Eigen::MatrixXd eps = model.predict(x, t, cond);
    if (!eps.allFinite()) {
      std::ostringstream msg;
      msg << "denoiser produced non-finite output at diffusion step " << t << " (buffer "
          << x.rows() << "x" << x.cols() << ")";
      throw Error(msg.str());
    }
    const double beta = schedule.beta_at(t);
    const double alpha = schedule.alpha_at(t);
    const double ab = schedule.alpha_bar_at(t);
    const double ab_prev = t > 1 ? schedule.alpha_bar_at(t - 1) : 1.0;

    Eigen::MatrixXd x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
    if (options.clip_denoised > 0.0) {
      x0 = x0.cwiseMax(-options.clip_denoised).cwiseMin(options.clip_denoised);
    }
    const double c0 = beta * std::sqrt(ab_prev) / (1.0 - ab);
    const double ct = (1.0 - ab_prev) * std::sqrt(alpha) / (1.0 - ab);
    Eigen::MatrixXd next = c0 * x0 + ct * x;
    if (t > 1) {
      const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
      next += std::sqrt(var) * rng.normal_matrix(x.rows(), x.cols());
    }
    x = std::move(next);
    apply_steering(mask, x);
  }
  apply_steering(mask, x);
  return x;
}

}  // namespace refsteer
