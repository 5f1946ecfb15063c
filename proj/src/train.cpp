#include "refsteer/train.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "refsteer/checkpoint.hpp"
#include "refsteer/core.hpp"

namespace refsteer {

namespace {

void check_simplex(const Eigen::VectorXd& probs, const Eigen::VectorXd& y) {
  if (probs.size() != y.size() || probs.size() == 0) {
    throw Error("cross-entropy inputs differ in length");
  }
  if (!probs.allFinite() || probs.minCoeff() < 0.0 || std::abs(probs.sum() - 1.0) > 1e-6) {
    throw Error("cross-entropy expects probabilities on the simplex");
  }
}

}  // namespace

double loss_cce(const Eigen::VectorXd& probs, const Eigen::VectorXd& y) {
  check_simplex(probs, y);
  double loss = 0.0;
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    if (y[c] != 0.0) {
      loss -= y[c] * std::log(std::max(probs[c], 1e-12));
    }
  }
  return loss;
}

Eigen::VectorXd loss_cce_grad(const Eigen::VectorXd& probs, const Eigen::VectorXd& y) {
  check_simplex(probs, y);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(probs.size());
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    if (y[c] != 0.0 && probs[c] > 1e-12) {
      g[c] = -y[c] / probs[c];
    }
  }
  return g;
}

double loss_cce_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& y,
                       Eigen::VectorXd* dlogits) {
  if (logits.size() != y.size() || logits.size() == 0) {
    throw Error("cross-entropy inputs differ in length");
  }
  const double mx = logits.maxCoeff();
  const Eigen::ArrayXd e = (logits.array() - mx).exp();
  const double z = e.sum();
  const Eigen::VectorXd p = (e / z).matrix();
  const Eigen::VectorXd logp = (logits.array() - mx - std::log(z)).matrix();
  if (dlogits != nullptr) {
    *dlogits = p * y.sum() - y;
  }
  return -y.dot(logp);
}

double loss_mse(const Eigen::MatrixXd& anchors_pred, const Eigen::MatrixXd& anchors_target,
                const Eigen::MatrixXd& segment_pred, const Eigen::MatrixXd& segment_target,
                double gamma, MseGrad* grad) {
  if (anchors_pred.rows() != anchors_target.rows() || anchors_pred.cols() != anchors_target.cols() ||
      segment_pred.rows() != segment_target.rows() || segment_pred.cols() != segment_target.cols()) {
    throw Error("loss_mse shape mismatch");
  }
  if (anchors_pred.size() == 0 || segment_pred.size() == 0) {
    throw Error("loss_mse needs nonempty inputs");
  }
  const Eigen::MatrixXd da = anchors_pred - anchors_target;
  const Eigen::MatrixXd ds = segment_pred - segment_target;
  const double na = static_cast<double>(da.size());
  const double ns = static_cast<double>(ds.size());
  if (grad != nullptr) {
    grad->anchors = da * (2.0 / na);
    grad->segment = ds * (2.0 * gamma / ns);
  }
  return da.squaredNorm() / na + gamma * ds.squaredNorm() / ns;
}

double total_loss(double cce, double mse, double alpha) {
  return cce + alpha * mse;
}

double warmup_lr(double lr, long step, long warmup) {
  if (warmup <= 0) {
    return lr;
  }
  return lr * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup));
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("invalid training config: " + what); };
  make_horizon(n1, n2);
  if (diffusion_steps < 1) fail("diffusion_steps must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(betas[0] > 0.0 && betas[0] < 1.0 && betas[1] > 0.0 && betas[1] < 1.0)) {
    fail("betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) fail("eps must be positive");
  if (warmup < 0) fail("warmup must be >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (!(gamma > 0.0)) fail("gamma must be positive");
  if (!(alpha > 0.0)) fail("alpha must be positive");
  if (!(sigma_aug >= 0.0)) fail("sigma_aug must be >= 0");
  if (blend_window != 0 && blend_window < 4) fail("blend_window must be 0 (auto) or >= 4");
  if (!(sms_lambda > 0.0)) fail("sms_lambda must be positive");
  if (!(repr_eps > 0.0)) fail("repr_eps must be positive");
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{
      "n1",     "n2",    "diffusion_steps", "lr",        "betas",        "eps",
      "warmup", "epochs", "batch",          "gamma",     "alpha",        "sigma_aug",
      "blend_window", "sms_lambda", "repr_eps", "seed"};
  if (!j.is_object()) {
    throw Error("training config must be a JSON object");
  }
  for (const auto& item : j.items()) {
    if (!keys.contains(item.key())) {
      throw Error("unknown training config key: " + item.key());
    }
  }
  TrainConfig c;
  try {
    if (j.contains("n1")) c.n1 = j["n1"].get<int>();
    if (j.contains("n2")) c.n2 = j["n2"].get<int>();
    if (j.contains("diffusion_steps")) c.diffusion_steps = j["diffusion_steps"].get<int>();
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("betas")) {
      const auto b = j["betas"].get<std::vector<double>>();
      if (b.size() != 2) {
        throw Error("betas must hold two values");
      }
      c.betas = {b[0], b[1]};
    }
    if (j.contains("eps")) c.eps = j["eps"].get<double>();
    if (j.contains("warmup")) c.warmup = j["warmup"].get<int>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch")) c.batch = j["batch"].get<int>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("sigma_aug")) c.sigma_aug = j["sigma_aug"].get<double>();
    if (j.contains("blend_window")) c.blend_window = j["blend_window"].get<int>();
    if (j.contains("sms_lambda")) c.sms_lambda = j["sms_lambda"].get<double>();
    if (j.contains("repr_eps")) c.repr_eps = j["repr_eps"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("training config has a value of the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  return from_json(read_json_file(path));
}

nlohmann::json TrainConfig::to_json() const {
  return {{"n1", n1},
          {"n2", n2},
          {"diffusion_steps", diffusion_steps},
          {"lr", lr},
          {"betas", {betas[0], betas[1]}},
          {"eps", eps},
          {"warmup", warmup},
          {"epochs", epochs},
          {"batch", batch},
          {"gamma", gamma},
          {"alpha", alpha},
          {"sigma_aug", sigma_aug},
          {"blend_window", blend_window},
          {"sms_lambda", sms_lambda},
          {"repr_eps", repr_eps},
          {"seed", seed}};
}

}  // namespace refsteer
