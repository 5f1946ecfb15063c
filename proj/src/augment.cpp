#include "refsteer/augment.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace refsteer {

Downsampled downsample_anchors(const Demonstration& demo, const HorizonConfig& config) {
  if (static_cast<int>(demo.actions.size()) != config.n) {
    throw Error("demonstration " + demo.episode_id + " has " + std::to_string(demo.actions.size()) +
                " actions, horizon expects " + std::to_string(config.n));
  }
  Downsampled out;
  for (int idx : anchor_indices(config)) {
    out.anchors.push_back(demo.actions[static_cast<std::size_t>(idx - 1)]);
  }
  for (const Segment& seg : interior_segments(config)) {
    out.segments.emplace_back(demo.actions.begin() + (seg.first - 1), demo.actions.begin() + seg.last);
  }
  return out;
}

int split_history(int n1, Rng& rng) {
  const double mean = 0.5 * n1;
  const double sd = 0.25 * n1;
  const int i = static_cast<int>(std::lround(rng.normal(mean, sd)));
  return std::clamp(i, 1, n1 - 1);
}

// ---------------------------------------------------------------------------

namespace {

using Coeffs = Eigen::Matrix<double, 8, 1>;

double falling(int p, int d) {
  double f = 1.0;
  for (int q = 0; q < d; ++q) {
    f *= p - q;
  }
  return f;
}

// Row vector r with r . c = d-th derivative of sum c_p u^p at u.
Eigen::Matrix<double, 1, 8> derivative_row(double u, int d) {
  Eigen::Matrix<double, 1, 8> row = Eigen::Matrix<double, 1, 8>::Zero();
  for (int p = d; p < 8; ++p) {
    row[p] = falling(p, d) * std::pow(u, p - d);
  }
  return row;
}

double eval_poly(const Coeffs& c, double u, int d) {
  return derivative_row(u, d).dot(c.transpose());
}

}  // namespace

std::array<Coeffs, 2> solve_blend_pieces(double delta, int window) {
  if (window < 1) {
    throw Error("blend window must be positive");
  }
  Eigen::Matrix<double, 16, 16> a = Eigen::Matrix<double, 16, 16>::Zero();
  Eigen::Matrix<double, 16, 1> b = Eigen::Matrix<double, 16, 1>::Zero();
  int r = 0;
  for (int d = 0; d <= 3; ++d, ++r) {
    a.block<1, 8>(r, 0) = derivative_row(0.0, d);
  }
  a.block<1, 8>(r, 0) = derivative_row(1.0, 0);
  b[r++] = 1.0;
  a.block<1, 8>(r, 8) = derivative_row(0.0, 0);
  b[r++] = 1.0;
  for (int d = 1; d <= 6; ++d, ++r) {
    a.block<1, 8>(r, 0) = derivative_row(1.0, d);
    a.block<1, 8>(r, 8) = -derivative_row(0.0, d);
  }
  for (int d = 0; d <= 3; ++d, ++r) {
    a.block<1, 8>(r, 8) = derivative_row(1.0, d);
  }
  const Eigen::FullPivLU<Eigen::Matrix<double, 16, 16>> lu(a);
  if (!lu.isInvertible()) {
    throw Error("seventh-order blend system is singular");
  }
  const Eigen::Matrix<double, 16, 1> unit = lu.solve(b);
  if (!unit.allFinite() || (a * unit - b).cwiseAbs().maxCoeff() > 1e-10) {
    throw Error("seventh-order blend system is ill-conditioned");
  }
  return {Coeffs(delta * unit.head<8>()), Coeffs(delta * unit.tail<8>())};
}

double BlendProfile::derivative(int channel, double t, int order) const {
  const double start = j - window;
  const double end = j + window;
  if (t < start || t > end) {
    return 0.0;
  }
  const auto& pieces = coeffs[static_cast<std::size_t>(channel)];
  const bool left = t <= j;
  const double u = left ? (t - start) / window : (t - j) / window;
  return eval_poly(pieces[left ? 0 : 1], u, order) / std::pow(static_cast<double>(window), order);
}

std::pair<int, int> blendable_range(int n, int window) {
  return {window + 3, n - window - 2};
}

BlendResult blend_with_profile(const Demonstration& demo, int j, const Action& perturbed, int window) {
  const int n = static_cast<int>(demo.actions.size());
  if (window < 4) {
    throw Error("blend half-window must be at least 4, got " + std::to_string(window));
  }
  const auto [lo, hi] = blendable_range(n, window);
  if (j < lo || j > hi) {
    throw Error("blend window around index " + std::to_string(j) + " does not fit in a demo of " +
                std::to_string(n) + " actions (allowed " + std::to_string(lo) + ".." +
                std::to_string(hi) + ")");
  }

  BlendResult result;
  result.demo = demo;
  result.profile.j = j;
  result.profile.window = window;
  const Action& original = demo.actions[static_cast<std::size_t>(j - 1)];
  const Vec3 delta = perturbed.trans - original.trans;
  for (int c = 0; c < 3; ++c) {
    result.profile.coeffs[static_cast<std::size_t>(c)] = solve_blend_pieces(delta[c], window);
  }

  const Vec4 q_orig = original.rot;
  const Vec4 q_pert = canonical_quaternion(perturbed.rot);
  const bool rotate = q_orig != q_pert;
  Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
  std::array<Coeffs, 2> unit{};
  if (rotate) {
    const Eigen::Quaterniond a(q_orig[0], q_orig[1], q_orig[2], q_orig[3]);
    const Eigen::Quaterniond b(q_pert[0], q_pert[1], q_pert[2], q_pert[3]);
    dq = b * a.conjugate();
    unit = solve_blend_pieces(1.0, window);
  }

  for (int t = j - window + 1; t <= j + window - 1; ++t) {
    Action& a = result.demo.actions[static_cast<std::size_t>(t - 1)];
    for (int c = 0; c < 3; ++c) {
      a.trans[c] += result.profile.derivative(c, t, 0);
    }
    if (rotate) {
      const bool left = t <= j;
      const double u = left ? static_cast<double>(t - (j - window)) / window
                            : static_cast<double>(t - j) / window;
      const double w = std::clamp(eval_poly(unit[left ? 0 : 1], u, 0), 0.0, 1.0);
      const Eigen::Quaterniond step = Eigen::Quaterniond::Identity().slerp(w, dq);
      const Eigen::Quaterniond base(a.rot[0], a.rot[1], a.rot[2], a.rot[3]);
      const Eigen::Quaterniond out = step * base;
      a.rot = canonical_quaternion(Vec4(out.w(), out.x(), out.y(), out.z()));
    }
  }
  Action& pinned = result.demo.actions[static_cast<std::size_t>(j - 1)];
  pinned.trans = perturbed.trans;
  if (rotate) {
    pinned.rot = q_pert;
  }
  return result;
}

Demonstration blend_seventh_order(const Demonstration& demo, int j, const Action& perturbed,
                                  int window) {
  return blend_with_profile(demo, j, perturbed, window).demo;
}

int nearest_anchor_slot(const HorizonConfig& config, int j) {
  const auto idx = anchor_indices(config);
  int best = 1;
  int best_dist = std::abs(idx[0] - j);
  for (std::size_t s = 1; s < idx.size(); ++s) {
    const int d = std::abs(idx[s] - j);
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(s) + 1;
    }
  }
  return best;
}

AugmentedSample sample_referring_augmentation(const Demonstration& demo, const HorizonConfig& config,
                                              double sigma, int window, Rng& rng) {
  const auto [lo, hi] = blendable_range(config.n, window);
  if (lo > hi || static_cast<int>(demo.actions.size()) != config.n) {
    throw Error("demonstration too short for a blend half-window of " + std::to_string(window));
  }
  AugmentedSample s;
  s.j = rng.uniform_int(lo, hi);
  Action perturbed = demo.actions[static_cast<std::size_t>(s.j - 1)];
  const Vec3 noise(rng.normal(), rng.normal(), rng.normal());
  perturbed.trans += sigma * noise;
  s.demo = blend_seventh_order(demo, s.j, perturbed, window);
  s.ref_action = ReferringAction::from_point(ReferringPoint{perturbed.trans});
  s.k_label = nearest_anchor_slot(config, s.j);
  return s;
}

double finite_difference(const Trajectory& actions, int channel, int t, int order) {
  const int n = static_cast<int>(actions.size());
  auto x = [&](int idx) {
    if (idx < 1 || idx > n) {
      throw Error("finite-difference stencil leaves the trajectory");
    }
    return actions[static_cast<std::size_t>(idx - 1)].trans[channel];
  };
  switch (order) {
    case 0:
      return x(t);
    case 1:
      return 0.5 * (x(t + 1) - x(t - 1));
    case 2:
      return x(t + 1) - 2.0 * x(t) + x(t - 1);
    case 3:
      return 0.5 * (x(t + 2) - 2.0 * x(t + 1) + 2.0 * x(t - 1) - x(t - 2));
    default:
      throw Error("finite differences implemented up to third order");
  }
}

}  // namespace refsteer
