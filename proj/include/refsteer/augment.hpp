#pragma once

#include <array>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "refsteer/core.hpp"
#include "refsteer/demonstration.hpp"
#include "refsteer/rng.hpp"

namespace refsteer {

struct Downsampled {
  AnchorSequence anchors;
  std::vector<Trajectory> segments;
};

/// Anchors at anchor_indices(config) and the N1-2 interior runs.
Downsampled downsample_anchors(const Demonstration& demo, const HorizonConfig& config);

/// Gaussian over [1, N1-1] centred at N1/2 with sd N1/4, rounded and clamped.
int split_history(int n1, Rng& rng);

/// Translation displacement added on [j-W, j+W]: two degree-7 pieces over
/// the half-windows, with value, velocity, acceleration and jerk zero at both
/// window edges, value D at j, and derivatives 1..6 continuous at j. Each
/// piece is a polynomial in u = (t - start) / W on [0, 1].
struct BlendProfile {
  int j = 0;
  int window = 0;
  /// Power-basis coefficients per channel: [channel][piece][power].
  std::array<std::array<Eigen::Matrix<double, 8, 1>, 2>, 3> coeffs{};

  /// d-th derivative of the displacement with respect to the time index.
  double derivative(int channel, double t, int order) const;
};

/// Solves the 16x16 two-piece system for displacement `delta` over half
/// window W. Throws if the system is numerically singular.
std::array<Eigen::Matrix<double, 8, 1>, 2> solve_blend_pieces(double delta, int window);

struct BlendResult {
  Demonstration demo;
  BlendProfile profile;
};

/// Smoothly routes the translation through `perturbed.trans` at index j
/// (1-based). Rotation is blended towards `perturbed.rot` by slerp with the
/// same unit profile; grippers are untouched. Entries outside [j-W, j+W] are
/// copied, so they match the input bit for bit.
BlendResult blend_with_profile(const Demonstration& demo, int j, const Action& perturbed, int window);
Demonstration blend_seventh_order(const Demonstration& demo, int j, const Action& perturbed,
                                  int window);

/// Inclusive 1-based range of perturbation indices whose blend window and
/// its edge stencils fit inside a length-N demo.
std::pair<int, int> blendable_range(int n, int window);

/// Slot (1-based) whose anchor index is nearest to j; ties go to the earlier slot.
int nearest_anchor_slot(const HorizonConfig& config, int j);

struct AugmentedSample {
  Demonstration demo;
  ReferringAction ref_action;
  int k_label = 0;
  int j = 0;
};

AugmentedSample sample_referring_augmentation(const Demonstration& demo, const HorizonConfig& config,
                                              double sigma, int window, Rng& rng);

/// Central finite-difference estimate of the d-th derivative (d <= 3) of a
/// translation channel at 1-based index t.
double finite_difference(const Trajectory& actions, int channel, int t, int order);

}  // namespace refsteer
