#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace refsteer {

/// Flattened action layout: (tx, ty, tz, qw, qx, qy, qz, g).
inline constexpr int kActionDim = 8;
inline constexpr int kTransDims = 3;
inline constexpr int kRotOffset = 3;
inline constexpr int kGripperIndex = 7;

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using ActionVector = Eigen::Matrix<double, kActionDim, 1>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Normalizes a (w,x,y,z) quaternion and flips it so that w >= 0.
/// Inputs already at unit norm (to 1e-12) keep their bits.
Vec4 canonical_quaternion(const Vec4& q);

/// End-effector pose plus binary gripper.
struct Action {
  Vec3 trans = Vec3::Zero();
  Vec4 rot = Vec4(1.0, 0.0, 0.0, 0.0);
  double gripper = 0.0;

  static Action at(const Vec3& position, double yaw = 0.0, double gripper = 0.0);
  double yaw() const;

  bool operator==(const Action& other) const {
    return trans == other.trans && rot == other.rot && gripper == other.gripper;
  }
};

ActionVector flatten(const Action& a);

/// Renormalizes rot, canonicalizes w >= 0 and thresholds the gripper at 0.5.
/// Throws on a zero-norm quaternion or non-finite input.
Action unflatten(const ActionVector& v);

/// (N1, N2, N) with N = N1 + (N1 - 2) * N2.
struct HorizonConfig {
  int n1 = 0;
  int n2 = 0;
  int n = 0;

  bool operator==(const HorizonConfig&) const = default;
};

HorizonConfig make_horizon(int n1, int n2);

/// 1-based anchor positions within [1, N]. Gaps 1..N1-2 hold N2 interior
/// indices each; the final gap is empty, so the last two anchors are adjacent.
std::vector<int> anchor_indices(const HorizonConfig& config);

/// Inclusive 1-based range of interior indices between two anchors.
struct Segment {
  int first = 0;
  int last = 0;
  int size() const { return last - first + 1; }
};

/// The N1-2 densified gaps, each of length N2.
std::vector<Segment> interior_segments(const HorizonConfig& config);

using Trajectory = std::vector<Action>;
using AnchorSequence = std::vector<Action>;

struct ReferringPoint {
  Vec3 p = Vec3::Zero();
};

/// Referring point lifted to an action; only translation is constrained.
struct ReferringAction {
  Action action;
  std::array<bool, kActionDim> constrained_dims{};

  static ReferringAction from_point(const ReferringPoint& point);
};

/// Stacks actions as rows of an (n x 8) matrix.
Eigen::MatrixXd to_matrix(const std::vector<Action>& actions);
std::vector<Action> from_matrix(const Eigen::MatrixXd& m);

}  // namespace refsteer
