#include "refsteer/core.hpp"

#include <cmath>

namespace refsteer {

Vec4 canonical_quaternion(const Vec4& q) {
  if (!q.allFinite()) {
    throw Error("quaternion has non-finite components");
  }
  const double sq = q.squaredNorm();
  if (sq == 0.0) {
    throw Error("zero-norm quaternion");
  }
  Vec4 out = q;
  if (std::abs(sq - 1.0) > 1e-12) {
    out /= std::sqrt(sq);
  }
  if (out[0] < 0.0) {
    out = -out;
  }
  return out;
}

Action Action::at(const Vec3& position, double yaw, double gripper) {
  Action a;
  a.trans = position;
  a.rot = canonical_quaternion(Vec4(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw)));
  a.gripper = gripper;
  return a;
}

double Action::yaw() const {
  return 2.0 * std::atan2(rot[3], rot[0]);
}

ActionVector flatten(const Action& a) {
  ActionVector v;
  v.segment<3>(0) = a.trans;
  v.segment<4>(kRotOffset) = a.rot;
  v[kGripperIndex] = a.gripper;
  return v;
}

Action unflatten(const ActionVector& v) {
  if (!v.allFinite()) {
    throw Error("cannot unflatten a non-finite action vector");
  }
  Action a;
  a.trans = v.segment<3>(0);
  a.rot = canonical_quaternion(v.segment<4>(kRotOffset));
  a.gripper = v[kGripperIndex] >= 0.5 ? 1.0 : 0.0;
  return a;
}

HorizonConfig make_horizon(int n1, int n2) {
  if (n1 < 3) {
    throw Error("horizon requires N1 >= 3, got " + std::to_string(n1));
  }
  if (n2 < 1) {
    throw Error("horizon requires N2 >= 1, got " + std::to_string(n2));
  }
  return HorizonConfig{n1, n2, n1 + (n1 - 2) * n2};
}

std::vector<int> anchor_indices(const HorizonConfig& config) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(config.n1));
  for (int k = 0; k < config.n1 - 1; ++k) {
    idx.push_back(1 + k * (config.n2 + 1));
  }
  idx.push_back(config.n);
  return idx;
}

std::vector<Segment> interior_segments(const HorizonConfig& config) {
  const auto anchors = anchor_indices(config);
  std::vector<Segment> segments;
  for (int k = 0; k + 2 < config.n1; ++k) {
    segments.push_back(Segment{anchors[k] + 1, anchors[k + 1] - 1});
  }
  return segments;
}

ReferringAction ReferringAction::from_point(const ReferringPoint& point) {
  if (!point.p.allFinite()) {
    throw Error("referring point must be finite");
  }
  ReferringAction r;
  r.action.trans = point.p;
  for (int d = 0; d < kTransDims; ++d) {
    r.constrained_dims[d] = true;
  }
  return r;
}

Eigen::MatrixXd to_matrix(const std::vector<Action>& actions) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(actions.size()), kActionDim);
  for (std::size_t r = 0; r < actions.size(); ++r) {
    m.row(static_cast<Eigen::Index>(r)) = flatten(actions[r]).transpose();
  }
  return m;
}

std::vector<Action> from_matrix(const Eigen::MatrixXd& m) {
  if (m.cols() != kActionDim) {
    throw Error("action matrix must have 8 columns");
  }
  std::vector<Action> out;
  out.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.push_back(unflatten(m.row(r).transpose()));
  }
  return out;
}

}  // namespace refsteer
