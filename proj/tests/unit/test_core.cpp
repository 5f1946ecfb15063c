#include <doctest.h>

#include <cmath>

#include "refsteer/core.hpp"
#include "refsteer/diffusion.hpp"
#include "refsteer/rng.hpp"

using namespace refsteer;

TEST_CASE("make_horizon follows N = N1 + (N1 - 2) * N2") {
  CHECK(make_horizon(9, 8).n == 65);
  CHECK(make_horizon(24, 8).n == 200);
  CHECK(make_horizon(3, 1).n == 4);
  CHECK_THROWS_AS(make_horizon(2, 4), Error);
  CHECK_THROWS_AS(make_horizon(5, 0), Error);
}

TEST_CASE("anchor layout puts the empty gap last") {
  CHECK(anchor_indices(make_horizon(3, 8)) == std::vector<int>{1, 10, 11});
  CHECK(anchor_indices(make_horizon(4, 2)) == std::vector<int>{1, 4, 7, 8});
  CHECK(anchor_indices(make_horizon(3, 1)) == std::vector<int>{1, 3, 4});

  for (int n1 = 3; n1 <= 24; ++n1) {
    for (int n2 = 1; n2 <= 24; ++n2) {
      const auto cfg = make_horizon(n1, n2);
      const auto idx = anchor_indices(cfg);
      REQUIRE(static_cast<int>(idx.size()) == n1);
      CHECK(idx.front() == 1);
      CHECK(idx.back() == cfg.n);
      for (std::size_t k = 1; k < idx.size(); ++k) {
        CHECK(idx[k] > idx[k - 1]);
      }
      const auto segs = interior_segments(cfg);
      REQUIRE(static_cast<int>(segs.size()) == n1 - 2);
      for (std::size_t k = 0; k < segs.size(); ++k) {
        CHECK(segs[k].size() == n2);
        CHECK(segs[k].first == idx[k] + 1);
        CHECK(segs[k].last == idx[k + 1] - 1);
      }
    }
  }
}

TEST_CASE("flatten and unflatten") {
  Action id;
  ActionVector expected;
  expected << 0, 0, 0, 1, 0, 0, 0, 0;
  CHECK(flatten(id) == expected);

  ActionVector v;
  v << 0, 0, 0, 2, 0, 0, 0, 0.7;
  const Action a = unflatten(v);
  CHECK(a.rot == Vec4(1, 0, 0, 0));
  CHECK(a.gripper == 1.0);

  ActionVector zero_q;
  zero_q << 1, 2, 3, 0, 0, 0, 0, 0;
  CHECK_THROWS_AS(unflatten(zero_q), Error);

  Rng rng(3);
  for (int n = 0; n < 200; ++n) {
    const Action b = Action::at(Vec3(rng.uniform(), rng.uniform(), rng.uniform()),
                                rng.uniform(-3.0, 3.0), rng.uniform() < 0.5 ? 0.0 : 1.0);
    CHECK(std::abs(b.rot.norm() - 1.0) < 1e-12);
    CHECK(b.rot[0] >= 0.0);
    CHECK(unflatten(flatten(b)) == b);
    CHECK(flatten(unflatten(flatten(b))) == flatten(b));
  }
}

TEST_CASE("referring action constrains translation only") {
  const auto ref = ReferringAction::from_point(ReferringPoint{Vec3(0.1, 0.2, 0.3)});
  CHECK(ref.action.trans == Vec3(0.1, 0.2, 0.3));
  for (int d = 0; d < kActionDim; ++d) {
    CHECK(ref.constrained_dims[static_cast<std::size_t>(d)] == (d < 3));
  }
}

TEST_CASE("linear schedule") {
  const auto one = make_schedule(1, ScheduleKind::Linear);
  REQUIRE(one.steps == 1);
  CHECK(one.alpha_bar[0] == one.alpha[0]);

  // Direct product of (1 - beta_t) evaluated in 30-digit arithmetic.
  const auto s = make_schedule(100, ScheduleKind::Linear);
  CHECK(s.alpha_bar_at(100) == doctest::Approx(0.3635632480554919).epsilon(1e-12));
  CHECK(s.alpha_bar_at(1) == doctest::Approx(1.0 - 1e-4));
  for (int t = 2; t <= 100; ++t) {
    CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
  }
  const auto c = make_schedule(50, ScheduleKind::Cosine);
  for (int t = 2; t <= 50; ++t) {
    CHECK(c.alpha_bar_at(t) < c.alpha_bar_at(t - 1));
  }
  CHECK_THROWS_AS(make_schedule(0, ScheduleKind::Linear), Error);
}

TEST_CASE("forward_noise") {
  const auto s = make_schedule(100, ScheduleKind::Linear);
  Eigen::MatrixXd x0 = Eigen::MatrixXd::Constant(2, 3, 0.5);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 3);
  CHECK(forward_noise(s, x0, 40, zero).isApprox(std::sqrt(s.alpha_bar_at(40)) * x0));
  CHECK_THROWS_AS(forward_noise(s, x0, 0, zero), Error);
  CHECK_THROWS_AS(forward_noise(s, x0, 101, zero), Error);

  // Monte-Carlo variance with x0 = 0 must match 1 - alpha_bar_t.
  Rng rng(11);
  const int t = 70;
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1);
  double sum = 0.0, sq = 0.0;
  const int draws = 100000;
  for (int n = 0; n < draws; ++n) {
    const double v = forward_noise(s, z, t, rng.normal_matrix(1, 1))(0, 0);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / draws;
  const double var = sq / draws - mean * mean;
  CHECK(std::abs(var / (1.0 - s.alpha_bar_at(t)) - 1.0) < 0.02);
}
