/*
 Copyright 2026 The fbopt Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "fbopt/costs.hpp"
#include "fbopt/plant.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fbopt;

namespace {

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

std::vector<Obstacle> two_obstacles() {
  return {{Vec{{0.0, 0.0}}, 0.5}, {Vec{{1.5, 1.0}}, 0.3}};
}

}  // namespace

TEST(Workspace, SingleObstacleBoundaryAtMidpoint) {
  const Workspace ws = build_workspace(Vec{{0.0, 0.0}}, {{Vec{{2.0, 0.0}}, 1.0}});
  ASSERT_EQ(ws.halfplanes.size(), 1u);
  const auto& hp = ws.halfplanes[0];
  // boundary {x : margin(x) = 0} crosses the a-axis at 0.5
  EXPECT_NEAR(hp.offset / hp.normal(0), 0.5, 1e-9);
  EXPECT_NEAR(hp.margin(Vec{{0.5, 0.0}}), 0.0, 1e-9);
  EXPECT_GT(hp.margin(Vec{{0.0, 0.0}}), 0.0);
  EXPECT_LT(hp.margin(Vec{{2.0, 0.0}}), 0.0);
}

TEST(Workspace, NoObstaclesMeansNoBarrier) {
  const Workspace ws = build_workspace(Vec{{0.3, 0.1}}, {});
  EXPECT_TRUE(ws.halfplanes.empty());
  const Vec x{{1.0, -2.0}}, target{{0.5, 0.5}};
  EXPECT_DOUBLE_EQ(barrier_cost(x, 0, ws, target), 0.5 * (x - target).squaredNorm());
}

TEST(Workspace, SymmetricObstaclesGiveMirroredOffsets) {
  const Workspace ws =
      build_workspace(Vec{{0.0, 0.0}}, {{Vec{{2.0, 0.0}}, 0.7}, {Vec{{-2.0, 0.0}}, 0.7}});
  EXPECT_NEAR(std::abs(ws.halfplanes[0].offset), std::abs(ws.halfplanes[1].offset), 1e-15);
}

TEST(Workspace, InsideObstacleIsInfeasible) {
  try {
    build_workspace(Vec{{0.1, 0.0}}, two_obstacles());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InfeasibleWorkspace);
    EXPECT_NE(std::string(e.what()).find("obstacle 0"), std::string::npos);
  }
}

TEST(Workspace, SafetyOnRandomPositions) {
  Rng r(1);
  const auto obs = two_obstacles();
  int built = 0;
  for (int i = 0; i < 1000; ++i) {
    const Vec x{{r.uniform(-2, 2), r.uniform(-2, 2)}};
    Workspace ws;
    try {
      ws = build_workspace(x, obs);
    } catch (const Error&) {
      continue;
    }
    ++built;
    EXPECT_TRUE(ws.contains(x));
    for (std::size_t j = 0; j < obs.size(); ++j) {
      EXPECT_LT(ws.halfplanes[j].margin(obs[j].center), 0.0);
      // the whole disk lies on the infeasible side
      const Vec toward = (x - obs[j].center).normalized();
      EXPECT_LT(ws.halfplanes[j].margin(obs[j].center + obs[j].radius * toward), 0.0);
    }
  }
  EXPECT_GT(built, 800);
}

TEST(Barrier, WeightSchedule) {
  EXPECT_DOUBLE_EQ(barrier_weight(0, 1.0, 0.1), 1.0);
  double prev = barrier_weight(0, 1.0, 0.1);
  for (int k = 1; k < 500; ++k) {
    const double l = barrier_weight(k, 1.0, 0.1);
    EXPECT_LT(l, prev);
    prev = l;
  }
  EXPECT_LT(prev, 1e-20);
}

TEST(Barrier, GradientMatchesFiniteDifferences) {
  Rng r(2);
  const auto obs = two_obstacles();
  const Vec anchor{{-1.0, 1.2}};
  const Workspace ws = build_workspace(anchor, obs);
  const Vec target{{1.3, -0.4}};
  int tested = 0;
  while (tested < 50) {
    const Vec x = anchor + Vec{{r.uniform(-0.4, 0.4), r.uniform(-0.4, 0.4)}};
    if (ws.min_margin(x) < 0.05) continue;
    const int k = static_cast<int>(r.below(20));
    auto f = [&](const Vec& y) { return barrier_cost(y, k, ws, target); };
    EXPECT_LE(rel_err(barrier_gradient(x, k, ws, target), fd_gradient(f, x)), 1e-5);
    ++tested;
  }
}

TEST(Barrier, LambdaZeroIsPureQuadratic) {
  const Workspace ws = build_workspace(Vec{{-1.0, 1.0}}, two_obstacles());
  const Vec x{{-1.1, 0.9}}, target{{0.2, 0.3}};
  EXPECT_DOUBLE_EQ(barrier_cost(x, 5, ws, target, 0.0, 0.1), 0.5 * (x - target).squaredNorm());
}

TEST(Barrier, StrictlyDecreasingInMargin) {
  // Moving away from an obstacle along its normal increases that margin only.
  const Workspace ws = build_workspace(Vec{{0.0, 0.0}}, {{Vec{{2.0, 0.0}}, 1.0}});
  const Vec target{{0.0, 0.0}};
  // Remove the quadratic part's influence by comparing with it subtracted.
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 20; ++i) {
    const Vec x{{0.45 - 0.05 * i, 0.0}};
    const double barrier_only = barrier_cost(x, 0, ws, target) - 0.5 * x.squaredNorm();
    EXPECT_LT(barrier_only, prev);
    prev = barrier_only;
  }
}

TEST(Barrier, OutsideDomainRaises) {
  const Workspace ws = build_workspace(Vec{{0.0, 0.0}}, {{Vec{{2.0, 0.0}}, 1.0}});
  const Vec x{{0.7, 0.0}};
  EXPECT_THROW(barrier_cost(x, 0, ws, Vec::Zero(2)), Error);
  try {
    barrier_gradient(x, 0, ws, Vec::Zero(2));
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BarrierDomain);
  }
  EXPECT_TRUE(barrier_gradient(x, 0, ws, Vec::Zero(2), 1.0, 0.1, 0.005).allFinite());
}

TEST(TrackingCost, AtCheckpointWithoutObstaclesGradientIsZero) {
  WaypointSchedule sched{{Vec{{0.5, -0.5}}, Vec{{1.0, 1.0}}}, 0.1};
  const CostSpec spec = make_tracking_cost(sched, {}, {}, 3, 4.0);
  const StageCost st = spec.stage({0, Vec{{0.5, -0.5, 0.2}}, 0, std::nullopt});
  EXPECT_EQ(st.grad_psi(Vec{{0.5, -0.5, 1.0}}), Vec::Zero(3));
  Rng r(3);
  for (int i = 0; i < 20; ++i) {
    const Vec u{{r.uniform(-3, 3), r.uniform(-3, 3)}};
    EXPECT_EQ(st.phi(u), 0.0);
    EXPECT_EQ(st.grad_phi(u), Vec::Zero(2));
  }
}

TEST(TrackingCost, GradientsMatchAndStrongConvexity) {
  WaypointSchedule sched{{Vec{{1.2, -0.4}}}, 0.1};
  const auto obs = two_obstacles();
  const CostSpec spec = make_tracking_cost(sched, obs, {}, 3, 5.657);
  const PlantModel uni = make_unicycle_plant(1.0);
  const Vec xh{{-1.0, -1.0, 0.3}};
  const StageCost st = spec.stage({2, xh, 0, std::nullopt});
  ASSERT_TRUE(st.workspace);
  Rng r(4);
  int tested = 0;
  while (tested < 100) {
    const Vec u{{xh(0) + r.uniform(-0.4, 0.4), xh(1) + r.uniform(-0.4, 0.4)}};
    const Vec v{{xh(0) + r.uniform(-0.4, 0.4), xh(1) + r.uniform(-0.4, 0.4)}};
    const Vec xu = uni.steady_state(u, Vec::Zero(1)), xv = uni.steady_state(v, Vec::Zero(1));
    if (!st.in_domain(xu) || !st.in_domain(xv)) continue;
    auto g = [&](const Vec& p) -> Vec {
      return st.grad_phi(p) + uni.input_jacobian(p).transpose() * st.grad_psi(uni.steady_state(p, Vec::Zero(1)));
    };
    EXPECT_GE((g(u) - g(v)).dot(u - v), spec.mu * (u - v).squaredNorm() * (1 - 1e-12));
    auto f = [&](const Vec& y) { return st.psi(y); };
    const Vec y{{xu(0), xu(1), 0.4}};
    EXPECT_LE(rel_err(st.grad_psi(y), fd_gradient(f, y)), 1e-5);
    ++tested;
  }
}

TEST(TrackingCost, FallsBackToPreviousWorkspace) {
  WaypointSchedule sched{{Vec{{1.2, -0.4}}}, 0.1};
  const auto obs = two_obstacles();
  const CostSpec spec = make_tracking_cost(sched, obs, {}, 3, 5.657);
  const Workspace prev = build_workspace(Vec{{-1.0, 0.0}}, obs);
  const StageCost st = spec.stage({1, Vec{{0.05, 0.0, 0.0}}, 0, prev});
  EXPECT_TRUE(st.workspace_reused);
  EXPECT_THROW(spec.stage({1, Vec{{0.05, 0.0, 0.0}}, 0, std::nullopt}), Error);
}

TEST(WaypointSchedule, AdvancesInOrderAndNeverBack) {
  WaypointSchedule s{{Vec{{0.0, 0.0}}, Vec{{1.0, 0.0}}, Vec{{2.0, 0.0}}}, 0.1};
  EXPECT_EQ(s.advance(0, Vec{{0.5, 0.0}}), 0);
  EXPECT_EQ(s.advance(0, Vec{{0.05, 0.0}}), 1);
  EXPECT_EQ(s.advance(1, Vec{{0.05, 0.0}}), 1);
  EXPECT_EQ(s.advance(2, Vec{{2.0, 0.0}}), 2);
}

TEST(QuadraticCost, IdentityWeightsGiveMuEllTwo) {
  const Mat i2 = Mat::Identity(2, 2);
  const CostSpec c = make_quadratic_cost(
      i2, i2, [](int) -> Vec { return Vec::Zero(2); }, [](int) -> Vec { return Vec::Zero(2); }, i2);
  EXPECT_NEAR(c.mu, 2.0, 1e-14);
  EXPECT_NEAR(c.composite_lipschitz(1.0), 2.0, 1e-14);
}

TEST(QuadraticCost, GradientsAndReferencePoint) {
  Mat ru(2, 2), rx(3, 3), h(3, 2);
  ru << 2, 0.3, 0.3, 1;
  rx << 1, 0.2, 0, 0.2, 3, 0.1, 0, 0.1, 2;
  h << 1, 0, 0, 1, 0.5, -0.5;
  const CostSpec c = make_quadratic_cost(
      ru, rx, [](int k) -> Vec { return Vec{{0.1 * k, -1.0}}; },
      [](int k) -> Vec { return Vec{{1.0, 0.0, -0.02 * k}}; }, h);
  const StageCost st = c.stage({4, Vec::Zero(3), 0, std::nullopt});
  EXPECT_EQ(st.grad_phi(Vec{{0.4, -1.0}}), Vec::Zero(2));
  EXPECT_LE(st.grad_psi(Vec{{1.0, 0.0, -0.08}}).norm(), 1e-16);
  Rng r(5);
  for (int i = 0; i < 50; ++i) {
    const Vec u{{r.uniform(-2, 2), r.uniform(-2, 2)}};
    const Vec x{{r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2)}};
    EXPECT_LE(rel_err(st.grad_phi(u), fd_gradient(st.phi, u)), 1e-5);
    EXPECT_LE(rel_err(st.grad_psi(x), fd_gradient(st.psi, x)), 1e-5);
  }
  EXPECT_NEAR(c.mu, linalg::lambda_min_sym(ru + h.transpose() * rx * h), 1e-14);
}

TEST(QuadraticCost, RejectsNonSpd) {
  const Mat i2 = Mat::Identity(2, 2);
  Mat bad(2, 2);
  bad << 1, 0, 0, -1;
  auto zero = [](int) -> Vec { return Vec::Zero(2); };
  try {
    make_quadratic_cost(bad, i2, zero, zero, i2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidCost);
  }
  EXPECT_THROW(make_quadratic_cost(i2, bad, zero, zero, i2), Error);
}
