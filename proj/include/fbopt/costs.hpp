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

#ifndef FBOPT_COSTS_HPP
#define FBOPT_COSTS_HPP

/**
 * @file
 * @brief Sample-indexed costs phi_k(u), psi_k(x) with analytic gradients.
 *
 * A CostSpec is a factory of StageCost snapshots. Time-only costs ignore the
 * context; the waypoint/obstacle cost freezes a free workspace built around
 * the state estimate available at sample k.
 */

#include "fbopt/common.hpp"
#include "fbopt/linalg.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fbopt {

struct Obstacle {
  Vec center;  // position
  double radius = 0.0;
};

/// One separating half-plane, stored so that margin(x) = offset - normal^T x is
/// positive on the vehicle side. normal = obstacle center - x_k.
struct HalfPlane {
  Vec normal;
  double offset = 0.0;

  double margin(const Vec& pos) const { return offset - normal.dot(pos); }
};

/// Polyhedral obstacle-free neighbourhood built at one position.
struct Workspace {
  std::vector<HalfPlane> halfplanes;
  Vec built_at;
  std::vector<int> obstacle_ids;

  bool contains(const Vec& pos) const {
    for (const auto& hp : halfplanes)
      if (hp.margin(pos) <= 0.0) return false;
    return true;
  }

  double min_margin(const Vec& pos) const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& hp : halfplanes) m = std::min(m, hp.margin(pos));
    return m;
  }
};

/// For each obstacle the boundary passes through the midpoint between the
/// vehicle and the nearest point of the obstacle surface, orthogonal to the
/// segment joining vehicle and centre.
inline Workspace build_workspace(const Vec& position, const std::vector<Obstacle>& obstacles) {
  Workspace ws;
  ws.built_at = position;
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const auto& ob = obstacles[i];
    require(ob.radius > 0.0, ErrorKind::Validation, "obstacle radius must be positive");
    require(ob.center.size() == position.size(), ErrorKind::Shape, "obstacle dimension");
    const Vec a = ob.center - position;
    const double dist = a.norm();
    if (dist <= ob.radius)
      throw Error(ErrorKind::InfeasibleWorkspace,
                  "position lies inside obstacle " + std::to_string(i));
    const Vec mid = position + a * (1.0 - ob.radius / dist) / 2.0;
    ws.halfplanes.push_back({a, a.dot(mid)});
    ws.obstacle_ids.push_back(static_cast<int>(i));
  }
  return ws;
}

inline double barrier_weight(int k, double lambda0, double decay) {
  return lambda0 * std::exp(-decay * k);
}

/// 0.5 |x - target|^2 - lambda_k sum_i log(margin_i(x)).
inline double barrier_cost(const Vec& pos, int k, const Workspace& ws, const Vec& target,
                           double lambda0 = 1.0, double decay = 0.1) {
  const double lambda = barrier_weight(k, lambda0, decay);
  double value = 0.5 * (pos - target).squaredNorm();
  for (std::size_t i = 0; i < ws.halfplanes.size(); ++i) {
    const double m = ws.halfplanes[i].margin(pos);
    if (m <= 0.0)
      throw Error(ErrorKind::BarrierDomain,
                  "non-positive margin for obstacle " + std::to_string(ws.obstacle_ids[i]));
    value -= lambda * std::log(m);
  }
  return value;
}

/// Gradient of barrier_cost. With clamp_margin set, margins are floored at that
/// value instead of raising (used when an estimate lands outside the workspace).
inline Vec barrier_gradient(const Vec& pos, int k, const Workspace& ws, const Vec& target,
                            double lambda0 = 1.0, double decay = 0.1,
                            std::optional<double> clamp_margin = std::nullopt) {
  const double lambda = barrier_weight(k, lambda0, decay);
  Vec g = pos - target;
  for (std::size_t i = 0; i < ws.halfplanes.size(); ++i) {
    double m = ws.halfplanes[i].margin(pos);
    if (clamp_margin) {
      m = std::max(m, *clamp_margin);
    } else if (m <= 0.0) {
      throw Error(ErrorKind::BarrierDomain,
                  "non-positive margin for obstacle " + std::to_string(ws.obstacle_ids[i]));
    }
    g += lambda * ws.halfplanes[i].normal / m;
  }
  return g;
}

// ---------------------------------------------------------------------------

using ScalarFn = std::function<double(const Vec&)>;
using GradFn = std::function<Vec(const Vec&)>;

/// phi_k and psi_k frozen at one sample.
struct StageCost {
  ScalarFn phi;
  GradFn grad_phi;
  ScalarFn psi;
  GradFn grad_psi;
  /// Margin-clamped grad_psi for barrier costs; empty for costs defined everywhere.
  GradFn grad_psi_clamped;
  /// Free workspace this stage was built on, if any.
  std::optional<Workspace> workspace;
  /// Active target index for waypoint costs.
  int target_index = 0;
  /// Set when the workspace could not be rebuilt and the fallback was used.
  bool workspace_reused = false;
  /// Returns false where psi is undefined (outside the workspace).
  std::function<bool(const Vec& x)> in_domain;
};

/// Everything a stage may depend on besides k.
struct CostContext {
  int k = 0;
  Vec x_hat;
  int target_index = 0;
  /// Workspace to fall back on when none can be built at x_hat.
  std::optional<Workspace> fallback_workspace;
};

struct CostSpec {
  std::string name;
  std::function<StageCost(const CostContext&)> stage;
  double mu = 0.0;     // strong convexity of the composite cost
  double ell_u = 0.0;  // Lipschitz constant of grad phi
  double ell_x = 0.0;  // Lipschitz constant of grad psi

  /// l = l_u + l_hu^2 l_x.
  double composite_lipschitz(double ell_hu) const { return ell_u + ell_hu * ell_hu * ell_x; }
};

using RefFn = std::function<Vec(int k)>;

/// phi = 0.5 (u - u_ref)^T Ru (u - u_ref), psi = 0.5 (x - x_ref)^T Rx (x - x_ref).
/// mu uses the constant input Jacobian h_jacobian: mu = lmin(Ru + H^T Rx H).
inline CostSpec make_quadratic_cost(const Mat& ru, const Mat& rx, RefFn u_ref, RefFn x_ref,
                                    const Mat& h_jacobian) {
  if (!linalg::is_spd(ru)) throw Error(ErrorKind::InvalidCost, "Ru is not SPD");
  if (!linalg::is_spd(rx)) throw Error(ErrorKind::InvalidCost, "Rx is not SPD");
  require(h_jacobian.rows() == rx.rows() && h_jacobian.cols() == ru.rows(), ErrorKind::Shape,
          "quadratic cost: Jacobian shape does not match Ru/Rx");

  CostSpec spec;
  spec.name = "quadratic";
  spec.mu = linalg::lambda_min_sym(ru + h_jacobian.transpose() * rx * h_jacobian);
  spec.ell_u = linalg::lambda_max_sym(ru);
  spec.ell_x = linalg::lambda_max_sym(rx);
  spec.stage = [ru, rx, u_ref, x_ref](const CostContext& ctx) {
    const Vec ur = u_ref(ctx.k);
    const Vec xr = x_ref(ctx.k);
    StageCost s;
    s.phi = [ru, ur](const Vec& u) { return 0.5 * (u - ur).dot(ru * (u - ur)); };
    s.grad_phi = [ru, ur](const Vec& u) -> Vec { return ru * (u - ur); };
    s.psi = [rx, xr](const Vec& x) { return 0.5 * (x - xr).dot(rx * (x - xr)); };
    s.grad_psi = [rx, xr](const Vec& x) -> Vec { return rx * (x - xr); };
    s.in_domain = [](const Vec&) { return true; };
    s.target_index = ctx.target_index;
    return s;
  };
  return spec;
}

/// Ordered checkpoints; the target advances when the position estimate enters
/// the capture radius of the current one.
struct WaypointSchedule {
  std::vector<Vec> checkpoints;
  double capture_radius = 0.1;

  /// Index after applying the switching rule at position pos.
  int advance(int current, const Vec& pos) const {
    const int last = static_cast<int>(checkpoints.size()) - 1;
    if (current < last && (pos - checkpoints[current]).norm() < capture_radius)
      return current + 1;
    return current;
  }
};

struct TrackingCostOptions {
  double lambda0 = 1.0;
  double decay = 0.1;
  double min_margin = 0.05;  // operating region for the declared constants
};

/// Waypoint tracking with log-barrier obstacle avoidance on a state whose first
/// two components are a planar position. phi = 0.
///
/// Declared constants hold on {x : margin_i(x) >= min_margin}:
///   Hessian of psi = I + lambda sum a_i a_i^T / margin_i^2, so mu = 1 and
///   l_x <= 1 + lambda0 sum |a_i|^2 / min_margin^2, bounded here by the largest
///   obstacle distance in the arena.
inline CostSpec make_tracking_cost(const WaypointSchedule& schedule,
                                   const std::vector<Obstacle>& obstacles,
                                   const TrackingCostOptions& opt, Eigen::Index state_dim,
                                   double arena_diameter) {
  require(!schedule.checkpoints.empty(), ErrorKind::Validation, "schedule has no checkpoints");
  require(schedule.capture_radius > 0.0, ErrorKind::Validation, "capture radius must be > 0");
  require(state_dim >= 2, ErrorKind::Shape, "tracking cost needs a planar position");
  require(opt.min_margin > 0.0, ErrorKind::Validation, "min_margin must be positive");

  CostSpec spec;
  spec.name = "tracking";
  spec.mu = 1.0;
  spec.ell_u = 0.0;
  double curvature = 0.0;
  for (std::size_t i = 0; i < obstacles.size(); ++i)
    curvature += arena_diameter * arena_diameter;
  spec.ell_x = 1.0 + opt.lambda0 * curvature / (opt.min_margin * opt.min_margin);

  spec.stage = [schedule, obstacles, opt, state_dim](const CostContext& ctx) {
    const Vec target = schedule.checkpoints.at(ctx.target_index);
    const Vec pos_hat = ctx.x_hat.head(2);
    StageCost s;
    Workspace ws;
    try {
      ws = build_workspace(pos_hat, obstacles);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InfeasibleWorkspace || !ctx.fallback_workspace) throw;
      ws = *ctx.fallback_workspace;
      s.workspace_reused = true;
    }
    const int k = ctx.k;
    const Eigen::Index n_u = 2;

    s.workspace = ws;
    s.target_index = ctx.target_index;
    s.phi = [](const Vec&) { return 0.0; };
    s.grad_phi = [n_u](const Vec&) -> Vec { return Vec::Zero(n_u); };
    s.psi = [=](const Vec& x) {
      return barrier_cost(x.head(2), k, ws, target, opt.lambda0, opt.decay);
    };
    s.grad_psi = [=](const Vec& x) -> Vec {
      Vec g = Vec::Zero(state_dim);
      g.head(2) = barrier_gradient(x.head(2), k, ws, target, opt.lambda0, opt.decay);
      return g;
    };
    s.grad_psi_clamped = [=](const Vec& x) -> Vec {
      Vec g = Vec::Zero(state_dim);
      g.head(2) = barrier_gradient(x.head(2), k, ws, target, opt.lambda0, opt.decay,
                                   opt.min_margin / 10.0);
      return g;
    };
    s.in_domain = [ws](const Vec& x) { return ws.contains(x.head(2)); };
    return s;
  };
  return spec;
}

}  // namespace fbopt

#endif  // FBOPT_COSTS_HPP
