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

#ifndef FBOPT_CONTROLLER_HPP
#define FBOPT_CONTROLLER_HPP

/**
 * @file
 * @brief Sampled-data projected-gradient controller
 *
 *   u_k = Proj_U{ u_{k-1} - eta Psi_k(u_{k-1}, x_hat_k) },
 *   Psi_k(u, x) = grad phi_k(u) + H(u)^T grad psi_k(x),
 *
 * and the zero-order hold that turns {u_k} into a piecewise-constant u(t).
 * The controller only ever sees the state estimate x_hat_k.
 */

#include "fbopt/common.hpp"
#include "fbopt/costs.hpp"
#include "fbopt/plant.hpp"

#include <optional>
#include <variant>

namespace fbopt {

struct BoxSet {
  Vec lower;
  Vec upper;
};

struct BallSet {
  Vec center;
  double radius = 1.0;
};

/// Compact convex input set U_c.
class ConstraintSet {
 public:
  /// Empty box of dimension zero; replace before use.
  ConstraintSet() = default;

  static ConstraintSet box(const Vec& lower, const Vec& upper) {
    require(lower.size() == upper.size() && lower.size() > 0, ErrorKind::Validation,
            "box bounds must have equal positive size");
    require((lower.array() <= upper.array()).all(), ErrorKind::Validation,
            "box requires lower <= upper");
    require(lower.allFinite() && upper.allFinite(), ErrorKind::Validation,
            "box bounds must be finite");
    return ConstraintSet(BoxSet{lower, upper});
  }

  static ConstraintSet ball(const Vec& center, double radius) {
    require(center.size() > 0, ErrorKind::Validation, "ball center is empty");
    require(radius > 0.0, ErrorKind::Validation, "ball radius must be positive");
    return ConstraintSet(BallSet{center, radius});
  }

  Eigen::Index dimension() const {
    return std::visit(
        [](const auto& s) -> Eigen::Index {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, BoxSet>)
            return s.lower.size();
          else
            return s.center.size();
        },
        set_);
  }

  bool is_box() const { return std::holds_alternative<BoxSet>(set_); }
  const BoxSet& as_box() const { return std::get<BoxSet>(set_); }
  const BallSet& as_ball() const { return std::get<BallSet>(set_); }

  /// Euclidean projection.
  Vec project(const Vec& z) const {
    require(z.size() == dimension(), ErrorKind::Shape, "projection: dimension mismatch");
    if (is_box()) {
      const auto& b = as_box();
      return z.cwiseMax(b.lower).cwiseMin(b.upper);
    }
    const auto& b = as_ball();
    const Vec d = z - b.center;
    const double n = d.norm();
    if (n <= b.radius) return z;
    return b.center + d * (b.radius / n);
  }

  double distance(const Vec& z) const { return (project(z) - z).norm(); }

 private:
  explicit ConstraintSet(std::variant<BoxSet, BallSet> s) : set_(std::move(s)) {}
  std::variant<BoxSet, BallSet> set_;
};

inline Vec project(const ConstraintSet& set, const Vec& z) { return set.project(z); }

/// Largest admissible step (exclusive) for the certificate: 2 mu / l^2.
inline double max_certified_step(double mu, double ell) { return 2.0 * mu / (ell * ell); }

struct ControllerConfig {
  double eta = 0.1;
  double tau = 1.0;
  ConstraintSet constraint;

  /// Validates eta and tau; with certificate constants, also requires
  /// eta in the open interval (0, 2 mu / l^2).
  static ControllerConfig make(double eta, double tau, ConstraintSet constraint,
                               std::optional<std::pair<double, double>> mu_ell = std::nullopt) {
    require(eta > 0.0, ErrorKind::Validation, "eta must be positive");
    require(tau > 0.0, ErrorKind::Validation, "tau must be positive");
    if (mu_ell) {
      const double bound = max_certified_step(mu_ell->first, mu_ell->second);
      if (!(eta < bound))
        throw Error(ErrorKind::InvalidStepSize,
                    "eta=" + std::to_string(eta) + " is outside (0, 2mu/l^2 = " +
                        std::to_string(bound) + ")");
    }
    return ControllerConfig{eta, tau, std::move(constraint)};
  }
};

struct ControllerState {
  Vec u_prev;
  int k = 0;
};

/// Psi_k(u, x_hat) = grad phi_k(u) + H(u)^T grad psi_k(x_hat).
inline Vec gradient_map(const StageCost& stage, const PlantModel& plant, const Vec& u,
                        const Vec& x_hat) {
  return stage.grad_phi(u) + plant.input_jacobian(u).transpose() * stage.grad_psi(x_hat);
}

struct StepResult {
  Vec u;
  ControllerState state;
  bool margin_clamped = false;  // barrier evaluated with clamped margins
};

inline StepResult controller_step(const ControllerState& state, const ControllerConfig& config,
                                  const StageCost& stage, const PlantModel& plant,
                                  const Vec& x_hat) {
  StepResult out;
  Vec psi;
  try {
    psi = gradient_map(stage, plant, state.u_prev, x_hat);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::BarrierDomain || !stage.grad_psi_clamped) throw;
    psi = stage.grad_phi(state.u_prev) +
          plant.input_jacobian(state.u_prev).transpose() * stage.grad_psi_clamped(x_hat);
    out.margin_clamped = true;
  }
  out.u = config.constraint.project(state.u_prev - config.eta * psi);
  out.state = ControllerState{out.u, state.k + 1};
  return out;
}

/// u(t) = u_k on [k tau, (k+1) tau).
inline const Vec& zero_order_hold(const Vec& u_k, double t, int k, double tau) {
  const double lo = k * tau;
  const double hi = (k + 1) * tau;
  if (!(t >= lo && t < hi))
    throw Error(ErrorKind::Indexing, "t=" + std::to_string(t) + " outside sample interval " +
                                         std::to_string(k));
  return u_k;
}

}  // namespace fbopt

#endif  // FBOPT_CONTROLLER_HPP
