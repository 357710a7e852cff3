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

#ifndef FBOPT_CERTIFICATES_HPP
#define FBOPT_CERTIFICATES_HPP

/**
 * @file
 * @brief Tracking certificate for the sampled closed loop.
 *
 * With omega_k = (|u_k - u*_k|, W_k), W_k = sqrt(V(x_k, u_k, w_k)),
 * nu_k = (|u*_{k+1} - u*_k|, |e_{x,k+1}|) and s_k = sqrt(sigma_w)(sup |w'|),
 * the per-sample recursion reads
 *
 *   omega_{k+1} <= M1 omega_k + M2 nu_k + M3 s_k      (componentwise),
 *
 * and a Schur M1 with |M1^k| <= r c^k yields the tracking envelope
 *
 *   |z_k| <= (r m2/m1) c^{k+1} |z_0| + b |M3| sigma(sup|w'|) + b |M2| |(Delta_u*, eps)|.
 *
 * Two flavours of M2/M3 exist: the published closed forms and the
 * coefficients that come out of the step-by-step recursion. The report keeps
 * both, the recursion oracle checks the latter, and the envelope uses the
 * larger norm of the two.
 */

#include "fbopt/common.hpp"
#include "fbopt/linalg.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fbopt {

struct CertificateInputs {
  double d1 = 1.0;
  double d2 = 1.0;
  double d3 = 1.0;
  double ell_x = 0.0;
  double ell_hu = 0.0;
  double mu = 1.0;
  double ell = 1.0;
  double eta = 0.1;
  double tau = 1.0;
  double sigma_w_gain = 0.0;  // sigma_w(s) = gain * s^2
  double sup_w_rate = 0.0;
  double delta_u_star = 0.0;
  double eps_perception = 0.0;
  bool empirical_constants = false;
};

inline double contraction_factor_w(const CertificateInputs& in) {
  return std::exp(-in.d3 * in.tau / 2.0) * std::sqrt(in.d2 / in.d1);
}

/// c_P^2 = 1 - eta (2 mu - eta l^2); nullopt when the radicand is negative.
inline std::optional<double> contraction_factor_p(const CertificateInputs& in) {
  const double rad = 1.0 - in.eta * (2.0 * in.mu - in.eta * in.ell * in.ell);
  if (rad < 0.0) return std::nullopt;
  return std::sqrt(rad);
}

inline bool step_size_ok(const CertificateInputs& in) {
  return in.eta > 0.0 && in.eta < 2.0 * in.mu / (in.ell * in.ell);
}

struct CertificateMatrices {
  Eigen::Matrix2d m1;
  Eigen::Matrix2d m2;
  Eigen::Vector2d m3;
};

namespace detail {

inline double require_cp(const CertificateInputs& in) {
  require(in.d1 > 0.0, ErrorKind::Validation, "d1 must be positive");
  if (!step_size_ok(in))
    throw Error(ErrorKind::InvalidStepSize,
                "eta=" + std::to_string(in.eta) + " is outside (0, 2mu/l^2)");
  const auto cp = contraction_factor_p(in);
  if (!cp) throw Error(ErrorKind::InvalidStepSize, "negative radicand in c_P");
  return *cp;
}

inline Eigen::Matrix2d m1_of(const CertificateInputs& in, double cw, double cp) {
  const double g = in.eta * in.ell_x * in.ell_hu;
  const double sd1 = std::sqrt(in.d1);
  Eigen::Matrix2d m;
  m << cp, g * cw / sd1,
      cw * in.ell_hu * sd1 * (1.0 + cp), cw * (1.0 + cw * g * in.ell_hu);
  return m;
}

}  // namespace detail

/// M1, M2, M3 in their published closed form (the symbol in the second row of
/// M1 is taken as l_hu).
inline CertificateMatrices build_matrices(const CertificateInputs& in) {
  const double cp = detail::require_cp(in);
  const double cw = contraction_factor_w(in);
  const double g = in.eta * in.ell_x * in.ell_hu;
  const double sd1 = std::sqrt(in.d1);
  CertificateMatrices out;
  out.m1 = detail::m1_of(in, cw, cp);
  out.m2 << 1.0, g,
      cw * in.ell_hu * sd1 * (cp + 1.0), cw * sd1 * in.ell_hu * g;
  out.m3 << cw * g * in.ell_hu * (std::sqrt(in.tau) + 1.0),
      g / sd1 * std::sqrt(in.tau);
  return out;
}

/// Coefficients of the per-sample recursion, component by component:
///   |u_{k+1} - u*_{k+1}| <= c_P |u_k - u*_k| + (g c_w/sqrt d1) W_k
///                           + c_P |du*| + g |e| + (g sqrt(tau)/sqrt d1) s
///   W_{k+1} <= c_w ell_hu sqrt(d1) (c_P+1) |u_k - u*_k| + c_w (1 + c_w g ell_hu) W_k
///              + c_w ell_hu sqrt(d1) (c_P+1) |du*| + c_w g sqrt(d1) |e|
///              + sqrt(tau) (1 + c_w g ell_hu) s
/// with g = eta l_x l_hu.
inline CertificateMatrices recursion_matrices(const CertificateInputs& in) {
  const double cp = detail::require_cp(in);
  const double cw = contraction_factor_w(in);
  const double g = in.eta * in.ell_x * in.ell_hu;
  const double sd1 = std::sqrt(in.d1);
  const double st = std::sqrt(in.tau);
  CertificateMatrices out;
  out.m1 = detail::m1_of(in, cw, cp);
  out.m2 << cp, g,
      cw * in.ell_hu * sd1 * (cp + 1.0), cw * g * sd1;
  out.m3 << g * st / sd1,
      st * (1.0 + cw * g * in.ell_hu);
  return out;
}

struct ConditionVerdict {
  bool tau_ok = false;
  bool eta_ok = false;
  bool schur_ok = false;
  double tau_threshold = 0.0;   // (1/d3) log(d2/d1)
  double spectral_radius = std::numeric_limits<double>::quiet_NaN();
};

/// Spectral radius of M1 as a function of the sampling period, other inputs fixed.
inline double spectral_radius_at(CertificateInputs in, double tau) {
  in.tau = tau;
  const double cp = detail::require_cp(in);
  return linalg::spectral_radius_2x2(detail::m1_of(in, contraction_factor_w(in), cp));
}

/// Evaluates the sufficient (tau, eta) conditions and, independently, whether
/// M1 is Schur. The Schur verdict is the operative one.
inline ConditionVerdict check_conditions(const CertificateInputs& in) {
  ConditionVerdict v;
  v.tau_threshold = std::log(in.d2 / in.d1) / in.d3;
  v.tau_ok = in.tau > v.tau_threshold;
  v.eta_ok = step_size_ok(in);
  const auto cp = contraction_factor_p(in);
  if (cp && in.d1 > 0.0) {
    v.spectral_radius =
        linalg::spectral_radius_2x2(detail::m1_of(in, contraction_factor_w(in), *cp));
    v.schur_ok = v.spectral_radius < 1.0;
  }
  return v;
}

struct PowerConstants {
  double r = 1.0;
  double c = 0.0;
  int horizon = 0;
  double min_slack = 0.0;  // min_k r c^k - |M1^k| over the horizon
};

/// c = rho + (1 - rho)/100 and r = max_{k <= horizon} |M1^k| / c^k, verified
/// by recomputing the powers.
inline PowerConstants power_constants(const Eigen::Matrix2d& m1, int horizon = 200) {
  require(horizon >= 0, ErrorKind::Validation, "horizon must be nonnegative");
  const double rho = linalg::spectral_radius_2x2(m1);
  if (!(rho < 1.0))
    throw Error(ErrorKind::NotSchur, "spectral radius " + std::to_string(rho) + " >= 1");
  PowerConstants pc;
  pc.horizon = horizon;
  pc.c = rho + (1.0 - rho) / 100.0;
  Eigen::Matrix2d power = Eigen::Matrix2d::Identity();
  std::vector<double> norms;
  for (int k = 0; k <= horizon; ++k) {
    norms.push_back(linalg::norm2(power));
    power = power * m1;
  }
  pc.r = 0.0;
  for (int k = 0; k <= horizon; ++k) pc.r = std::max(pc.r, norms[k] / std::pow(pc.c, k));
  pc.min_slack = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= horizon; ++k)
    pc.min_slack = std::min(pc.min_slack, pc.r * std::pow(pc.c, k) - norms[k]);
  return pc;
}

/// Bisection for the sampling period where the spectral radius of M1 crosses 1.
/// Requires rho(lo) >= 1 > rho(hi).
inline double schur_boundary_tau(const CertificateInputs& in, double lo, double hi,
                                 double tol = 1e-9) {
  require(spectral_radius_at(in, lo) >= 1.0 && spectral_radius_at(in, hi) < 1.0,
          ErrorKind::Validation, "bisection interval does not bracket rho = 1");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (spectral_radius_at(in, mid) >= 1.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct CertificateReport {
  CertificateInputs inputs;
  CertificateMatrices printed;    // published closed form
  CertificateMatrices recursion;  // per-sample recursion coefficients
  double c_w = 0.0;
  double c_p = 0.0;
  ConditionVerdict conditions;
  std::optional<PowerConstants> power;  // present iff M1 is Schur
  double m1 = 1.0;
  double m2 = 1.0;
  double b_printed = 0.0;       // r c / (m1 (1 + c))
  double b_conservative = 0.0;  // r c / (m1 (1 - c))
  double m2_norm = 0.0;         // max over both M2 flavours
  double m3_norm = 0.0;         // max over both M3 flavours
  std::vector<std::string> notes;

  bool schur_ok() const { return conditions.schur_ok; }
};

inline CertificateReport build_certificate(const CertificateInputs& in, int horizon = 200) {
  CertificateReport rep;
  rep.inputs = in;
  rep.printed = build_matrices(in);
  rep.recursion = recursion_matrices(in);
  rep.c_w = contraction_factor_w(in);
  rep.c_p = *contraction_factor_p(in);
  rep.conditions = check_conditions(in);
  rep.m1 = std::min(1.0, std::sqrt(in.d1));
  rep.m2 = std::max(1.0, std::sqrt(in.d2));
  rep.m2_norm = std::max(linalg::norm2(rep.printed.m2), linalg::norm2(rep.recursion.m2));
  rep.m3_norm = std::max(rep.printed.m3.norm(), rep.recursion.m3.norm());

  rep.notes.push_back("M1 second row: steady-state Lipschitz symbol read as l_hu");
  rep.notes.push_back(
      "M2: published (1,1) entry is 1 and (2,2) carries an extra l_hu factor relative to the "
      "per-sample recursion; the envelope uses the larger norm");
  rep.notes.push_back(
      "M3: published entries differ from the per-sample recursion coefficients; the recursion "
      "oracle uses the recursion coefficients");
  rep.notes.push_back(
      "b: published r c/(m1 (1+c)) reported as b_printed; envelope uses r c/(m1 (1-c))");
  rep.notes.push_back("disturbance term evaluated with sqrt(sigma_w), the recursion's gain");
  if (in.empirical_constants)
    rep.notes.push_back("Lyapunov constants are empirical (fitted from simulation)");
  if (rep.conditions.schur_ok != rep.conditions.tau_ok)
    rep.notes.push_back("Schur verdict and sampling-period condition disagree");

  if (rep.conditions.schur_ok) {
    rep.power = power_constants(rep.printed.m1, horizon);
    const double r = rep.power->r;
    const double c = rep.power->c;
    rep.b_printed = r * c / (rep.m1 * (1.0 + c));
    rep.b_conservative = r * c / (rep.m1 * (1.0 - c));
    rep.notes.push_back("power bound horizon-certified for k <= " + std::to_string(horizon));
  }
  return rep;
}

struct EnvelopeTerms {
  double value = 0.0;  // conservative envelope
  double geometric = 0.0;
  double disturbance = 0.0;
  double drift_and_perception = 0.0;
  double printed_value = 0.0;  // published b and sigma_w, for comparison
};

inline EnvelopeTerms bound_envelope(const CertificateReport& rep, const CertificateInputs& in,
                                    int k, double z0_norm) {
  if (!rep.power) throw Error(ErrorKind::NotSchur, "envelope requires a Schur M1");
  const double r = rep.power->r;
  const double c = rep.power->c;
  EnvelopeTerms t;
  t.geometric = r * rep.m2 / rep.m1 * std::pow(c, k + 1) * z0_norm;
  const double sig_sqrt = std::sqrt(in.sigma_w_gain) * in.sup_w_rate;
  const double sig = in.sigma_w_gain * in.sup_w_rate * in.sup_w_rate;
  const double drift = std::hypot(in.delta_u_star, in.eps_perception);
  t.disturbance = rep.b_conservative * rep.m3_norm * sig_sqrt;
  t.drift_and_perception = rep.b_conservative * rep.m2_norm * drift;
  t.value = t.geometric + t.disturbance + t.drift_and_perception;
  t.printed_value = t.geometric + rep.b_printed * rep.printed.m3.norm() * sig +
                    rep.b_printed * linalg::norm2(rep.printed.m2) * drift;
  return t;
}

// ---------------------------------------------------------------------------
// Recursion oracle

struct RecursionStep {
  Eigen::Vector2d omega;  // (|u_k - u*_k|, W_k)
  Eigen::Vector2d nu;     // (|u*_{k+1} - u*_k|, |e_{x,k+1}|)
  double sigma = 0.0;     // sqrt(sigma_w)(sup |w'|) over the interval
};

struct RecursionViolation {
  int k = 0;
  int component = 0;
  double excess = 0.0;
};

struct RecursionVerdict {
  std::vector<RecursionViolation> violations;
  double worst_slack = -std::numeric_limits<double>::infinity();  // max lhs - rhs
  int checked = 0;
};

/// Checks omega_{k+1} <= M1 omega_k + M2 nu_k + M3 sigma_k at every step.
inline RecursionVerdict recursion_oracle(const std::vector<RecursionStep>& steps,
                                         const CertificateMatrices& m, double rel_tol = 1e-12) {
  RecursionVerdict v;
  for (std::size_t k = 0; k + 1 < steps.size(); ++k) {
    const auto& s = steps[k];
    const Eigen::Vector2d rhs = m.m1 * s.omega + m.m2 * s.nu + m.m3 * s.sigma;
    const Eigen::Vector2d lhs = steps[k + 1].omega;
    for (int i = 0; i < 2; ++i) {
      const double excess = lhs(i) - rhs(i);
      v.worst_slack = std::max(v.worst_slack, excess);
      if (excess > rel_tol * (1.0 + std::abs(rhs(i))))
        v.violations.push_back({static_cast<int>(k), i, excess});
    }
    ++v.checked;
  }
  return v;
}

inline RecursionVerdict recursion_oracle(const std::vector<RecursionStep>& steps,
                                         const CertificateInputs& in) {
  return recursion_oracle(steps, recursion_matrices(in));
}

}  // namespace fbopt

#endif  // FBOPT_CERTIFICATES_HPP
