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

#ifndef FBOPT_PLANT_HPP
#define FBOPT_PLANT_HPP

/**
 * @file
 * @brief Plant models x' = f(x, u, w) with a known steady-state map
 * h(u, w) = h_u(u) + h_w(w), and a fixed-step RK4 flow map.
 *
 * Two plants ship with the library: a Hurwitz LTI system whose Lyapunov
 * constants are exact, and a unicycle closed with a polar-coordinate
 * stabilizer whose input is a commanded position.
 */

#include "fbopt/common.hpp"
#include "fbopt/linalg.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fbopt {

/// Constants of the quadratic-sandwich Lyapunov function
/// d1 |x~|^2 <= V <= d2 |x~|^2,  dV/dt <= -d3 V + sigma_w(|w'|),
/// with sigma_w(s) = sigma_w_gain * s^2.
struct PlantConstants {
  double d1 = 1.0;
  double d2 = 1.0;
  double d3 = 1.0;
  double ell_hu = 0.0;
  double ell_hw = 0.0;
  double sigma_w_gain = 0.0;
  bool empirical = false;  // estimated from simulation rather than derived

  double sigma_w(double s) const { return sigma_w_gain * s * s; }
  /// sqrt(sigma_w), the class-K function entering the per-sample recursion.
  double sigma_w_sqrt(double s) const { return std::sqrt(sigma_w_gain) * s; }
};

struct DisturbanceSignal {
  std::function<Vec(double)> value;
  std::function<Vec(double)> rate;
  double sup_rate = 0.0;

  static DisturbanceSignal constant(const Vec& w) {
    const Eigen::Index n = w.size();
    return {[w](double) { return w; }, [n](double) { return Vec::Zero(n); }, 0.0};
  }

  /// w(t) = bias + amplitude .* sin(omega t + phase), omega in rad per time unit.
  static DisturbanceSignal sinusoid(const Vec& bias, const Vec& amplitude, double omega,
                                    const Vec& phase) {
    require(bias.size() == amplitude.size() && phase.size() == amplitude.size(),
            ErrorKind::Validation, "sinusoid: dimension mismatch");
    auto value = [=](double t) -> Vec {
      return bias + amplitude.cwiseProduct(
                        (omega * t + phase.array()).sin().matrix());
    };
    auto rate = [=](double t) -> Vec {
      return omega * amplitude.cwiseProduct((omega * t + phase.array()).cos().matrix());
    };
    return {value, rate, std::abs(omega) * amplitude.norm()};
  }

  static DisturbanceSignal ramp(const Vec& w0, const Vec& slope) {
    require(w0.size() == slope.size(), ErrorKind::Validation, "ramp: dimension mismatch");
    return {[=](double t) -> Vec { return w0 + t * slope; },
            [=](double) -> Vec { return slope; }, slope.norm()};
  }
};

struct PlantModel {
  std::string name;
  Eigen::Index state_dim = 0;
  Eigen::Index input_dim = 0;
  Eigen::Index dist_dim = 0;
  /// Leading state components that enter tracking-error norms.
  Eigen::Index tracked_dim = 0;

  std::function<Vec(const Vec& x, const Vec& u, const Vec& w)> vector_field;
  std::function<Vec(const Vec& u)> steady_state_u;
  std::function<Vec(const Vec& w)> steady_state_w;
  std::function<Mat(const Vec& u)> input_jacobian;
  /// Applied after every integration step (heading wrap); may be empty.
  std::function<void(Vec& x)> normalize;

  PlantConstants constants;
  /// V(x~) = x~^T P x~ when the plant has an explicit Lyapunov function.
  std::optional<Mat> lyapunov_matrix;

  Vec steady_state(const Vec& u, const Vec& w) const {
    return steady_state_u(u) + steady_state_w(w);
  }

  std::optional<double> lyapunov_value(const Vec& x, const Vec& u, const Vec& w) const {
    if (!lyapunov_matrix) return std::nullopt;
    const Vec e = x - steady_state(u, w);
    return e.dot(*lyapunov_matrix * e);
  }

  /// Norm over the tracked components only.
  double tracked_norm(const Vec& dx) const { return dx.head(tracked_dim).norm(); }
};

// ---------------------------------------------------------------------------
// Flow map

using FlowObserver = std::function<void(double t, const Vec& x)>;

/// X(t0 + tau) under x' = f(x, u, w(t)) with u held constant, classical RK4
/// with step tau / substeps. The observer, when set, sees every substep end.
inline Vec integrate_flow(const PlantModel& plant, const Vec& x0, const Vec& u,
                          const DisturbanceSignal& w, double t0, double tau, int substeps,
                          const FlowObserver& observer = {}) {
  require(tau > 0.0, ErrorKind::Validation, "integrate_flow: tau must be positive");
  require(substeps >= 1, ErrorKind::Validation, "integrate_flow: substeps must be >= 1");
  require(x0.size() == plant.state_dim, ErrorKind::Shape, "integrate_flow: state size");
  require(u.size() == plant.input_dim, ErrorKind::Shape, "integrate_flow: input size");
  require(all_finite(x0), ErrorKind::IntegrationDiverged, "initial state is not finite");

  const double h = tau / substeps;
  Vec x = x0;
  for (int i = 0; i < substeps; ++i) {
    const double t = t0 + i * h;
    const Vec w0 = w.value(t);
    const Vec wm = w.value(t + 0.5 * h);
    const Vec w1 = w.value(t + h);
    const Vec k1 = plant.vector_field(x, u, w0);
    const Vec k2 = plant.vector_field(x + 0.5 * h * k1, u, wm);
    const Vec k3 = plant.vector_field(x + 0.5 * h * k2, u, wm);
    const Vec k4 = plant.vector_field(x + h * k3, u, w1);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (plant.normalize) plant.normalize(x);
    if (!all_finite(x))
      throw Error(ErrorKind::IntegrationDiverged,
                  "non-finite state at substep " + std::to_string(i));
    if (observer) observer(t + h, x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// LTI reference plant

/// f = A x + B u + E w with A Hurwitz. V = x~^T P x~ where A^T P + P A = -Q.
///
/// Along x~ = x - h(u, w) with constant u:  dx~/dt = A x~ - J w',  J = -A^{-1} E, so
///   dV/dt = -x~^T Q x~ - 2 x~^T P J w'
///         <= -(lmin(Q)/2) |x~|^2 + (2 |P J|^2 / lmin(Q)) |w'|^2      (Young)
///         <= -(lmin(Q) / (2 lmax(P))) V + c_sigma |w'|^2.
inline PlantModel make_lti_plant(const Mat& a, const Mat& b, const Mat& e, const Mat& q) {
  const Eigen::Index n = a.rows();
  require(a.cols() == n && n > 0, ErrorKind::Validation, "A must be square");
  require(b.rows() == n && b.cols() > 0, ErrorKind::Validation, "B has wrong row count");
  require(e.rows() == n && e.cols() > 0, ErrorKind::Validation, "E has wrong row count");
  require(q.rows() == n && q.cols() == n, ErrorKind::Validation, "Q has wrong shape");
  require(linalg::is_spd(q), ErrorKind::Validation, "Q must be symmetric positive definite");
  if (!linalg::is_hurwitz(a))
    throw Error(ErrorKind::CertificateUnavailable, "A is not Hurwitz");

  const Eigen::PartialPivLU<Mat> lu(a);
  const Mat hu = -lu.solve(b);
  const Mat hw = -lu.solve(e);
  const Mat p = linalg::solve_lyapunov(a, q);

  PlantConstants c;
  const double lq = linalg::lambda_min_sym(q);
  c.d1 = linalg::lambda_min_sym(p);
  c.d2 = linalg::lambda_max_sym(p);
  c.d3 = lq / (2.0 * c.d2);
  c.ell_hu = linalg::norm2(hu);
  c.ell_hw = linalg::norm2(hw);
  const double phw = linalg::norm2(p * hw);
  c.sigma_w_gain = 2.0 * phw * phw / lq;

  PlantModel plant;
  plant.name = "lti";
  plant.state_dim = n;
  plant.input_dim = b.cols();
  plant.dist_dim = e.cols();
  plant.tracked_dim = n;
  plant.vector_field = [a, b, e](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    return a * x + b * u + e * w;
  };
  plant.steady_state_u = [hu](const Vec& u) -> Vec { return hu * u; };
  plant.steady_state_w = [hw](const Vec& w) -> Vec { return hw * w; };
  plant.input_jacobian = [hu](const Vec&) -> Mat { return hu; };
  plant.constants = c;
  plant.lyapunov_matrix = p;
  return plant;
}

// ---------------------------------------------------------------------------
// Unicycle with position-command stabilizer

/// Planar pose; heading kept in (-pi, pi].
struct UnicycleState {
  double a = 0.0;
  double b = 0.0;
  double theta = 0.0;

  Vec to_vec() const { return Vec{{a, b, theta}}; }
  static UnicycleState from_vec(const Vec& x) { return {x(0), x(1), wrap_angle(x(2))}; }
};

struct StabilizerCommand {
  double v = 0.0;      // forward speed
  double omega = 0.0;  // turn rate
  double xi = 0.0;     // distance to the commanded position
  double phi = 0.0;    // bearing error, wrapped
};

/// Below this distance the bearing is undefined; the stabilizer treats phi as 0.
inline constexpr double kUnicycleXiThreshold = 1e-9;

/// v = kappa xi cos(phi),  omega = kappa (cos(phi) + 1) sin(phi) + kappa phi.
inline StabilizerCommand unicycle_stabilizer(double kappa, const Vec& x, const Vec& u) {
  StabilizerCommand cmd;
  const double da = u(0) - x(0);
  const double db = u(1) - x(1);
  cmd.xi = std::hypot(da, db);
  if (cmd.xi < kUnicycleXiThreshold) return cmd;  // removable singularity at the target
  cmd.phi = wrap_angle(std::atan2(db, da) - x(2));
  cmd.v = kappa * cmd.xi * std::cos(cmd.phi);
  cmd.omega = kappa * (std::cos(cmd.phi) + 1.0) * std::sin(cmd.phi) + kappa * cmd.phi;
  return cmd;
}

/// State (a, b, theta), input a commanded position (u_a, u_b). The
/// disturbance channel is one-dimensional and has no effect.
inline PlantModel make_unicycle_plant(double kappa) {
  require(kappa > 0.0, ErrorKind::Validation, "kappa must be positive");
  PlantModel plant;
  plant.name = "unicycle";
  plant.state_dim = 3;
  plant.input_dim = 2;
  plant.dist_dim = 1;
  plant.tracked_dim = 2;
  plant.vector_field = [kappa](const Vec& x, const Vec& u, const Vec&) -> Vec {
    const StabilizerCommand cmd = unicycle_stabilizer(kappa, x, u);
    return Vec{{cmd.v * std::cos(x(2)), cmd.v * std::sin(x(2)), cmd.omega}};
  };
  // Heading at equilibrium is arbitrary; it is excluded from tracking norms.
  plant.steady_state_u = [](const Vec& u) -> Vec { return Vec{{u(0), u(1), 0.0}}; };
  plant.steady_state_w = [](const Vec&) -> Vec { return Vec::Zero(3); };
  plant.input_jacobian = [](const Vec&) -> Mat {
    Mat h = Mat::Zero(3, 2);
    h(0, 0) = 1.0;
    h(1, 1) = 1.0;
    return h;
  };
  plant.normalize = [](Vec& x) { x(2) = wrap_angle(x(2)); };
  plant.constants.ell_hu = 1.0;
  plant.constants.ell_hw = 0.0;
  plant.constants.sigma_w_gain = 0.0;
  plant.constants.empirical = true;
  return plant;
}

// ---------------------------------------------------------------------------
// Numerical Lyapunov constants

struct LyapunovProbe {
  Vec x0;
  Vec u;
};

struct ProbeFit {
  double initial_error = 0.0;
  double final_error = 0.0;
  double rate = 0.0;       // fitted decay rate of |x~(t)|
  double overshoot = 1.0;  // max |x~(t)| e^{a t} / |x~(0)| with a the certified rate
  bool skipped = false;    // started at equilibrium
};

struct LyapunovEstimate {
  PlantConstants constants;
  std::vector<ProbeFit> fits;
  double slowest_rate = 0.0;  // slowest |x~| decay; the V rate is twice this
};

struct LyapunovOptions {
  int samples = 400;            // trace points over the horizon
  int substeps_per_sample = 4;  // RK4 steps between trace points
  double noise_floor = 1e-10;   // errors below this are excluded from the fit
};

/// Simulates each probe with the disturbance frozen at zero, fits |x~(t)| ~ c e^{-a t},
/// and returns constants of V(x) = sup_s e^{2 a' s} |x~(s)|^2 with a' half the slowest
/// fitted rate: d1 = 1, d2 = max overshoot^2, d3 = 2 a'.
inline LyapunovEstimate estimate_lyapunov_constants(const PlantModel& plant,
                                                    const std::vector<LyapunovProbe>& probes,
                                                    double horizon,
                                                    const LyapunovOptions& opt = {}) {
  require(!probes.empty(), ErrorKind::Validation, "probe set is empty");
  require(horizon > 0.0, ErrorKind::Validation, "horizon must be positive");
  const auto w = DisturbanceSignal::constant(Vec::Zero(plant.dist_dim));
  const double dt = horizon / opt.samples;

  LyapunovEstimate est;
  std::vector<std::vector<double>> traces;
  double slowest = std::numeric_limits<double>::infinity();

  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& probe = probes[i];
    const Vec target = plant.steady_state(probe.u, Vec::Zero(plant.dist_dim));
    std::vector<double> err{plant.tracked_norm(probe.x0 - target)};
    ProbeFit fit;
    fit.initial_error = err.front();
    if (fit.initial_error < opt.noise_floor) {
      fit.skipped = true;
      est.fits.push_back(fit);
      traces.emplace_back();
      continue;
    }
    Vec x = probe.x0;
    for (int s = 0; s < opt.samples; ++s) {
      x = integrate_flow(plant, x, probe.u, w, s * dt, dt, opt.substeps_per_sample);
      err.push_back(plant.tracked_norm(x - target));
    }
    fit.final_error = err.back();
    double min_err = err.front();
    for (double e : err) min_err = std::min(min_err, e);
    if (min_err > 0.1 * fit.initial_error)
      throw Error(ErrorKind::StabilityEstimateFailed,
                  "probe " + std::to_string(i) + " did not decay below 10% of its initial error");

    // least-squares slope of log error against time, above the noise floor
    double st = 0, sy = 0, stt = 0, sty = 0;
    int m = 0;
    for (std::size_t s = 0; s < err.size(); ++s) {
      if (err[s] < opt.noise_floor) break;
      const double t = s * dt;
      const double y = std::log(err[s]);
      st += t;
      sy += y;
      stt += t * t;
      sty += t * y;
      ++m;
    }
    const double denom = m * stt - st * st;
    fit.rate = denom > 0 ? -(m * sty - st * sy) / denom : 0.0;
    if (!(fit.rate > 0.0))
      throw Error(ErrorKind::StabilityEstimateFailed,
                  "probe " + std::to_string(i) + " has a non-positive fitted decay rate");
    slowest = std::min(slowest, fit.rate);
    est.fits.push_back(fit);
    traces.push_back(std::move(err));
  }
  require(std::isfinite(slowest), ErrorKind::StabilityEstimateFailed,
          "every probe started at equilibrium");

  const double certified = 0.5 * slowest;
  double overshoot = 1.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (est.fits[i].skipped) continue;
    const auto& err = traces[i];
    double k = 1.0;
    for (std::size_t s = 0; s < err.size() && err[s] >= opt.noise_floor; ++s)
      k = std::max(k, err[s] * std::exp(certified * s * dt) / err.front());
    est.fits[i].overshoot = k;
    overshoot = std::max(overshoot, k);
  }

  est.slowest_rate = slowest;
  est.constants = plant.constants;
  est.constants.d1 = 1.0;
  est.constants.d2 = overshoot * overshoot;
  est.constants.d3 = 2.0 * certified;
  est.constants.empirical = true;
  return est;
}

}  // namespace fbopt

#endif  // FBOPT_PLANT_HPP
