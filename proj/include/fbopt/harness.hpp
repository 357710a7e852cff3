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

#ifndef FBOPT_HARNESS_HPP
#define FBOPT_HARNESS_HPP

/**
 * @file
 * @brief Closed-loop executor for the sampled-data perception loop, with the
 * optimizer oracle (u*_k, x*_k) recorded alongside every sample.
 *
 * Per sample k:
 *   1. x_k = x(k tau) from the integrated flow
 *   2. x_hat_k from the perception channel (exact, noisy, or camera + network)
 *   3. stage cost k built from x_hat_k (workspace rebuilt for barrier costs)
 *   4. u_k = controller_step(u_{k-1}, x_hat_k)      (k >= 1; u_0 is given)
 *   5. u_k held over [k tau, (k+1) tau) while the plant is integrated
 * The oracle sees the true steady-state map and w_k; the controller never does.
 */

#include "fbopt/certificates.hpp"
#include "fbopt/common.hpp"
#include "fbopt/controller.hpp"
#include "fbopt/costs.hpp"
#include "fbopt/perception.hpp"
#include "fbopt/plant.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fbopt {

inline constexpr const char* kLibraryVersion = "fbopt 0.1.0";

// ---------------------------------------------------------------------------
// Oracle

struct OracleSolution {
  Vec u_star;
  Vec x_star;
  int iterations = 0;
  double residual = 0.0;
};

struct OracleOptions {
  double tolerance = 1e-12;
  int max_iterations = 100000;
};

/// Gradient of u -> phi(u) + psi(h(u, w)) through the true steady-state map.
inline Vec reduced_gradient(const PlantModel& plant, const StageCost& stage, const Vec& u,
                            const Vec& w) {
  return stage.grad_phi(u) +
         plant.input_jacobian(u).transpose() * stage.grad_psi(plant.steady_state(u, w));
}

/// |u - Proj(u - grad F(u))|, zero exactly at the constrained minimizer.
inline double fixed_point_residual(const PlantModel& plant, const StageCost& stage,
                                   const ConstraintSet& set, const Vec& u, const Vec& w) {
  return (u - set.project(u - reduced_gradient(plant, stage, u, w))).norm();
}

/// Projected gradient on the reduced cost. The step is backtracked until it
/// stays in the cost's domain and satisfies alpha |g(u+) - g(u)| <= |u+ - u|.
inline OracleSolution solve_oracle(const PlantModel& plant, const StageCost& stage,
                                   const ConstraintSet& set, const Vec& w, const Vec& warm_start,
                                   const OracleOptions& opt = {}, double mu = 1.0) {
  auto feasible = [&](const Vec& u) { return stage.in_domain(plant.steady_state(u, w)); };

  Vec u = set.project(warm_start);
  if (!feasible(u) && stage.workspace) {
    Vec start = Vec::Zero(plant.input_dim);
    start.head(2) = stage.workspace->built_at.head(2);
    u = set.project(start);
  }
  if (!feasible(u))
    throw Error(ErrorKind::OracleNotConverged, "no feasible starting point for the oracle");

  const double alpha_max = 1.0 / mu;
  double alpha = alpha_max;
  OracleSolution sol;
  Vec g = reduced_gradient(plant, stage, u, w);
  for (int it = 0; it < opt.max_iterations; ++it) {
    sol.residual = (u - set.project(u - g)).norm();
    sol.iterations = it;
    if (sol.residual <= opt.tolerance) break;
    alpha = std::min(2.0 * alpha, alpha_max);
    Vec next;
    Vec g_next;
    bool accepted = false;
    while (alpha > 1e-300) {
      next = set.project(u - alpha * g);
      if (feasible(next)) {
        g_next = reduced_gradient(plant, stage, next, w);
        if (alpha * (g_next - g).norm() <= (next - u).norm()) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted || next == u) break;  // stagnated at machine precision
    u = std::move(next);
    g = std::move(g_next);
  }
  sol.residual = (u - set.project(u - g)).norm();
  if (sol.residual > std::max(opt.tolerance, 1e-9))
    throw Error(ErrorKind::OracleNotConverged,
                "residual " + std::to_string(sol.residual) + " after " +
                    std::to_string(sol.iterations) + " iterations");
  sol.u_star = u;
  sol.x_star = plant.steady_state(u, w);
  return sol;
}

// ---------------------------------------------------------------------------
// Setup and trace

enum class PerceptionMode { Exact, Noisy, Model };

inline std::string_view to_string(PerceptionMode m) {
  switch (m) {
    case PerceptionMode::Exact: return "exact";
    case PerceptionMode::Noisy: return "noisy";
    case PerceptionMode::Model: return "model";
  }
  return "unknown";
}

struct PerceptionChannel {
  PerceptionMode mode = PerceptionMode::Exact;
  double epsilon = 0.0;  // noise radius in Noisy mode
  std::shared_ptr<const PerceptionModel> model;
  std::shared_ptr<const NoveltyDetector> novelty;
};

/// Fully materialised closed-loop experiment.
struct Setup {
  std::string name = "unnamed";
  std::string scenario_hash;
  std::uint64_t seed = 0;
  PlantModel plant;
  CostSpec cost;
  ControllerConfig config;
  DisturbanceSignal disturbance;
  PerceptionChannel perception;
  std::optional<WaypointSchedule> schedule;
  std::vector<Obstacle> obstacles;
  Vec x0;
  Vec u0;
  int horizon = 100;  // samples K
  int substeps = 50;
  bool record_fine = true;
  OracleOptions oracle;
};

enum SampleFlag : unsigned {
  kFlagMarginClamped = 1u,
  kFlagWorkspaceReused = 2u,
  kFlagOutOfDistribution = 4u,
};

struct SampleRecord {
  int k = 0;
  double t = 0.0;
  Vec x;
  Vec x_hat;
  Vec u;
  Vec u_star;
  Vec x_star;
  double z_norm = 0.0;
  std::optional<double> lyapunov_w;  // sqrt(V(x_k, u_k, w_k))
  double u_error = 0.0;              // |u_k - u*_k|
  double perception_error = 0.0;     // |x_hat_k - x_k| over tracked components
  double nu_drift = 0.0;             // |u*_{k+1} - u*_k|
  double nu_perception = 0.0;        // |x_hat_{k+1} - x_{k+1}|
  int target_index = 0;
  int workspace_id = -1;
  std::vector<double> margins;  // true position against the sample's workspace
  unsigned flags = 0;
  int oracle_iterations = 0;
  double oracle_residual = 0.0;
};

struct FineRecord {
  int k = 0;  // sampling interval the point belongs to
  double t = 0.0;
  Vec x;
  Vec u;
};

struct TraceMetadata {
  std::string scenario_name;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  std::string version = kLibraryVersion;
  std::string plant;
  std::string perception_mode;
  double tau = 0.0;
  int substeps = 0;
  int horizon = 0;
  Eigen::Index tracked_dim = 0;
  int obstacle_count = 0;
  double sup_w_rate = 0.0;
  double epsilon_declared = 0.0;  // noise radius or trained model's measured error
  std::optional<CertificateInputs> certificate;  // everything except the run-derived terms
  bool aborted = false;
  std::string abort_reason;
};

struct RunTrace {
  TraceMetadata meta;
  std::vector<SampleRecord> samples;
  std::vector<FineRecord> fine;
};

/// Stacked (x - x*, u - u*) norm over tracked state components.
inline double tracking_error(const PlantModel& plant, const Vec& x, const Vec& x_star,
                             const Vec& u, const Vec& u_star) {
  const double ex = plant.tracked_norm(x - x_star);
  const double eu = (u - u_star).norm();
  return std::hypot(ex, eu);
}

/// Certificate inputs that depend only on the setup, not on a run.
inline std::optional<CertificateInputs> static_certificate_inputs(const Setup& s) {
  const auto& c = s.plant.constants;
  if (!s.plant.lyapunov_matrix && !c.empirical) return std::nullopt;
  CertificateInputs in;
  in.d1 = c.d1;
  in.d2 = c.d2;
  in.d3 = c.d3;
  in.ell_x = s.cost.ell_x;
  in.ell_hu = c.ell_hu;
  in.mu = s.cost.mu;
  in.ell = s.cost.composite_lipschitz(c.ell_hu);
  in.eta = s.config.eta;
  in.tau = s.config.tau;
  in.sigma_w_gain = c.sigma_w_gain;
  in.sup_w_rate = s.disturbance.sup_rate;
  in.empirical_constants = c.empirical;
  return in;
}

namespace detail {

class PerceptionSampler {
 public:
  PerceptionSampler(const Setup& s) : setup_(s), rng_(s.seed * 0x2545F4914F6CDD1DULL + 17) {}

  /// Returns x_hat and sets OOD flag bits.
  Vec estimate(const Vec& x, unsigned& flags) {
    const auto& ch = setup_.perception;
    const Eigen::Index nt = setup_.plant.tracked_dim;
    switch (ch.mode) {
      case PerceptionMode::Exact:
        return x;
      case PerceptionMode::Noisy: {
        Vec dir(nt);
        for (Eigen::Index i = 0; i < nt; ++i) dir(i) = rng_.normal();
        const double n = dir.norm();
        const double mag = ch.epsilon * rng_.uniform();
        Vec x_hat = x;
        if (n > 0.0) x_hat.head(nt) += dir * (mag / n);
        return x_hat;
      }
      case PerceptionMode::Model: {
        const Vec zeta = render_observation(ch.model->map, x.head(2));
        if (ch.novelty && ch.novelty->out_of_distribution(zeta)) flags |= kFlagOutOfDistribution;
        Vec x_hat = Vec::Zero(x.size());
        x_hat.head(2) = estimate_state(*ch.model, zeta);
        return x_hat;
      }
    }
    return x;
  }

 private:
  const Setup& setup_;
  Rng rng_;
};

}  // namespace detail

/// Runs the loop. Integration, perception and oracle failures stop the run and
/// return the partial trace with meta.aborted set.
inline RunTrace run_closed_loop(const Setup& s) {
  require(s.horizon >= 1, ErrorKind::Validation, "horizon must be >= 1");
  require(s.x0.size() == s.plant.state_dim, ErrorKind::Shape, "x0 has wrong size");
  require(s.u0.size() == s.plant.input_dim, ErrorKind::Shape, "u0 has wrong size");
  require(s.config.constraint.dimension() == s.plant.input_dim, ErrorKind::Shape,
          "constraint set dimension differs from the input dimension");
  if (s.perception.mode == PerceptionMode::Model)
    require(s.perception.model != nullptr, ErrorKind::Validation, "model perception without model");

  RunTrace trace;
  auto& m = trace.meta;
  m.scenario_name = s.name;
  m.scenario_hash = s.scenario_hash;
  m.seed = s.seed;
  m.plant = s.plant.name;
  m.perception_mode = std::string(to_string(s.perception.mode));
  m.tau = s.config.tau;
  m.substeps = s.substeps;
  m.horizon = s.horizon;
  m.tracked_dim = s.plant.tracked_dim;
  m.obstacle_count = static_cast<int>(s.obstacles.size());
  m.sup_w_rate = s.disturbance.sup_rate;
  m.epsilon_declared = s.perception.mode == PerceptionMode::Noisy ? s.perception.epsilon
                       : s.perception.mode == PerceptionMode::Model
                           ? s.perception.model->measured_error
                           : 0.0;
  m.certificate = static_certificate_inputs(s);

  const double tau = s.config.tau;
  detail::PerceptionSampler sampler(s);
  ControllerState ctrl{s.config.constraint.project(s.u0), 0};
  Vec x = s.x0;
  Vec u_star_prev;
  int target_index = 0;
  std::optional<Workspace> last_workspace;
  int workspace_id = -1;

  try {
    for (int k = 0; k < s.horizon; ++k) {
      SampleRecord rec;
      rec.k = k;
      rec.t = k * tau;
      rec.x = x;
      const Vec w_k = s.disturbance.value(rec.t);

      rec.x_hat = sampler.estimate(x, rec.flags);
      rec.perception_error = s.plant.tracked_norm(rec.x_hat - x);

      if (s.schedule) target_index = s.schedule->advance(target_index, rec.x_hat.head(2));
      rec.target_index = target_index;

      const StageCost stage = s.cost.stage(CostContext{k, rec.x_hat, target_index, last_workspace});
      if (stage.workspace_reused) rec.flags |= kFlagWorkspaceReused;
      if (stage.workspace) {
        if (!stage.workspace_reused) ++workspace_id;
        last_workspace = stage.workspace;
        for (const auto& hp : stage.workspace->halfplanes) rec.margins.push_back(hp.margin(x.head(2)));
      }
      rec.workspace_id = workspace_id;

      if (k == 0) {
        rec.u = ctrl.u_prev;
      } else {
        const StepResult step = controller_step(ctrl, s.config, stage, s.plant, rec.x_hat);
        if (step.margin_clamped) rec.flags |= kFlagMarginClamped;
        ctrl = step.state;
        rec.u = step.u;
      }

      const Vec warm = u_star_prev.size() ? u_star_prev : rec.u;
      const OracleSolution sol =
          solve_oracle(s.plant, stage, s.config.constraint, w_k, warm, s.oracle, s.cost.mu);
      rec.u_star = sol.u_star;
      rec.x_star = sol.x_star;
      rec.oracle_iterations = sol.iterations;
      rec.oracle_residual = sol.residual;
      u_star_prev = sol.u_star;

      rec.u_error = (rec.u - rec.u_star).norm();
      rec.z_norm = tracking_error(s.plant, x, rec.x_star, rec.u, rec.u_star);
      if (const auto v = s.plant.lyapunov_value(x, rec.u, w_k)) rec.lyapunov_w = std::sqrt(std::max(*v, 0.0));

      const Vec u_hold = rec.u;
      trace.samples.push_back(std::move(rec));

      FlowObserver observer;
      if (s.record_fine)
        observer = [&](double t, const Vec& xf) {
          trace.fine.push_back({k, t, xf, zero_order_hold(u_hold, std::min(t, (k + 1) * tau - 1e-12 * tau), k, tau)});
        };
      x = integrate_flow(s.plant, x, u_hold, s.disturbance, k * tau, tau, s.substeps, observer);
    }
  } catch (const Error& e) {
    m.aborted = true;
    m.abort_reason = e.what();
  }
  for (std::size_t k = 0; k + 1 < trace.samples.size(); ++k) {
    auto& cur = trace.samples[k];
    const auto& next = trace.samples[k + 1];
    cur.nu_drift = (next.u_star - cur.u_star).norm();
    cur.nu_perception = next.perception_error;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Derived series

struct TrackingSeries {
  std::vector<double> z_norms;
  double delta_u_star = 0.0;  // max_k |u*_k - u*_{k-1}|
  double sup_w_rate = 0.0;
  double eps_observed = 0.0;  // max_k |x_hat_k - x_k|
  double tail_sup = 0.0;      // sup over t in [T/2, T] of |z(t)| on the fine trace
  bool partial = false;
};

inline TrackingSeries compute_tracking_series(const RunTrace& trace) {
  TrackingSeries out;
  out.partial = trace.meta.aborted;
  out.sup_w_rate = trace.meta.sup_w_rate;
  const auto& smp = trace.samples;
  for (std::size_t k = 0; k < smp.size(); ++k) {
    out.z_norms.push_back(smp[k].z_norm);
    out.eps_observed = std::max(out.eps_observed, smp[k].perception_error);
    if (k > 0) out.delta_u_star = std::max(out.delta_u_star, (smp[k].u_star - smp[k - 1].u_star).norm());
  }
  const double horizon_t = trace.meta.horizon * trace.meta.tau;
  const Eigen::Index nt = trace.meta.tracked_dim;
  for (const auto& f : trace.fine) {
    if (f.t < 0.5 * horizon_t || f.k >= static_cast<int>(smp.size())) continue;
    const auto& s = smp[f.k];
    const double ex = (f.x - s.x_star).head(nt).norm();
    const double eu = (f.u - s.u_star).norm();
    out.tail_sup = std::max(out.tail_sup, std::hypot(ex, eu));
  }
  return out;
}

/// Certificate inputs for a finished run: setup constants plus the run's
/// optimizer drift and the declared perception error.
inline CertificateInputs certificate_inputs_for(const RunTrace& trace) {
  if (!trace.meta.certificate)
    throw Error(ErrorKind::OracleUnavailable, "trace carries no certificate constants");
  CertificateInputs in = *trace.meta.certificate;
  const TrackingSeries series = compute_tracking_series(trace);
  in.delta_u_star = series.delta_u_star;
  in.sup_w_rate = trace.meta.sup_w_rate;
  in.eps_perception = trace.meta.epsilon_declared;
  return in;
}

/// omega/nu/sigma sequence for the recursion oracle; needs W_k on every sample.
inline std::vector<RecursionStep> recursion_steps(const RunTrace& trace,
                                                  const CertificateInputs& in) {
  std::vector<RecursionStep> steps;
  const auto& smp = trace.samples;
  const double sigma = std::sqrt(in.sigma_w_gain) * in.sup_w_rate;
  for (std::size_t k = 0; k < smp.size(); ++k) {
    if (!smp[k].lyapunov_w)
      throw Error(ErrorKind::OracleUnavailable, "sample " + std::to_string(k) + " has no Lyapunov value");
    RecursionStep st;
    st.omega = {smp[k].u_error, *smp[k].lyapunov_w};
    st.nu = {smp[k].nu_drift, smp[k].nu_perception};
    st.sigma = sigma;
    steps.push_back(st);
  }
  return steps;
}

}  // namespace fbopt

#endif  // FBOPT_HARNESS_HPP
