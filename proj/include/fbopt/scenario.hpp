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

#ifndef FBOPT_SCENARIO_HPP
#define FBOPT_SCENARIO_HPP

/**
 * @file
 * @brief Scenario files: JSON objects (nested tables of key/value pairs,
 * comments allowed) turned into a validated Setup.
 *
 * Top-level keys: name, seed, horizon, substeps, plant, cost, controller,
 * disturbance, perception, and optionally initial_state / initial_offset,
 * camera, training. See README.md for the full schema.
 */

#include "fbopt/harness.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace fbopt {

using Json = nlohmann::json;

/// Parsed scenario document plus the directory relative paths resolve against.
struct ScenarioDoc {
  Json doc;
  std::filesystem::path base_dir;
};

namespace scenario_detail {

inline const Json& field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw Error(ErrorKind::Validation, where + ": missing key '" + key + "'");
  return j.at(key);
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw Error(ErrorKind::Validation, where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorKind::Validation, where + ": not finite");
  return v;
}

inline double number_or(const Json& j, const std::string& key, double fallback,
                        const std::string& where) {
  return j.contains(key) ? number(j.at(key), where + "." + key) : fallback;
}

inline Vec vector(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::Validation, where + ": expected a non-empty array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
  return v;
}

inline Vec vector_or(const Json& j, const std::string& key, const Vec& fallback,
                     const std::string& where) {
  return j.contains(key) ? vector(j.at(key), where + "." + key) : fallback;
}

inline Mat matrix(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::Validation, where + ": expected rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw Error(ErrorKind::Validation, where + ": expected a nested array");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw Error(ErrorKind::Validation, where + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(j[r][c], where);
  }
  return m;
}

inline std::string text(const Json& j, const std::string& where) {
  if (!j.is_string()) throw Error(ErrorKind::Validation, where + ": expected a string");
  return j.get<std::string>();
}

inline void expect_size(const Vec& v, Eigen::Index n, const std::string& where) {
  if (v.size() != n)
    throw Error(ErrorKind::Validation, where + ": expected length " + std::to_string(n) +
                                           ", got " + std::to_string(v.size()));
}

inline Box2 box2(const Json& j, const std::string& where) {
  const Vec v = vector(j, where);
  expect_size(v, 4, where);
  if (!(v(0) < v(2) && v(1) < v(3)))
    throw Error(ErrorKind::Validation, where + ": expected [lo_a, lo_b, hi_a, hi_b] with lo < hi");
  return Box2{Eigen::Vector2d(v(0), v(1)), Eigen::Vector2d(v(2), v(3))};
}

}  // namespace scenario_detail

inline ScenarioDoc parse_scenario_text(const std::string& text,
                                       const std::filesystem::path& base_dir = ".") {
  ScenarioDoc out;
  out.base_dir = base_dir;
  try {
    out.doc = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("scenario parse error: ") + e.what());
  }
  if (!out.doc.is_object()) throw Error(ErrorKind::Validation, "scenario must be an object");
  return out;
}

inline ScenarioDoc load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Filesystem, "cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
}

/// FNV-1a 64 over the canonical serialisation.
inline std::string scenario_hash(const Json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline GenerativeMap camera_from(const Json& doc) {
  using namespace scenario_detail;
  GenerativeMap map;
  if (!doc.contains("camera")) return map;
  const Json& c = doc.at("camera");
  map.width = static_cast<int>(number_or(c, "width", map.width, "camera"));
  map.height = static_cast<int>(number_or(c, "height", map.height, "camera"));
  if (c.contains("domain")) map.domain = box2(c.at("domain"), "camera.domain");
  map.blob_sigma = number_or(c, "blob_sigma", map.blob_sigma, "camera");
  if (map.width < 2 || map.height < 2 || !(map.blob_sigma > 0.0))
    throw Error(ErrorKind::Validation, "camera: width/height >= 2 and blob_sigma > 0 required");
  return map;
}

struct TrainingSpec {
  GenerativeMap map;
  Box2 region;
  int samples_per_axis = 30;
  TrainOptions options;
};

inline TrainingSpec training_from(const Json& doc) {
  using namespace scenario_detail;
  TrainingSpec spec;
  spec.map = camera_from(doc);
  const Json& t = field(doc, "training", "scenario");
  spec.region = t.contains("region") ? box2(t.at("region"), "training.region") : spec.map.domain;
  if (!spec.map.domain.contains(spec.region))
    throw Error(ErrorKind::Validation, "training.region must lie inside camera.domain");
  spec.samples_per_axis = static_cast<int>(number_or(t, "samples_per_axis", 30, "training"));
  auto& o = spec.options;
  if (t.contains("arch")) {
    o.arch.clear();
    for (const auto& w : t.at("arch")) o.arch.push_back(static_cast<int>(number(w, "training.arch")));
  }
  o.epochs = static_cast<int>(number_or(t, "epochs", o.epochs, "training"));
  o.learning_rate = number_or(t, "learning_rate", o.learning_rate, "training");
  o.momentum = number_or(t, "momentum", o.momentum, "training");
  o.batch_size = static_cast<int>(number_or(t, "batch_size", o.batch_size, "training"));
  o.seed = static_cast<std::uint64_t>(number_or(t, "seed", 0, "training"));
  o.validation_grid = static_cast<int>(number_or(t, "validation_grid", o.validation_grid, "training"));
  if (spec.samples_per_axis < 2 || o.epochs < 1 || o.batch_size < 1 || !(o.learning_rate > 0.0) ||
      o.momentum < 0.0 || o.momentum >= 1.0 || o.validation_grid < 2)
    throw Error(ErrorKind::Validation, "training: parameter out of range");
  if (o.arch.size() < 2 || o.arch.front() != spec.map.size() || o.arch.back() != 2)
    throw Error(ErrorKind::Validation,
                "training.arch must start at the pixel count and end at 2");
  return spec;
}

inline DisturbanceSignal disturbance_from(const Json& j, Eigen::Index n) {
  using namespace scenario_detail;
  const std::string type = text(field(j, "type", "disturbance"), "disturbance.type");
  const Vec zero = Vec::Zero(n);
  if (type == "constant") {
    const Vec w = vector_or(j, "value", zero, "disturbance");
    expect_size(w, n, "disturbance.value");
    return DisturbanceSignal::constant(w);
  }
  if (type == "sinusoid") {
    const Vec bias = vector_or(j, "bias", zero, "disturbance");
    const Vec amp = vector(field(j, "amplitude", "disturbance"), "disturbance.amplitude");
    const Vec phase = vector_or(j, "phase", zero, "disturbance");
    const double omega = number(field(j, "frequency", "disturbance"), "disturbance.frequency");
    expect_size(bias, n, "disturbance.bias");
    expect_size(amp, n, "disturbance.amplitude");
    expect_size(phase, n, "disturbance.phase");
    return DisturbanceSignal::sinusoid(bias, amp, omega, phase);
  }
  if (type == "ramp") {
    const Vec w0 = vector_or(j, "start", zero, "disturbance");
    const Vec slope = vector(field(j, "slope", "disturbance"), "disturbance.slope");
    expect_size(w0, n, "disturbance.start");
    expect_size(slope, n, "disturbance.slope");
    return DisturbanceSignal::ramp(w0, slope);
  }
  throw Error(ErrorKind::Validation, "disturbance.type must be constant, sinusoid or ramp");
}

inline ConstraintSet constraint_from(const Json& j, Eigen::Index n) {
  using namespace scenario_detail;
  const std::string type = text(field(j, "type", "controller.constraint"), "constraint.type");
  if (type == "box") {
    const Vec lo = vector(field(j, "lower", "constraint"), "constraint.lower");
    const Vec hi = vector(field(j, "upper", "constraint"), "constraint.upper");
    expect_size(lo, n, "constraint.lower");
    expect_size(hi, n, "constraint.upper");
    try {
      return ConstraintSet::box(lo, hi);
    } catch (const Error& e) {
      throw Error(ErrorKind::Validation, e.what());
    }
  }
  if (type == "ball") {
    const Vec c = vector(field(j, "center", "constraint"), "constraint.center");
    expect_size(c, n, "constraint.center");
    return ConstraintSet::ball(c, number(field(j, "radius", "constraint"), "constraint.radius"));
  }
  throw Error(ErrorKind::Validation, "constraint.type must be box or ball");
}

/// Probes on a ring around a command, with headings spread over the circle.
inline std::vector<LyapunovProbe> ring_probes(const Vec& center, double radius, int count) {
  std::vector<LyapunovProbe> probes;
  for (int i = 0; i < count; ++i) {
    const double ang = 2.0 * std::numbers::pi * i / count;
    const double heading = wrap_angle(ang + 2.0 * std::numbers::pi * ((3 * i) % count) / count);
    Vec x0{{center(0) + radius * std::cos(ang), center(1) + radius * std::sin(ang), heading}};
    probes.push_back({x0, center});
  }
  return probes;
}

struct SetupOptions {
  /// Load the perception model (and its novelty detector) when the mode asks for one.
  bool load_model = true;
};

/// Validates the document and materialises every component of the run.
inline Setup build_setup(const ScenarioDoc& sd, const SetupOptions& opt = {}) {
  using namespace scenario_detail;
  const Json& d = sd.doc;
  Setup s;
  s.name = d.contains("name") ? text(d.at("name"), "name") : "unnamed";
  s.scenario_hash = scenario_hash(d);
  const double seed = number_or(d, "seed", 0, "scenario");
  if (seed < 0 || seed != std::floor(seed)) throw Error(ErrorKind::Validation, "seed must be a non-negative integer");
  s.seed = static_cast<std::uint64_t>(seed);
  s.horizon = static_cast<int>(number(field(d, "horizon", "scenario"), "horizon"));
  s.substeps = static_cast<int>(number_or(d, "substeps", 50, "scenario"));
  if (s.horizon < 1 || s.horizon > 1000000) throw Error(ErrorKind::Validation, "horizon out of range");
  if (s.substeps < 1 || s.substeps > 100000) throw Error(ErrorKind::Validation, "substeps out of range");

  // Plant
  const Json& pj = field(d, "plant", "scenario");
  const std::string ptype = text(field(pj, "type", "plant"), "plant.type");
  if (ptype == "lti") {
    const Mat a = matrix(field(pj, "A", "plant"), "plant.A");
    const Mat b = matrix(field(pj, "B", "plant"), "plant.B");
    const Mat e = matrix(field(pj, "E", "plant"), "plant.E");
    const Mat q = pj.contains("Q") ? matrix(pj.at("Q"), "plant.Q") : Mat(Mat::Identity(a.rows(), a.rows()));
    try {
      s.plant = make_lti_plant(a, b, e, q);
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::Shape) throw Error(ErrorKind::Validation, err.what());
      throw;
    }
  } else if (ptype == "unicycle") {
    const double kappa = number_or(pj, "kappa", 1.0, "plant");
    if (!(kappa > 0.0)) throw Error(ErrorKind::Validation, "plant.kappa must be positive");
    s.plant = make_unicycle_plant(kappa);
  } else {
    throw Error(ErrorKind::Validation, "plant.type must be lti or unicycle");
  }
  const Eigen::Index n = s.plant.state_dim;
  const Eigen::Index m = s.plant.input_dim;

  // Controller
  const Json& cj = field(d, "controller", "scenario");
  const double eta = number(field(cj, "eta", "controller"), "controller.eta");
  const double tau = number(field(cj, "tau", "controller"), "controller.tau");
  const ConstraintSet set = constraint_from(field(cj, "constraint", "controller"), m);

  // Cost
  const Json& kj = field(d, "cost", "scenario");
  const std::string ktype = text(field(kj, "type", "cost"), "cost.type");
  Vec u0_default = set.project(Vec::Zero(m));
  if (ktype == "quadratic") {
    const Mat ru = kj.contains("Ru") ? matrix(kj.at("Ru"), "cost.Ru") : Mat(Mat::Identity(m, m));
    const Mat rx = kj.contains("Rx") ? matrix(kj.at("Rx"), "cost.Rx") : Mat(Mat::Identity(n, n));
    if (ru.rows() != m || ru.cols() != m || rx.rows() != n || rx.cols() != n)
      throw Error(ErrorKind::Validation, "cost: Ru must be m x m and Rx n x n");
    const Vec ur = vector_or(kj, "u_ref", Vec::Zero(m), "cost");
    const Vec uv = vector_or(kj, "u_ref_velocity", Vec::Zero(m), "cost");
    const Vec xr = vector_or(kj, "x_ref", Vec::Zero(n), "cost");
    const Vec xv = vector_or(kj, "x_ref_velocity", Vec::Zero(n), "cost");
    expect_size(ur, m, "cost.u_ref");
    expect_size(uv, m, "cost.u_ref_velocity");
    expect_size(xr, n, "cost.x_ref");
    expect_size(xv, n, "cost.x_ref_velocity");
    s.cost = make_quadratic_cost(
        ru, rx, [ur, uv](int k) -> Vec { return ur + k * uv; },
        [xr, xv](int k) -> Vec { return xr + k * xv; }, s.plant.input_jacobian(Vec::Zero(m)));
  } else if (ktype == "tracking") {
    if (m != 2) throw Error(ErrorKind::Validation, "tracking cost needs a planar input");
    WaypointSchedule sched;
    for (const auto& c : field(kj, "checkpoints", "cost")) {
      const Vec p = vector(c, "cost.checkpoints");
      expect_size(p, 2, "cost.checkpoints");
      sched.checkpoints.push_back(p);
    }
    if (sched.checkpoints.empty()) throw Error(ErrorKind::Validation, "cost.checkpoints is empty");
    sched.capture_radius = number_or(kj, "capture_radius", 0.1, "cost");
    if (kj.contains("obstacles"))
      for (const auto& o : kj.at("obstacles")) {
        Obstacle ob{vector(field(o, "center", "obstacle"), "obstacle.center"),
                    number(field(o, "radius", "obstacle"), "obstacle.radius")};
        expect_size(ob.center, 2, "obstacle.center");
        if (!(ob.radius > 0.0)) throw Error(ErrorKind::Validation, "obstacle radius must be positive");
        s.obstacles.push_back(ob);
      }
    for (const auto& c : sched.checkpoints)
      for (const auto& ob : s.obstacles)
        if ((c - ob.center).norm() <= ob.radius)
          throw Error(ErrorKind::Validation, "checkpoint lies inside an obstacle");
    TrackingCostOptions to;
    to.lambda0 = number_or(kj, "lambda0", to.lambda0, "cost");
    to.decay = number_or(kj, "decay", to.decay, "cost");
    to.min_margin = number_or(kj, "min_margin", to.min_margin, "cost");
    if (to.lambda0 < 0.0 || to.decay < 0.0 || !(to.min_margin > 0.0) || !(sched.capture_radius > 0.0))
      throw Error(ErrorKind::Validation, "cost: lambda0, decay >= 0 and min_margin, capture_radius > 0");
    const double diam = number_or(kj, "arena_diameter", 4.0 * std::sqrt(2.0), "cost");
    s.cost = make_tracking_cost(sched, s.obstacles, to, n, diam);
    s.schedule = sched;
    u0_default = set.project(sched.checkpoints.front());
  } else {
    throw Error(ErrorKind::Validation, "cost.type must be quadratic or tracking");
  }

  const bool enforce = cj.value("enforce_step_bound", ptype == "lti");
  std::optional<std::pair<double, double>> mu_ell;
  if (enforce) mu_ell = std::make_pair(s.cost.mu, s.cost.composite_lipschitz(s.plant.constants.ell_hu));
  s.config = ControllerConfig::make(eta, tau, set, mu_ell);
  s.u0 = cj.contains("u0") ? vector(cj.at("u0"), "controller.u0") : u0_default;
  expect_size(s.u0, m, "controller.u0");

  // Disturbance
  s.disturbance = d.contains("disturbance")
                      ? disturbance_from(d.at("disturbance"), s.plant.dist_dim)
                      : DisturbanceSignal::constant(Vec::Zero(s.plant.dist_dim));

  // Initial state: h(u0, w(0)) + offset unless given explicitly.
  if (d.contains("initial_state")) {
    s.x0 = vector(d.at("initial_state"), "initial_state");
  } else {
    s.x0 = s.plant.steady_state(s.config.constraint.project(s.u0), s.disturbance.value(0.0));
    if (d.contains("initial_offset")) {
      const Vec off = vector(d.at("initial_offset"), "initial_offset");
      expect_size(off, n, "initial_offset");
      s.x0 += off;
    }
  }
  expect_size(s.x0, n, "initial_state");

  // Unicycle constants from simulation around the first command.
  if (ptype == "unicycle") {
    const Json ly = pj.value("lyapunov", Json::object());
    const double radius = number_or(ly, "probe_radius", 1.0, "plant.lyapunov");
    const int count = static_cast<int>(number_or(ly, "probes", 16, "plant.lyapunov"));
    const double horizon = number_or(ly, "horizon", 20.0, "plant.lyapunov");
    if (!(radius > 0.0) || count < 1 || !(horizon > 0.0))
      throw Error(ErrorKind::Validation, "plant.lyapunov: parameter out of range");
    const auto est = estimate_lyapunov_constants(
        s.plant, ring_probes(s.config.constraint.project(s.u0), radius, count), horizon);
    s.plant.constants = est.constants;
  }

  // Perception
  const Json pc = d.value("perception", Json{{"mode", "exact"}});
  const std::string mode = text(field(pc, "mode", "perception"), "perception.mode");
  if (mode == "exact") {
    s.perception.mode = PerceptionMode::Exact;
  } else if (mode == "noisy") {
    s.perception.mode = PerceptionMode::Noisy;
    s.perception.epsilon = number(field(pc, "epsilon", "perception"), "perception.epsilon");
    if (s.perception.epsilon < 0.0) throw Error(ErrorKind::Validation, "perception.epsilon must be >= 0");
  } else if (mode == "model") {
    s.perception.mode = PerceptionMode::Model;
    if (n < 2) throw Error(ErrorKind::Validation, "model perception needs a planar position");
    const auto file = sd.base_dir / text(field(pc, "model_file", "perception"), "perception.model_file");
    if (!std::filesystem::exists(file))
      throw Error(ErrorKind::Validation, "perception.model_file does not exist: " + file.string());
    if (opt.load_model) {
      auto model = std::make_shared<PerceptionModel>(load_model(file.string()));
      if (pc.value("novelty", false)) {
        const TrainingSpec ts = training_from(d);
        const TrainingSet set = generate_training_set(model->map, model->region, ts.samples_per_axis,
                                                      model->training.seed);
        s.perception.novelty = std::make_shared<NoveltyDetector>(
            set, number_or(pc, "novelty_scale", 1.5, "perception"));
      }
      s.perception.model = std::move(model);
    }
  } else {
    throw Error(ErrorKind::Validation, "perception.mode must be exact, noisy or model");
  }

  s.record_fine = d.value("record_fine", true);
  return s;
}

/// Sets a dotted key path. A scalar written over an array fills every entry.
inline void apply_override(Json& doc, const std::string& path, double value) {
  Json* node = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw Error(ErrorKind::Validation, "empty parameter path");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw Error(ErrorKind::Validation, "unknown parameter path: " + path);
    node = &(*node)[parts[i]];
  }
  if (!node->is_object()) throw Error(ErrorKind::Validation, "unknown parameter path: " + path);
  Json& leaf = (*node)[parts.back()];
  if (leaf.is_array()) {
    for (auto& e : leaf) e = value;
  } else {
    leaf = value;
  }
}

}  // namespace fbopt

#endif  // FBOPT_SCENARIO_HPP
