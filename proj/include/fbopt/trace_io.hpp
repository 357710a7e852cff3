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

#ifndef FBOPT_TRACE_IO_HPP
#define FBOPT_TRACE_IO_HPP

/**
 * @file
 * @brief Trace persistence (CSV and JSON) and JSON views of certificate reports.
 *
 * CSV sample file columns:
 *   k, t, x_0.., xhat_0.., u_0.., ustar_0.., znorm, Wk, margin_0.., flags
 * Wk is empty when the plant has no Lyapunov matrix. The fine trace goes to a
 * sibling file "<stem>_fine.csv" with columns k, t, x_0.., u_0... Numbers are
 * written with 17 significant digits.
 */

#include "fbopt/certificates.hpp"
#include "fbopt/harness.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fbopt {

enum class TraceFormat { Csv, Json };

namespace io_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline Vec from_std(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void append(std::vector<std::string>& cols, const std::string& prefix, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) cols.push_back(prefix + "_" + std::to_string(i));
}

inline std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Filesystem, "cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw Error(ErrorKind::Filesystem, "write failed: " + path.string());
}

}  // namespace io_detail

/// Column names of the sample CSV for the given dimensions.
inline std::vector<std::string> csv_header(Eigen::Index n, Eigen::Index m, int margins) {
  std::vector<std::string> cols{"k", "t"};
  io_detail::append(cols, "x", n);
  io_detail::append(cols, "xhat", n);
  io_detail::append(cols, "u", m);
  io_detail::append(cols, "ustar", m);
  cols.push_back("znorm");
  cols.push_back("Wk");
  io_detail::append(cols, "margin", margins);
  cols.push_back("flags");
  return cols;
}

inline std::vector<std::string> fine_csv_header(Eigen::Index n, Eigen::Index m) {
  std::vector<std::string> cols{"k", "t"};
  io_detail::append(cols, "x", n);
  io_detail::append(cols, "u", m);
  return cols;
}

inline std::string trace_to_csv(const RunTrace& tr) {
  using io_detail::fmt;
  const Eigen::Index n = tr.samples.empty() ? 0 : tr.samples.front().x.size();
  const Eigen::Index m = tr.samples.empty() ? 0 : tr.samples.front().u.size();
  std::ostringstream os;
  os << io_detail::join(csv_header(n, m, tr.meta.obstacle_count)) << '\n';
  for (const auto& s : tr.samples) {
    os << s.k << ',' << fmt(s.t);
    for (const Vec* v : {&s.x, &s.x_hat, &s.u, &s.u_star})
      for (Eigen::Index i = 0; i < v->size(); ++i) os << ',' << fmt((*v)(i));
    os << ',' << fmt(s.z_norm) << ',';
    if (s.lyapunov_w) os << fmt(*s.lyapunov_w);
    for (int i = 0; i < tr.meta.obstacle_count; ++i)
      os << ',' << (i < static_cast<int>(s.margins.size()) ? fmt(s.margins[i]) : std::string());
    os << ',' << s.flags << '\n';
  }
  return os.str();
}

inline std::string fine_trace_to_csv(const RunTrace& tr) {
  using io_detail::fmt;
  const Eigen::Index n = tr.samples.empty() ? 0 : tr.samples.front().x.size();
  const Eigen::Index m = tr.samples.empty() ? 0 : tr.samples.front().u.size();
  std::ostringstream os;
  os << io_detail::join(fine_csv_header(n, m)) << '\n';
  for (const auto& f : tr.fine) {
    os << f.k << ',' << fmt(f.t);
    for (Eigen::Index i = 0; i < f.x.size(); ++i) os << ',' << fmt(f.x(i));
    for (Eigen::Index i = 0; i < f.u.size(); ++i) os << ',' << fmt(f.u(i));
    os << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const CertificateInputs& in) {
  return {{"d1", in.d1},
          {"d2", in.d2},
          {"d3", in.d3},
          {"ell_x", in.ell_x},
          {"ell_hu", in.ell_hu},
          {"mu", in.mu},
          {"ell", in.ell},
          {"eta", in.eta},
          {"tau", in.tau},
          {"sigma_w_gain", in.sigma_w_gain},
          {"sup_w_rate", in.sup_w_rate},
          {"delta_u_star", in.delta_u_star},
          {"eps_perception", in.eps_perception},
          {"empirical_constants", in.empirical_constants}};
}

inline CertificateInputs certificate_inputs_from_json(const nlohmann::json& j) {
  CertificateInputs in;
  in.d1 = j.at("d1").get<double>();
  in.d2 = j.at("d2").get<double>();
  in.d3 = j.at("d3").get<double>();
  in.ell_x = j.at("ell_x").get<double>();
  in.ell_hu = j.at("ell_hu").get<double>();
  in.mu = j.at("mu").get<double>();
  in.ell = j.at("ell").get<double>();
  in.eta = j.at("eta").get<double>();
  in.tau = j.at("tau").get<double>();
  in.sigma_w_gain = j.at("sigma_w_gain").get<double>();
  in.sup_w_rate = j.at("sup_w_rate").get<double>();
  in.delta_u_star = j.at("delta_u_star").get<double>();
  in.eps_perception = j.at("eps_perception").get<double>();
  in.empirical_constants = j.at("empirical_constants").get<bool>();
  return in;
}

inline nlohmann::json trace_to_json(const RunTrace& tr) {
  using io_detail::to_std;
  const auto& m = tr.meta;
  nlohmann::json meta = {{"scenario_name", m.scenario_name},
                         {"scenario_hash", m.scenario_hash},
                         {"seed", m.seed},
                         {"version", m.version},
                         {"plant", m.plant},
                         {"perception_mode", m.perception_mode},
                         {"tau", m.tau},
                         {"substeps", m.substeps},
                         {"horizon", m.horizon},
                         {"tracked_dim", m.tracked_dim},
                         {"obstacle_count", m.obstacle_count},
                         {"sup_w_rate", m.sup_w_rate},
                         {"epsilon_declared", m.epsilon_declared},
                         {"aborted", m.aborted},
                         {"abort_reason", m.abort_reason}};
  meta["certificate"] = m.certificate ? to_json(*m.certificate) : nlohmann::json(nullptr);

  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : tr.samples) {
    samples.push_back({{"k", s.k},
                       {"t", s.t},
                       {"x", to_std(s.x)},
                       {"x_hat", to_std(s.x_hat)},
                       {"u", to_std(s.u)},
                       {"u_star", to_std(s.u_star)},
                       {"x_star", to_std(s.x_star)},
                       {"z_norm", s.z_norm},
                       {"W", s.lyapunov_w ? nlohmann::json(*s.lyapunov_w) : nlohmann::json(nullptr)},
                       {"u_error", s.u_error},
                       {"perception_error", s.perception_error},
                       {"nu", {s.nu_drift, s.nu_perception}},
                       {"target_index", s.target_index},
                       {"workspace_id", s.workspace_id},
                       {"margins", s.margins},
                       {"flags", s.flags},
                       {"oracle_iterations", s.oracle_iterations},
                       {"oracle_residual", s.oracle_residual}});
  }
  nlohmann::json fine = nlohmann::json::array();
  for (const auto& f : tr.fine)
    fine.push_back({{"k", f.k}, {"t", f.t}, {"x", to_std(f.x)}, {"u", to_std(f.u)}});
  return {{"format", "fbopt-trace"}, {"meta", meta}, {"samples", samples}, {"fine", fine}};
}

inline RunTrace trace_from_json(const nlohmann::json& j) {
  using io_detail::from_std;
  if (j.value("format", "") != "fbopt-trace")
    throw Error(ErrorKind::Validation, "not a trace file");
  RunTrace tr;
  const auto& mj = j.at("meta");
  auto& m = tr.meta;
  m.scenario_name = mj.at("scenario_name").get<std::string>();
  m.scenario_hash = mj.at("scenario_hash").get<std::string>();
  m.seed = mj.at("seed").get<std::uint64_t>();
  m.version = mj.at("version").get<std::string>();
  m.plant = mj.at("plant").get<std::string>();
  m.perception_mode = mj.at("perception_mode").get<std::string>();
  m.tau = mj.at("tau").get<double>();
  m.substeps = mj.at("substeps").get<int>();
  m.horizon = mj.at("horizon").get<int>();
  m.tracked_dim = mj.at("tracked_dim").get<Eigen::Index>();
  m.obstacle_count = mj.at("obstacle_count").get<int>();
  m.sup_w_rate = mj.at("sup_w_rate").get<double>();
  m.epsilon_declared = mj.at("epsilon_declared").get<double>();
  m.aborted = mj.at("aborted").get<bool>();
  m.abort_reason = mj.at("abort_reason").get<std::string>();
  if (!mj.at("certificate").is_null()) m.certificate = certificate_inputs_from_json(mj.at("certificate"));

  for (const auto& sj : j.at("samples")) {
    SampleRecord s;
    s.k = sj.at("k").get<int>();
    s.t = sj.at("t").get<double>();
    s.x = from_std(sj.at("x"));
    s.x_hat = from_std(sj.at("x_hat"));
    s.u = from_std(sj.at("u"));
    s.u_star = from_std(sj.at("u_star"));
    s.x_star = from_std(sj.at("x_star"));
    s.z_norm = sj.at("z_norm").get<double>();
    if (!sj.at("W").is_null()) s.lyapunov_w = sj.at("W").get<double>();
    s.u_error = sj.at("u_error").get<double>();
    s.perception_error = sj.at("perception_error").get<double>();
    s.nu_drift = sj.at("nu").at(0).get<double>();
    s.nu_perception = sj.at("nu").at(1).get<double>();
    s.target_index = sj.at("target_index").get<int>();
    s.workspace_id = sj.at("workspace_id").get<int>();
    s.margins = sj.at("margins").get<std::vector<double>>();
    s.flags = sj.at("flags").get<unsigned>();
    s.oracle_iterations = sj.at("oracle_iterations").get<int>();
    s.oracle_residual = sj.at("oracle_residual").get<double>();
    tr.samples.push_back(std::move(s));
  }
  for (const auto& fj : j.at("fine"))
    tr.fine.push_back({fj.at("k").get<int>(), fj.at("t").get<double>(), from_std(fj.at("x")),
                       from_std(fj.at("u"))});
  return tr;
}

/// CSV writes path and the sibling "<stem>_fine.csv"; JSON writes path.
inline void export_trace(const RunTrace& tr, const std::filesystem::path& path, TraceFormat format) {
  if (format == TraceFormat::Json) {
    io_detail::write_file(path, trace_to_json(tr).dump(1) + "\n");
    return;
  }
  io_detail::write_file(path, trace_to_csv(tr));
  auto fine = path;
  fine.replace_filename(path.stem().string() + "_fine" + path.extension().string());
  io_detail::write_file(fine, fine_trace_to_csv(tr));
}

inline RunTrace import_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Filesystem, "cannot open " + path.string());
  try {
    return trace_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Validation, std::string("malformed trace: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Certificate report

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json to_json(const CertificateMatrices& mats) {
  return {{"M1", matrix_json(mats.m1)},
          {"M2", matrix_json(mats.m2)},
          {"M3", io_detail::to_std(mats.m3)}};
}

inline nlohmann::json to_json(const ConditionVerdict& v) {
  return {{"tau_ok", v.tau_ok},
          {"eta_ok", v.eta_ok},
          {"schur_ok", v.schur_ok},
          {"tau_threshold", v.tau_threshold},
          {"spectral_radius", std::isfinite(v.spectral_radius) ? nlohmann::json(v.spectral_radius)
                                                                : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const CertificateReport& rep) {
  nlohmann::json j = {{"inputs", to_json(rep.inputs)},
                      {"printed", to_json(rep.printed)},
                      {"recursion", to_json(rep.recursion)},
                      {"c_w", rep.c_w},
                      {"c_p", rep.c_p},
                      {"conditions", to_json(rep.conditions)},
                      {"m1", rep.m1},
                      {"m2", rep.m2},
                      {"b_printed", rep.b_printed},
                      {"b_conservative", rep.b_conservative},
                      {"m2_norm", rep.m2_norm},
                      {"m3_norm", rep.m3_norm},
                      {"notes", rep.notes}};
  if (rep.power)
    j["power"] = {{"r", rep.power->r}, {"c", rep.power->c}, {"horizon", rep.power->horizon},
                  {"min_slack", rep.power->min_slack}};
  else
    j["power"] = nullptr;
  return j;
}

}  // namespace fbopt

#endif  // FBOPT_TRACE_IO_HPP
