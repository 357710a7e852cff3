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

// fbopt command-line tool. Exit codes: 0 success, 1 bound check failed,
// 2 validation failure, 3 runtime abort.

#include "fbopt/scenario.hpp"
#include "fbopt/trace_io.hpp"

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include <algorithm>
#include <filesystem>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace fbopt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation:
    case ErrorKind::Shape:
    case ErrorKind::InvalidCost:
    case ErrorKind::InvalidStepSize:
    case ErrorKind::Filesystem:
      return kExitValidation;
    default:
      return kExitRuntime;
  }
}

int cmd_run(const std::string& scenario, const std::string& out_dir) {
  const Setup setup = build_setup(load_scenario(scenario));
  const RunTrace trace = run_closed_loop(setup);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::Filesystem, "cannot create " + out_dir + ": " + ec.message());
  export_trace(trace, fs::path(out_dir) / "trace.csv", TraceFormat::Csv);
  export_trace(trace, fs::path(out_dir) / "trace.json", TraceFormat::Json);
  const TrackingSeries series = compute_tracking_series(trace);
  std::cout << "samples " << trace.samples.size() << ", terminal |z| "
            << (series.z_norms.empty() ? 0.0 : series.z_norms.back()) << ", delta_u* "
            << series.delta_u_star << "\n";
  if (trace.meta.aborted) {
    std::cerr << "run aborted: " << trace.meta.abort_reason << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_certify(const std::string& scenario) {
  SetupOptions opt;
  const Setup setup = build_setup(load_scenario(scenario), opt);
  const RunTrace trace = run_closed_loop(setup);
  nlohmann::json out;
  out["scenario"] = setup.name;
  if (!trace.meta.certificate) {
    out["report"] = nullptr;
    out["error"] = "plant has no certificate constants";
    std::cout << out.dump(2) << "\n";
    return kExitOk;
  }
  const CertificateInputs in = certificate_inputs_for(trace);
  out["inputs"] = to_json(in);
  out["conditions"] = to_json(check_conditions(in));
  try {
    out["report"] = to_json(build_certificate(in));
  } catch (const Error& e) {
    out["report"] = nullptr;
    out["error"] = std::string(to_string(e.kind())) + ": " + e.what();
  }
  if (trace.meta.aborted) out["run_aborted"] = trace.meta.abort_reason;
  std::cout << out.dump(2) << "\n";
  return trace.meta.aborted ? kExitRuntime : kExitOk;
}

int cmd_train(const std::string& scenario, const std::string& out_file) {
  const TrainingSpec spec = training_from(load_scenario(scenario).doc);
  const TrainingSet set = generate_training_set(spec.map, spec.region, spec.samples_per_axis,
                                                spec.options.seed);
  const PerceptionModel model = train_perception(set, spec.options);
  save_model(model, out_file);
  std::cout << "final loss " << model.training.final_loss << ", measured error bound "
            << model.measured_error << "\n";
  return kExitOk;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> values;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size() && item.find_first_not_of(" ", used) != std::string::npos)
        throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Validation, "not a number in --values: '" + item + "'");
    }
  }
  if (values.empty()) throw Error(ErrorKind::Validation, "--values is empty");
  return values;
}

struct SweepRow {
  double value = 0.0;
  double terminal_z = 0.0;
  double tail_sup = 0.0;
  double delta_u_star = 0.0;
  double sup_w_rate = 0.0;
  double eps_declared = 0.0;
  double eps_observed = 0.0;
  bool aborted = false;
};

int cmd_sweep(const std::string& scenario, const std::string& param, const std::string& list,
              unsigned jobs) {
  const ScenarioDoc base = load_scenario(scenario);
  const std::vector<double> values = parse_values(list);
  // Validate every variant up front so a bad value fails before any run starts.
  std::vector<ScenarioDoc> docs;
  for (double v : values) {
    ScenarioDoc d = base;
    apply_override(d.doc, param, v);
    build_setup(d, SetupOptions{false});
    docs.push_back(std::move(d));
  }

  std::vector<SweepRow> rows(values.size());
  auto work = [&](std::size_t i) {
    const RunTrace trace = run_closed_loop(build_setup(docs[i]));
    const TrackingSeries s = compute_tracking_series(trace);
    rows[i] = {values[i], s.z_norms.empty() ? 0.0 : s.z_norms.back(), s.tail_sup,
               s.delta_u_star, s.sup_w_rate, trace.meta.epsilon_declared, s.eps_observed,
               trace.meta.aborted};
  };
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < values.size(); start += jobs) {
    std::vector<std::future<void>> batch;
    for (std::size_t i = start; i < std::min(values.size(), start + jobs); ++i)
      batch.push_back(std::async(std::launch::async, work, i));
    for (auto& f : batch) f.get();
  }

  std::cout << "value,terminal_znorm,tail_sup_znorm,delta_u_star,sup_w_rate,eps_declared,"
               "eps_observed,aborted\n";
  bool any_aborted = false;
  for (const auto& r : rows) {
    std::cout << r.value << ',' << r.terminal_z << ',' << r.tail_sup << ',' << r.delta_u_star
              << ',' << r.sup_w_rate << ',' << r.eps_declared << ',' << r.eps_observed << ','
              << (r.aborted ? 1 : 0) << "\n";
    any_aborted = any_aborted || r.aborted;
  }
  return any_aborted ? kExitRuntime : kExitOk;
}

int cmd_check_bound(const std::string& dir) {
  const RunTrace trace = import_trace(fs::path(dir) / "trace.json");
  const CertificateInputs in = certificate_inputs_for(trace);
  const CertificateReport rep = build_certificate(in);
  if (!rep.power) throw Error(ErrorKind::NotSchur, "M1 is not Schur for this trace");

  const double z0 = trace.samples.empty() ? 0.0 : trace.samples.front().z_norm;
  int envelope_violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (const auto& s : trace.samples) {
    const double env = bound_envelope(rep, in, s.k, z0).value;
    min_slack = std::min(min_slack, env - s.z_norm);
    if (s.z_norm > env) ++envelope_violations;
  }

  nlohmann::json out;
  out["samples"] = trace.samples.size();
  out["envelope_violations"] = envelope_violations;
  out["envelope_min_slack"] = min_slack;
  bool recursion_ok = true;
  try {
    const RecursionVerdict v = recursion_oracle(recursion_steps(trace, in), in);
    out["recursion_checked"] = v.checked;
    out["recursion_violations"] = v.violations.size();
    out["recursion_worst_excess"] = v.worst_slack;
    recursion_ok = v.violations.empty();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::OracleUnavailable) throw;
    out["recursion_checked"] = 0;
    out["recursion_skipped"] = e.what();
  }
  out["aborted"] = trace.meta.aborted;
  std::cout << out.dump(2) << "\n";
  return (envelope_violations == 0 && recursion_ok) ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampled-data feedback optimization with learned perception"};
  app.require_subcommand(1);

  std::string scenario, out, param, values, trace_dir;
  unsigned jobs = 0;

  auto* run = app.add_subcommand("run", "Run a scenario and write trace.csv, trace_fine.csv, trace.json");
  run->add_option("scenario", scenario, "Scenario file")->required();
  run->add_option("--out", out, "Output directory")->required();

  auto* certify = app.add_subcommand("certify", "Print the certificate report as JSON");
  certify->add_option("scenario", scenario, "Scenario file")->required();

  auto* train = app.add_subcommand("train-perception", "Train the perception network");
  train->add_option("scenario", scenario, "Scenario file")->required();
  train->add_option("--out", out, "Model file")->required();

  auto* sweep = app.add_subcommand("sweep", "Run one scenario over a list of parameter values");
  sweep->add_option("scenario", scenario, "Scenario file")->required();
  sweep->add_option("--param", param, "Dotted key path, e.g. disturbance.amplitude")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--jobs", jobs, "Parallel runs (0 = hardware threads)");

  auto* check = app.add_subcommand("check-bound", "Check a stored trace against the certificate");
  check->add_option("trace-dir", trace_dir, "Directory written by run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*run) return cmd_run(scenario, out);
    if (*certify) return cmd_certify(scenario);
    if (*train) return cmd_train(scenario, out);
    if (*sweep) return cmd_sweep(scenario, param, values, jobs);
    if (*check) return cmd_check_bound(trace_dir);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
