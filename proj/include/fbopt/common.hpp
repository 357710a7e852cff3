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

#ifndef FBOPT_COMMON_HPP
#define FBOPT_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fbopt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorKind {
  Validation,
  IntegrationDiverged,
  CertificateUnavailable,
  StabilityEstimateFailed,
  InfeasibleWorkspace,
  BarrierDomain,
  InvalidCost,
  InvalidStepSize,
  NotSchur,
  OracleUnavailable,
  OracleNotConverged,
  OutOfDomain,
  Shape,
  TrainingDiverged,
  Indexing,
  Filesystem,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::IntegrationDiverged: return "integration-diverged";
    case ErrorKind::CertificateUnavailable: return "certificate-unavailable";
    case ErrorKind::StabilityEstimateFailed: return "stability-estimate-failed";
    case ErrorKind::InfeasibleWorkspace: return "infeasible-workspace";
    case ErrorKind::BarrierDomain: return "barrier-domain";
    case ErrorKind::InvalidCost: return "invalid-cost";
    case ErrorKind::InvalidStepSize: return "invalid-step-size";
    case ErrorKind::NotSchur: return "not-schur";
    case ErrorKind::OracleUnavailable: return "oracle-unavailable";
    case ErrorKind::OracleNotConverged: return "oracle-not-converged";
    case ErrorKind::OutOfDomain: return "out-of-domain";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::TrainingDiverged: return "training-diverged";
    case ErrorKind::Indexing: return "indexing";
    case ErrorKind::Filesystem: return "filesystem";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::remainder(a, 2.0 * pi);
  if (a <= -pi) a += 2.0 * pi;
  return a;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

/// Seeded generator with a portable uniform draw (std distributions differ
/// between standard libraries, which would break bitwise reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9E3779B97F4A7C15ULL) {}

  std::uint64_t next() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  std::uint64_t state_;
};

}  // namespace fbopt

#endif  // FBOPT_COMMON_HPP
