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

#ifndef FBOPT_LINALG_HPP
#define FBOPT_LINALG_HPP

#include "fbopt/common.hpp"

#include <Eigen/Eigenvalues>

namespace fbopt::linalg {

/// Induced 2-norm.
inline double norm2(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

inline double lambda_min_sym(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double lambda_max_sym(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline bool is_spd(const Mat& s, double sym_tol = 1e-12) {
  if (s.rows() != s.cols() || s.rows() == 0) return false;
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > sym_tol * (1.0 + s.cwiseAbs().maxCoeff()))
    return false;
  return lambda_min_sym(0.5 * (s + s.transpose())) > 0.0;
}

inline double spectral_radius(const Mat& m) {
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Spectral radius of a 2x2 matrix from the characteristic polynomial.
inline double spectral_radius_2x2(const Eigen::Matrix2d& m) {
  const double tr = m.trace();
  const double det = m.determinant();
  const double disc = tr * tr / 4.0 - det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs(tr / 2.0 + s), std::abs(tr / 2.0 - s));
  }
  // complex pair: |lambda|^2 = det
  return std::sqrt(det);
}

inline bool is_hurwitz(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a, false);
  return (es.eigenvalues().real().array() < 0.0).all();
}

/// Solves A^T P + P A = -Q through the Kronecker form.
inline Mat solve_lyapunov(const Mat& a, const Mat& q) {
  const Eigen::Index n = a.rows();
  const Mat id = Mat::Identity(n, n);
  Mat k = Mat::Zero(n * n, n * n);
  // vec(A^T P) = (I kron A^T) vec(P); vec(P A) = (A^T kron I) vec(P)
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) += id(i, j) * a.transpose();
      k.block(i * n, j * n, n, n) += a(j, i) * id;
    }
  const Vec rhs = -Eigen::Map<const Vec>(q.data(), n * n);
  const Vec p = k.fullPivLu().solve(rhs);
  Mat out = Eigen::Map<const Mat>(p.data(), n, n);
  return 0.5 * (out + out.transpose());
}

}  // namespace fbopt::linalg

#endif  // FBOPT_LINALG_HPP
