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

#include "fbopt/certificates.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fbopt;

namespace {

CertificateInputs pinned() {
  CertificateInputs in;
  in.d1 = in.d2 = in.d3 = 1.0;
  in.tau = 2.0;
  in.eta = 0.1;
  in.mu = 2.0;
  in.ell = 2.0;
  in.ell_x = 1.0;
  in.ell_hu = 1.0;
  in.sigma_w_gain = 1.0;
  return in;
}

}  // namespace

TEST(BuildMatrices, PinnedInstance) {
  const CertificateInputs in = pinned();
  EXPECT_NEAR(contraction_factor_w(in), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(*contraction_factor_p(in), 0.8, 1e-12);
  const auto m = build_matrices(in);
  EXPECT_NEAR(m.m1(0, 0), 0.8, 1e-4);
  EXPECT_NEAR(m.m1(0, 1), 0.036788, 1e-4);
  EXPECT_NEAR(m.m1(1, 0), 0.66218, 1e-4);
  EXPECT_NEAR(m.m1(1, 1), 0.38142, 1e-4);
}

TEST(BuildMatrices, SmallStepLimit) {
  CertificateInputs in = pinned();
  in.eta = 1e-12;
  const auto m = build_matrices(in);
  const double cw = contraction_factor_w(in);
  EXPECT_NEAR(m.m1(0, 0), 1.0, 1e-10);
  EXPECT_NEAR(m.m1(0, 1), 0.0, 1e-10);
  EXPECT_NEAR(m.m1(1, 0), 2.0 * cw * in.ell_hu * std::sqrt(in.d1), 1e-10);
  EXPECT_NEAR(m.m1(1, 1), cw, 1e-10);
}

TEST(BuildMatrices, FastDecayLimit) {
  CertificateInputs in = pinned();
  in.d3 = 200.0;
  const auto m = build_matrices(in);
  EXPECT_NEAR(m.m1(0, 0), 0.8, 1e-12);
  EXPECT_NEAR(m.m1(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(m.m1(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(m.m1(1, 1), 0.0, 1e-12);
}

TEST(BuildMatrices, RejectsStepOutsideInterval) {
  CertificateInputs in = pinned();
  in.eta = 2.0 * in.mu / (in.ell * in.ell) * 1.01;
  try {
    build_matrices(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidStepSize);
  }
}

TEST(Factors, TwoIndependentPathsAgree) {
  Rng r(1);
  for (int i = 0; i < 500; ++i) {
    CertificateInputs in;
    in.d1 = r.uniform(0.1, 2.0);
    in.d2 = in.d1 + r.uniform(0.0, 2.0);
    in.d3 = r.uniform(0.1, 3.0);
    in.tau = r.uniform(0.1, 5.0);
    in.mu = r.uniform(0.1, 2.0);
    in.ell = in.mu + r.uniform(0.0, 3.0);
    in.eta = r.uniform(0.01, 0.99) * 2.0 * in.mu / (in.ell * in.ell);
    const double cw = std::sqrt(std::exp(-in.d3 * in.tau) * in.d2 / in.d1);
    const double cp = std::sqrt((1.0 - in.eta * in.mu) * (1.0 - in.eta * in.mu) +
                                in.eta * in.eta * (in.ell * in.ell - in.mu * in.mu));
    EXPECT_NEAR(contraction_factor_w(in), cw, 1e-12);
    EXPECT_NEAR(*contraction_factor_p(in), cp, 1e-12);
  }
}

TEST(CheckConditions, ThresholdsAndOpenInterval) {
  CertificateInputs in = pinned();
  auto v = check_conditions(in);
  EXPECT_EQ(v.tau_threshold, 0.0);
  EXPECT_TRUE(v.tau_ok);
  EXPECT_TRUE(v.eta_ok);
  EXPECT_TRUE(v.schur_ok);
  EXPECT_NEAR(v.spectral_radius, 0.85179, 1e-4);
  in.eta = 2.0 * in.mu / (in.ell * in.ell);
  v = check_conditions(in);
  EXPECT_FALSE(v.eta_ok);
  in = pinned();
  in.d2 = std::exp(2.0);
  v = check_conditions(in);
  EXPECT_NEAR(v.tau_threshold, 2.0, 1e-12);
  EXPECT_FALSE(v.tau_ok);  // tau = 2 is not strictly above
}

TEST(CheckConditions, SchurMatchesSpectralRadius) {
  Rng r(2);
  for (int i = 0; i < 200; ++i) {
    CertificateInputs in = pinned();
    in.tau = r.uniform(0.01, 6.0);
    in.ell_hu = r.uniform(0.1, 3.0);
    const auto v = check_conditions(in);
    EXPECT_EQ(v.schur_ok, v.spectral_radius < 1.0);
  }
}

TEST(SchurBoundary, BisectionLocatesCrossing) {
  const CertificateInputs in = pinned();
  double prev = spectral_radius_at(in, 0.01);
  for (int i = 1; i <= 400; ++i) {
    const double rho = spectral_radius_at(in, 0.01 * (i + 1));
    EXPECT_LE(rho, prev + 1e-15);
    prev = rho;
  }
  const double tau_star = schur_boundary_tau(in, 1e-6, 10.0);
  EXPECT_NEAR(spectral_radius_at(in, tau_star), 1.0, 1e-6);
  EXPECT_GE(spectral_radius_at(in, 0.9 * tau_star), 1.0);
  EXPECT_LT(spectral_radius_at(in, 1.1 * tau_star), 1.0);
}

TEST(PowerConstants, NormalMatrix) {
  Eigen::Matrix2d m;
  m << 0.5, 0, 0, 0.5;
  const auto pc = power_constants(m);
  EXPECT_NEAR(pc.c, 0.505, 1e-12);
  EXPECT_NEAR(pc.r, 1.0, 1e-12);
}

TEST(PowerConstants, NonNormalTransientIsCertified) {
  Eigen::Matrix2d m;
  m << 0.5, 10, 0, 0.5;
  const auto pc = power_constants(m, 200);
  EXPECT_GT(pc.r, 1.0);
  EXPECT_GE(pc.min_slack, 0.0);
  Eigen::Matrix2d power = Eigen::Matrix2d::Identity();
  for (int k = 0; k <= 200; ++k) {
    EXPECT_LE(linalg::norm2(power), pc.r * std::pow(pc.c, k) * (1 + 1e-12));
    power = power * m;
  }
}

TEST(PowerConstants, NotSchurRaises) {
  Eigen::Matrix2d m;
  m << 1.0, 0.1, 0, 0.2;
  try {
    power_constants(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotSchur);
  }
}

TEST(Report, SandwichConstantsAndVariants) {
  CertificateInputs in = pinned();
  in.d1 = 0.25;
  in.d2 = 4.0;
  in.d3 = 3.0;
  const auto rep = build_certificate(in);
  ASSERT_TRUE(rep.power);
  EXPECT_DOUBLE_EQ(rep.m1, 0.5);
  EXPECT_DOUBLE_EQ(rep.m2, 2.0);
  const double r = rep.power->r, c = rep.power->c;
  EXPECT_NEAR(rep.b_printed, r * c / (rep.m1 * (1 + c)), 1e-12);
  EXPECT_NEAR(rep.b_conservative, r * c / (rep.m1 * (1 - c)), 1e-12);
  EXPECT_GE(rep.b_conservative, rep.b_printed);
  EXPECT_FALSE(rep.notes.empty());
}

TEST(Envelope, UnperturbedDecaysToZero) {
  const CertificateInputs in = pinned();
  const auto rep = build_certificate(in);
  double prev = bound_envelope(rep, in, 0, 1.0).value;
  for (int k = 1; k < 400; ++k) {
    const double v = bound_envelope(rep, in, k, 1.0).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-20);
}

TEST(Envelope, MonotoneInEachPerturbation) {
  const CertificateInputs base = pinned();
  const auto rep = build_certificate(base);
  for (int field = 0; field < 3; ++field) {
    double prev = -1.0;
    for (double s : {0.0, 0.01, 0.1, 0.5, 1.0}) {
      CertificateInputs in = base;
      (field == 0 ? in.delta_u_star : field == 1 ? in.eps_perception : in.sup_w_rate) = s;
      const double v = bound_envelope(rep, in, 10, 1.0).value;
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(RecursionOracle, ExactStepsPassAndMutationFails) {
  const CertificateInputs in = pinned();
  const auto mats = recursion_matrices(in);
  // Steps that satisfy the recursion with equality.
  std::vector<RecursionStep> steps;
  RecursionStep s{{1.0, 0.5}, {0.1, 0.05}, 0.02};
  for (int k = 0; k < 30; ++k) {
    steps.push_back(s);
    RecursionStep next = s;
    next.omega = mats.m1 * s.omega + mats.m2 * s.nu + mats.m3 * s.sigma;
    s = next;
  }
  EXPECT_TRUE(recursion_oracle(steps, mats).violations.empty());
  CertificateMatrices halved = mats;
  halved.m1 *= 0.5;
  EXPECT_FALSE(recursion_oracle(steps, halved).violations.empty());
}
