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

#include "fbopt/perception.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fbopt;

namespace {

/// Exact inverse of the blob renderer: Gauss-Newton on |q(p) - zeta|^2 from
/// the brightest cell.
Vec exact_inverse(const GenerativeMap& map, const Vec& zeta) {
  Eigen::Index best = 0;
  zeta.maxCoeff(&best);
  Eigen::Vector2d p = map.cell_center(static_cast<int>(best % map.width),
                                      static_cast<int>(best / map.width));
  const double s2 = map.blob_sigma * map.blob_sigma;
  for (int it = 0; it < 100; ++it) {
    const Vec z = render_observation(map, p.cwiseMax(map.domain.lo).cwiseMin(map.domain.hi));
    Mat j(z.size(), 2);
    for (int row = 0; row < map.height; ++row)
      for (int col = 0; col < map.width; ++col) {
        const Eigen::Index i = row * map.width + col;
        j.row(i) = z(i) * (map.cell_center(col, row) - p).transpose() / s2;
      }
    const Eigen::Vector2d step = (j.transpose() * j).ldlt().solve(j.transpose() * (zeta - z));
    p += step;
    if (step.norm() < 1e-15) break;
  }
  return p;
}

TrainingSet small_set(std::uint64_t seed = 3) {
  return generate_training_set(GenerativeMap{}, Box2{{-1.5, -1.5}, {1.5, 1.5}}, 12, seed);
}

}  // namespace

TEST(Render, PeakAtCellCenter) {
  const GenerativeMap map;
  const Eigen::Vector2d c = map.cell_center(5, 9);
  const Vec z = render_observation(map, c);
  Eigen::Index idx = 0;
  EXPECT_DOUBLE_EQ(z.maxCoeff(&idx), 1.0);
  EXPECT_EQ(idx, 9 * map.width + 5);
}

TEST(Render, EntriesInUnitIntervalAndDeterministic) {
  const GenerativeMap map;
  Rng r(1);
  for (int i = 0; i < 100; ++i) {
    const Vec p{{r.uniform(-2, 2), r.uniform(-2, 2)}};
    const Vec z = render_observation(map, p);
    EXPECT_GE(z.minCoeff(), 0.0);
    EXPECT_LE(z.maxCoeff(), 1.0);
    EXPECT_EQ(z, render_observation(map, p));
  }
}

TEST(Render, MirrorSymmetry) {
  const GenerativeMap map;
  const Vec p{{0.37, -1.1}};
  const Vec a = render_observation(map, p), b = render_observation(map, -p);
  for (int row = 0; row < map.height; ++row)
    for (int col = 0; col < map.width; ++col)
      EXPECT_NEAR(a(row * map.width + col),
                  b((map.height - 1 - row) * map.width + (map.width - 1 - col)), 1e-15);
}

TEST(Render, MassNearlyConstantInInterior) {
  const GenerativeMap map;
  const double edge = 3.0 * map.blob_sigma;
  Rng r(2);
  double lo = 1e300, hi = 0.0;
  for (int i = 0; i < 500; ++i) {
    const Vec p{{r.uniform(-2 + edge, 2 - edge), r.uniform(-2 + edge, 2 - edge)}};
    const double s = render_observation(map, p).sum();
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  EXPECT_LT((hi - lo) / lo, 0.01);
}

TEST(Render, OutsideDomainRaises) {
  try {
    render_observation(GenerativeMap{}, Vec{{2.5, 0.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfDomain);
  }
}

TEST(TrainingSet, CardinalityDeterminismConstruction) {
  const GenerativeMap map;
  const Box2 region{{-1.0, -1.0}, {1.0, 1.0}};
  const TrainingSet a = generate_training_set(map, region, 10, 7);
  const TrainingSet b = generate_training_set(map, region, 10, 7);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.positions[i], b.positions[i]);
    EXPECT_EQ(a.observations[i], render_observation(map, a.positions[i]));
    EXPECT_TRUE(region.contains(Eigen::Vector2d(a.positions[i])));
  }
  EXPECT_THROW(generate_training_set(map, Box2{{-3, -1}, {1, 1}}, 10, 7), Error);
}

TEST(Mlp, BackpropMatchesFiniteDifferences) {
  Mlp net({256, 8, 6, 2}, 11);
  const TrainingSet set = small_set();
  Mat x(256, 5), y(2, 5);
  for (int i = 0; i < 5; ++i) {
    x.col(i) = set.observations[i * 7];
    y.col(i) = set.positions[i * 7];
  }
  std::vector<DenseLayer> grads;
  net.loss_and_gradient(x, y, grads);
  Rng r(4);
  std::vector<DenseLayer> scratch;
  for (std::size_t l = 0; l < net.layers().size(); ++l)
    for (int trial = 0; trial < 10; ++trial) {
      auto& layer = net.layers()[l];
      const bool bias = trial % 3 == 0;
      const Eigen::Index i = static_cast<Eigen::Index>(r.below(layer.weights.rows()));
      const Eigen::Index j = static_cast<Eigen::Index>(r.below(layer.weights.cols()));
      double& slot = bias ? layer.bias(i) : layer.weights(i, j);
      const double analytic = bias ? grads[l].bias(i) : grads[l].weights(i, j);
      const double keep = slot, h = 1e-6;
      slot = keep + h;
      const double fp = net.loss_and_gradient(x, y, scratch);
      slot = keep - h;
      const double fm = net.loss_and_gradient(x, y, scratch);
      slot = keep;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_LE(std::abs(fd - analytic), 1e-4 * std::max(std::abs(fd), 1e-3))
          << "layer " << l << " bias " << bias;
    }
}

TEST(Training, DeterministicGivenSeed) {
  const TrainingSet set = small_set();
  TrainOptions opt;
  opt.arch = {256, 16, 2};
  opt.epochs = 20;
  opt.seed = 5;
  opt.validation_grid = 5;
  const PerceptionModel a = train_perception(set, opt);
  const PerceptionModel b = train_perception(set, opt);
  for (std::size_t l = 0; l < a.net.layers().size(); ++l) {
    EXPECT_EQ(a.net.layers()[l].weights, b.net.layers()[l].weights);
    EXPECT_EQ(a.net.layers()[l].bias, b.net.layers()[l].bias);
  }
  EXPECT_EQ(a.measured_error, b.measured_error);
}

TEST(Training, LossTrendsDownAfterWarmup) {
  const TrainingSet set = small_set();
  TrainOptions opt;
  opt.arch = {256, 32, 2};
  opt.epochs = 400;
  opt.seed = 2;
  opt.validation_grid = 5;
  const PerceptionModel m = train_perception(set, opt);
  const auto& loss = m.training.epoch_loss;
  ASSERT_EQ(loss.size(), 400u);
  // block averages over 5% windows, after the first 10% of epochs
  const int block = 20;
  double prev = std::numeric_limits<double>::infinity();
  for (int start = 40; start + block <= 400; start += block) {
    double avg = 0.0;
    for (int e = start; e < start + block; ++e) avg += loss[e];
    avg /= block;
    EXPECT_LE(avg, 1.05 * prev) << "block at epoch " << start;
    prev = std::min(prev, avg);
  }
  EXPECT_LT(loss.back(), loss.front());
}

TEST(Training, DivergenceIsReported) {
  const TrainingSet set = small_set();
  TrainOptions opt;
  opt.arch = {256, 16, 2};
  opt.epochs = 50;
  opt.learning_rate = 1e6;
  opt.validation_grid = 5;
  try {
    train_perception(set, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TrainingDiverged);
  }
}

TEST(Training, RejectsBadArchitecture) {
  const TrainingSet set = small_set();
  TrainOptions opt;
  opt.arch = {256, 16, 3};
  EXPECT_THROW(train_perception(set, opt), Error);
  opt.arch = {100, 16, 2};
  EXPECT_THROW(train_perception(set, opt), Error);
}

TEST(EstimateState, ShapeMismatch) {
  PerceptionModel m;
  m.net = Mlp({256, 4, 2}, 1);
  try {
    estimate_state(m, Vec::Zero(10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
}

TEST(MeasureErrorBound, ExactInverseGivesZero) {
  const GenerativeMap map;
  const Box2 region{{-1.9, -1.9}, {1.9, 1.9}};
  const double e = measure_error_bound([&](const Vec& z) { return exact_inverse(map, z); }, map,
                                       region, 21);
  EXPECT_LE(e, 1e-9);
}

TEST(MeasureErrorBound, DominatesPointsAndStableUnderRefinement) {
  const TrainingSet set = small_set();
  TrainOptions opt;
  opt.arch = {256, 32, 2};
  opt.epochs = 150;
  opt.seed = 9;
  opt.validation_grid = 5;
  const PerceptionModel m = train_perception(set, opt);
  const int n = 11;
  const double bound = measure_error_bound(m, set.map, set.region, n);
  const Eigen::Vector2d step = (set.region.hi - set.region.lo) / (n - 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d p = set.region.lo + Eigen::Vector2d(i * step(0), j * step(1));
      EXPECT_LE((estimate_state(m, render_observation(set.map, p)) - p).norm(), bound);
    }
  for (int g : {6, 11, 21, 41}) {
    const double coarse = measure_error_bound(m, set.map, set.region, g);
    const double fine = measure_error_bound(m, set.map, set.region, 2 * g - 1);
    EXPECT_GE(fine, 0.9 * coarse) << "grid " << g;
  }
}

TEST(Novelty, BlankImageFlaggedButFinite) {
  const TrainingSet set =
      generate_training_set(GenerativeMap{}, Box2{{-1.9, -1.9}, {1.9, 1.9}}, 30, 7);
  PerceptionModel m;
  m.net = Mlp({256, 8, 2}, 2);
  const NoveltyDetector det(set);
  const Vec blank = Vec::Zero(256);
  EXPECT_TRUE(estimate_state(m, blank).allFinite());
  EXPECT_TRUE(det.out_of_distribution(blank));
  for (std::size_t i = 0; i < set.size(); i += 13)
    EXPECT_FALSE(det.out_of_distribution(set.observations[i]));
  EXPECT_FALSE(det.out_of_distribution(render_observation(set.map, Vec{{0.11, -0.42}})));
}

TEST(Persistence, RoundTripIsExact) {
  const TrainingSet set = small_set();
  TrainOptions opt;
  opt.arch = {256, 8, 2};
  opt.epochs = 5;
  opt.seed = 4;
  opt.validation_grid = 5;
  const PerceptionModel m = train_perception(set, opt);
  const auto path = testing::TempDir() + "/fbopt_model_roundtrip.json";
  save_model(m, path);
  const PerceptionModel back = load_model(path);
  EXPECT_EQ(back.net.widths(), m.net.widths());
  for (std::size_t l = 0; l < m.net.layers().size(); ++l) {
    EXPECT_EQ(back.net.layers()[l].weights, m.net.layers()[l].weights);
    EXPECT_EQ(back.net.layers()[l].bias, m.net.layers()[l].bias);
  }
  EXPECT_EQ(back.measured_error, m.measured_error);
  EXPECT_EQ(back.training.epoch_loss, m.training.epoch_loss);
  const Vec z = set.observations[17];
  EXPECT_EQ(estimate_state(back, z), estimate_state(m, z));
  EXPECT_THROW(load_model(testing::TempDir() + "/does_not_exist.json"), Error);
}

// Default configuration: 16x16 raster over [-2,2]^2, arch 256-64-32-2, 2000 epochs.
TEST(Training, DefaultConfigurationMeetsErrorBaseline) {
  const GenerativeMap map;
  const Box2 region{{-1.9, -1.9}, {1.9, 1.9}};
  const TrainingSet set = generate_training_set(map, region, 30, 7);
  TrainOptions opt;
  opt.seed = 7;
  const PerceptionModel m = train_perception(set, opt);
  EXPECT_LE(m.measured_error, 0.05);
  // error at training points relative to the training RMSE
  double sq = 0.0;
  std::vector<double> errs;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double e = (estimate_state(m, set.observations[i]) - set.positions[i]).norm();
    errs.push_back(e);
    sq += e * e;
  }
  const double rmse = std::sqrt(sq / set.size());
  std::size_t within = 0;
  for (double e : errs) within += e <= 3.0 * rmse;
  EXPECT_GE(static_cast<double>(within) / errs.size(), 0.95);
}
