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

#ifndef FBOPT_PERCEPTION_HPP
#define FBOPT_PERCEPTION_HPP

/**
 * @file
 * @brief Synthetic camera q(x), training data over a compact region, and a
 * feedforward regression network p_hat(zeta) trained by minibatch SGD.
 *
 * The camera renders a Gaussian blob at the vehicle position onto a W x H
 * grayscale raster (row-major, rows along the second coordinate). The network
 * maps the raster back to a planar position; heading is not estimated.
 */

#include "fbopt/common.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace fbopt {

/// Axis-aligned box [lo, hi] in the plane.
struct Box2 {
  Eigen::Vector2d lo{-2.0, -2.0};
  Eigen::Vector2d hi{2.0, 2.0};

  bool contains(const Eigen::Vector2d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool contains(const Box2& other) const { return contains(other.lo) && contains(other.hi); }
};

struct GenerativeMap {
  int width = 16;
  int height = 16;
  Box2 domain;
  double blob_sigma = 0.35;

  Eigen::Index size() const { return static_cast<Eigen::Index>(width) * height; }

  Eigen::Vector2d cell_center(int col, int row) const {
    const Eigen::Vector2d extent = domain.hi - domain.lo;
    return {domain.lo(0) + (col + 0.5) * extent(0) / width,
            domain.lo(1) + (row + 0.5) * extent(1) / height};
  }
};

/// zeta = q(x): exp(-|c - x|^2 / (2 sigma^2)) at every cell centre c.
inline Vec render_observation(const GenerativeMap& map, const Vec& position) {
  require(position.size() >= 2, ErrorKind::Shape, "render: position needs two coordinates");
  const Eigen::Vector2d p = position.head<2>();
  if (!map.domain.contains(p))
    throw Error(ErrorKind::OutOfDomain, "render: position outside the camera domain");
  Vec zeta(map.size());
  const double inv = 1.0 / (2.0 * map.blob_sigma * map.blob_sigma);
  for (int row = 0; row < map.height; ++row)
    for (int col = 0; col < map.width; ++col)
      zeta(row * map.width + col) = std::exp(-(map.cell_center(col, row) - p).squaredNorm() * inv);
  return zeta;
}

struct TrainingSet {
  GenerativeMap map;
  Box2 region;
  std::vector<Vec> positions;
  std::vector<Vec> observations;

  std::size_t size() const { return positions.size(); }
};

/// n x n grid over the region, each point jittered by up to a quarter of the
/// spacing and clipped back into the region.
inline TrainingSet generate_training_set(const GenerativeMap& map, const Box2& region,
                                         int n_per_axis, std::uint64_t seed) {
  require(n_per_axis >= 2, ErrorKind::Validation, "n_per_axis must be >= 2");
  if (!map.domain.contains(region))
    throw Error(ErrorKind::OutOfDomain, "training region exceeds the camera domain");
  TrainingSet set;
  set.map = map;
  set.region = region;
  Rng rng(seed);
  const Eigen::Vector2d step = (region.hi - region.lo) / (n_per_axis - 1);
  for (int i = 0; i < n_per_axis; ++i)
    for (int j = 0; j < n_per_axis; ++j) {
      Eigen::Vector2d p = region.lo + Eigen::Vector2d(i * step(0), j * step(1));
      p(0) += rng.uniform(-0.25, 0.25) * step(0);
      p(1) += rng.uniform(-0.25, 0.25) * step(1);
      p = p.cwiseMax(region.lo).cwiseMin(region.hi);
      set.positions.push_back(p);
      set.observations.push_back(render_observation(map, p));
    }
  return set;
}

// ---------------------------------------------------------------------------
// Feedforward network

struct DenseLayer {
  Mat weights;  // out x in
  Vec bias;     // out
};

/// tanh hidden layers, linear output.
class Mlp {
 public:
  Mlp() = default;

  /// widths = {input, hidden..., output}; Xavier-uniform initialisation.
  Mlp(const std::vector<int>& widths, std::uint64_t seed) : widths_(widths) {
    require(widths.size() >= 2, ErrorKind::Validation, "network needs at least two widths");
    for (int w : widths) require(w > 0, ErrorKind::Validation, "layer widths must be positive");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const int in = widths[l];
      const int out = widths[l + 1];
      const double bound = std::sqrt(6.0 / (in + out));
      DenseLayer layer{Mat(out, in), Vec::Zero(out)};
      for (int c = 0; c < in; ++c)
        for (int r = 0; r < out; ++r) layer.weights(r, c) = rng.uniform(-bound, bound);
      layers_.push_back(std::move(layer));
    }
  }

  const std::vector<int>& widths() const { return widths_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  Eigen::Index input_dim() const { return widths_.front(); }
  Eigen::Index output_dim() const { return widths_.back(); }

  /// Columns of inputs are samples.
  Mat forward(const Mat& inputs) const {
    Mat a = inputs;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat z = layers_[l].weights * a;
      z.colwise() += layers_[l].bias;
      a = (l + 1 < layers_.size()) ? Mat(z.array().tanh().matrix()) : z;
    }
    return a;
  }

  Vec forward(const Vec& input) const { return forward(Mat(input)).col(0); }

  /// Mean over columns of |p_hat - target|^2 and its gradient, accumulated in
  /// grads (same layout as layers()).
  double loss_and_gradient(const Mat& inputs, const Mat& targets,
                           std::vector<DenseLayer>& grads) const {
    const Eigen::Index n = inputs.cols();
    std::vector<Mat> acts{inputs};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Mat z = layers_[l].weights * acts.back();
      z.colwise() += layers_[l].bias;
      acts.push_back((l + 1 < layers_.size()) ? Mat(z.array().tanh().matrix()) : z);
    }
    const Mat diff = acts.back() - targets;
    const double loss = diff.squaredNorm() / n;

    grads.resize(layers_.size());
    Mat delta = (2.0 / n) * diff;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      grads[l].weights = delta * acts[l].transpose();
      grads[l].bias = delta.rowwise().sum();
      if (l > 0) {
        const Mat back = layers_[l].weights.transpose() * delta;
        delta = back.array() * (1.0 - acts[l].array().square());
      }
    }
    return loss;
  }

 private:
  std::vector<int> widths_;
  std::vector<DenseLayer> layers_;
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  int batch_size = 32;
  double learning_rate = 0.0;
  double momentum = 0.9;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

struct PerceptionModel {
  Mlp net;
  GenerativeMap map;  // camera the network was trained for
  Box2 region;
  TrainingMeta training;
  double measured_error = 0.0;  // max |p_hat(q(x)) - x| on a held-out grid
};

struct TrainOptions {
  std::vector<int> arch{256, 64, 32, 2};
  int epochs = 2000;
  double learning_rate = 0.02;
  double momentum = 0.9;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int validation_grid = 41;
};

inline Vec estimate_state(const PerceptionModel& model, const Vec& zeta) {
  if (zeta.size() != model.net.input_dim())
    throw Error(ErrorKind::Shape, "observation has length " + std::to_string(zeta.size()) +
                                      ", expected " + std::to_string(model.net.input_dim()));
  return model.net.forward(zeta);
}

using Estimator = std::function<Vec(const Vec& zeta)>;

/// Max over a grid_n x grid_n grid of |p_hat(q(x)) - x|.
inline double measure_error_bound(const Estimator& estimator, const GenerativeMap& map,
                                  const Box2& region, int grid_n) {
  require(grid_n >= 2, ErrorKind::Validation, "grid_n must be >= 2");
  if (!map.domain.contains(region))
    throw Error(ErrorKind::OutOfDomain, "measurement region exceeds the camera domain");
  double worst = 0.0;
  const Eigen::Vector2d step = (region.hi - region.lo) / (grid_n - 1);
  for (int i = 0; i < grid_n; ++i)
    for (int j = 0; j < grid_n; ++j) {
      const Eigen::Vector2d p = region.lo + Eigen::Vector2d(i * step(0), j * step(1));
      const Vec est = estimator(render_observation(map, p));
      worst = std::max(worst, (est.head<2>() - p).norm());
    }
  return worst;
}

inline double measure_error_bound(const PerceptionModel& model, const GenerativeMap& map,
                                  const Box2& region, int grid_n) {
  return measure_error_bound([&](const Vec& z) { return estimate_state(model, z); }, map, region,
                             grid_n);
}

/// Minibatch SGD with momentum on the mean squared position error.
inline PerceptionModel train_perception(const TrainingSet& set, const TrainOptions& opt) {
  require(set.size() > 0, ErrorKind::Validation, "training set is empty");
  require(!opt.arch.empty() && opt.arch.back() == 2, ErrorKind::Validation,
          "architecture must end in 2 outputs");
  require(opt.arch.front() == set.map.size(), ErrorKind::Shape,
          "architecture input width must equal the raster size");
  require(opt.epochs > 0 && opt.batch_size > 0 && opt.learning_rate > 0.0,
          ErrorKind::Validation, "epochs, batch size and learning rate must be positive");

  const Eigen::Index n = static_cast<Eigen::Index>(set.size());
  Mat inputs(set.map.size(), n);
  Mat targets(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inputs.col(i) = set.observations[i];
    targets.col(i) = set.positions[i].head<2>();
  }

  PerceptionModel model;
  model.net = Mlp(opt.arch, opt.seed);
  model.map = set.map;
  model.region = set.region;
  model.training.seed = opt.seed;
  model.training.epochs = opt.epochs;
  model.training.batch_size = opt.batch_size;
  model.training.learning_rate = opt.learning_rate;
  model.training.momentum = opt.momentum;

  auto& layers = model.net.layers();
  std::vector<DenseLayer> velocity;
  for (const auto& l : layers)
    velocity.push_back({Mat::Zero(l.weights.rows(), l.weights.cols()), Vec::Zero(l.bias.size())});
  std::vector<DenseLayer> grads;

  Rng rng(opt.seed + 1);
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (Eigen::Index i = n - 1; i > 0; --i)
      std::swap(order[i], order[rng.below(static_cast<std::size_t>(i + 1))]);
    double sum = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += opt.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(opt.batch_size, n - start);
      Mat xb(inputs.rows(), m);
      Mat yb(2, m);
      for (Eigen::Index c = 0; c < m; ++c) {
        xb.col(c) = inputs.col(order[start + c]);
        yb.col(c) = targets.col(order[start + c]);
      }
      const double loss = model.net.loss_and_gradient(xb, yb, grads);
      if (!std::isfinite(loss))
        throw Error(ErrorKind::TrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch));
      for (std::size_t l = 0; l < layers.size(); ++l) {
        velocity[l].weights = opt.momentum * velocity[l].weights - opt.learning_rate * grads[l].weights;
        velocity[l].bias = opt.momentum * velocity[l].bias - opt.learning_rate * grads[l].bias;
        layers[l].weights += velocity[l].weights;
        layers[l].bias += velocity[l].bias;
      }
      sum += loss;
      ++batches;
    }
    model.training.epoch_loss.push_back(sum / batches);
  }
  model.training.final_loss = model.training.epoch_loss.back();
  model.measured_error = measure_error_bound(model, set.map, set.region, opt.validation_grid);
  return model;
}

/// Flags observations far from every training observation.
class NoveltyDetector {
 public:
  /// threshold_scale multiplies the largest nearest-neighbour distance inside
  /// the training set.
  explicit NoveltyDetector(const TrainingSet& set, double threshold_scale = 1.5)
      : reference_(set.observations) {
    double widest = 0.0;
    for (std::size_t i = 0; i < reference_.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < reference_.size(); ++j)
        if (i != j) best = std::min(best, (reference_[i] - reference_[j]).norm());
      if (std::isfinite(best)) widest = std::max(widest, best);
    }
    threshold_ = threshold_scale * widest;
  }

  double nearest_distance(const Vec& zeta) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : reference_) best = std::min(best, (r - zeta).norm());
    return best;
  }

  bool out_of_distribution(const Vec& zeta) const { return nearest_distance(zeta) > threshold_; }
  double threshold() const { return threshold_; }

 private:
  std::vector<Vec> reference_;
  double threshold_ = 0.0;
};

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const PerceptionModel& m) {
  nlohmann::json j;
  j["format"] = "fbopt-perception";
  j["version"] = kModelFormatVersion;
  j["arch"] = m.net.widths();
  j["seed"] = m.training.seed;
  j["W"] = m.map.width;
  j["H"] = m.map.height;
  j["domain"] = {m.map.domain.lo(0), m.map.domain.lo(1), m.map.domain.hi(0), m.map.domain.hi(1)};
  j["blob_sigma"] = m.map.blob_sigma;
  j["region"] = {m.region.lo(0), m.region.lo(1), m.region.hi(0), m.region.hi(1)};
  j["training"] = {{"epochs", m.training.epochs},
                   {"batch_size", m.training.batch_size},
                   {"learning_rate", m.training.learning_rate},
                   {"momentum", m.training.momentum},
                   {"final_loss", m.training.final_loss},
                   {"epoch_loss", m.training.epoch_loss}};
  j["measured_error"] = m.measured_error;
  auto& layers = j["layers"];
  layers = nlohmann::json::array();
  for (const auto& l : m.net.layers()) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    layers.push_back({{"rows", l.weights.rows()},
                      {"cols", l.weights.cols()},
                      {"weights", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return j;
}

inline PerceptionModel model_from_json(const nlohmann::json& j) {
  require(j.value("format", "") == "fbopt-perception", ErrorKind::Validation,
          "not a perception model file");
  require(j.value("version", 0) == kModelFormatVersion, ErrorKind::Validation,
          "unsupported model format version");
  PerceptionModel m;
  const auto arch = j.at("arch").get<std::vector<int>>();
  m.net = Mlp(arch, j.at("seed").get<std::uint64_t>());
  m.map.width = j.at("W").get<int>();
  m.map.height = j.at("H").get<int>();
  const auto dom = j.at("domain").get<std::vector<double>>();
  m.map.domain = Box2{{dom.at(0), dom.at(1)}, {dom.at(2), dom.at(3)}};
  m.map.blob_sigma = j.at("blob_sigma").get<double>();
  const auto reg = j.at("region").get<std::vector<double>>();
  m.region = Box2{{reg.at(0), reg.at(1)}, {reg.at(2), reg.at(3)}};
  const auto& t = j.at("training");
  m.training.seed = j.at("seed").get<std::uint64_t>();
  m.training.epochs = t.at("epochs").get<int>();
  m.training.batch_size = t.at("batch_size").get<int>();
  m.training.learning_rate = t.at("learning_rate").get<double>();
  m.training.momentum = t.at("momentum").get<double>();
  m.training.final_loss = t.at("final_loss").get<double>();
  m.training.epoch_loss = t.at("epoch_loss").get<std::vector<double>>();
  m.measured_error = j.at("measured_error").get<double>();
  require(m.map.size() == m.net.input_dim(), ErrorKind::Shape, "raster size does not match arch");

  const auto& layers = j.at("layers");
  require(layers.size() == m.net.layers().size(), ErrorKind::Shape, "layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& dst = m.net.layers()[l];
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    require(static_cast<Eigen::Index>(w.size()) == dst.weights.size() &&
                static_cast<Eigen::Index>(b.size()) == dst.bias.size(),
            ErrorKind::Shape, "layer " + std::to_string(l) + " has wrong size");
    for (Eigen::Index r = 0; r < dst.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < dst.weights.cols(); ++c)
        dst.weights(r, c) = w[r * dst.weights.cols() + c];
    for (Eigen::Index i = 0; i < dst.bias.size(); ++i) dst.bias(i) = b[i];
  }
  return m;
}

inline void save_model(const PerceptionModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Filesystem, "cannot open " + path + " for writing");
  out << to_json(m).dump(1) << '\n';
  if (!out) throw Error(ErrorKind::Filesystem, "write failed: " + path);
}

inline PerceptionModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Filesystem, "cannot open " + path);
  return model_from_json(nlohmann::json::parse(in));
}

}  // namespace fbopt

#endif  // FBOPT_PERCEPTION_HPP
