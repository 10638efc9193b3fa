// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rmmb/linear.hpp"
#include "rmmb/matrix.hpp"
#include "rmmb/sketch.hpp"
#include "rmmb/variance.hpp"

namespace rmmb {

struct Dataset {
  Matrix features;          // n x dim
  std::vector<int> labels;  // n, values in [0, classes)
  int classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
};

// Isotropic unit-variance Gaussian clusters. Centers are pairwise
// `separation` apart: scaled basis vectors when classes <= dim, otherwise
// evenly spaced on a circle in the first two coordinates (a line if dim = 1).
// Sample i belongs to class i % classes.
struct BlobParams {
  std::size_t n_samples = 200;
  std::size_t dim = 2;
  int classes = 2;
  double separation = 10.0;
  std::uint64_t seed = 0;
};

// Throws ConfigError unless n >= 2 * classes, classes >= 2, dim >= 1 and
// separation >= 0.
Dataset generate_blobs(const BlobParams& params);

// One sample per line: features, then an integer label.
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::filesystem::path& path);
void write_dataset_csv(std::ostream& out, const Dataset& data);

// Two linear layers with a ReLU between them.
struct MlpModel {
  LinearLayer layer1;  // N_in -> H, layer_id 0
  LinearLayer layer2;  // H -> C,    layer_id 1

  // Weights N(0, 1/N_in) per layer, zero biases. Both layers share `sketch`.
  static MlpModel init(std::size_t n_in, std::size_t hidden, std::size_t classes,
                       const std::optional<SketchSpec>& sketch, std::uint64_t seed);
};

// Concatenated layer blobs, layer1 first.
void write_checkpoint(std::ostream& out, const MlpModel& model);
MlpModel read_checkpoint(std::istream& in);

struct LossAccuracy {
  double loss = 0.0;      // mean softmax cross-entropy
  double accuracy = 0.0;  // argmax, ties to the lowest class index
};

// Loss and accuracy of row-wise logits against labels.
LossAccuracy score_logits(const Matrix& logits, std::span<const int> labels);

// Exact forward over the whole dataset; never sketches.
LossAccuracy evaluate(const MlpModel& model, const Dataset& data);

// Per-layer diagnostics for one step.
struct LayerStepMetrics {
  VarianceReport variance;
  std::size_t stored_bytes = 0;        // what the saved context holds
  std::size_t exact_bytes = 0;         // what an exact layer would hold
  std::optional<double> sketch_error_sq;  // ‖dW_rmm − dW_exact‖², paired runs only
};

struct StepMetrics {
  std::int64_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<LayerStepMetrics> layers;
  std::size_t stored_activation_bytes = 0;  // sum over layers
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  double learning_rate = 0.1;
  std::size_t hidden = 16;
  std::optional<SketchSpec> sketch;  // absent: exact baseline
  std::optional<std::filesystem::path> dataset_path;
  BlobParams blobs;                  // used when dataset_path is empty
  std::uint64_t init_seed = 1;
  std::uint64_t shuffle_seed = 2;
  std::size_t log_every = 1;
  bool track_variance = true;
  // Also compute the exact weight gradient on the same batch and record the
  // realized sketch error. Only meaningful with a sketch.
  bool paired_exact = false;

  // Throws ConfigError.
  void validate() const;
};

struct StepGradients {
  double loss = 0.0;
  double accuracy = 0.0;
  LayerGrads layer1;
  LayerGrads layer2;
  std::vector<LayerStepMetrics> layers;
};

// Forward, loss and hand-chained backward for one minibatch. The layer inputs
// are handed to the layers and not kept; variance diagnostics rebuild them
// from `x` and the exactly stored pre-activation.
StepGradients compute_step(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                           std::int64_t step, bool track_variance, bool paired_exact);

struct TrainResult {
  std::vector<StepMetrics> metrics;
  MlpModel model;
};

Dataset load_dataset(const TrainConfig& config);
// Plain SGD over without-replacement shuffles; the trailing partial batch of
// each epoch is dropped. Throws DivergenceError naming the step and layer on
// the first non-finite loss, activation or gradient.
TrainResult train(const TrainConfig& config, const Dataset& data);
TrainResult train(const TrainConfig& config);

}  // namespace rmmb
