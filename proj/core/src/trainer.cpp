// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmmb/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "rmmb/csv.hpp"
#include "rmmb/error.hpp"
#include "rmmb/rng.hpp"

namespace rmmb {

namespace {

Matrix class_centers(const BlobParams& p) {
  Matrix centers(static_cast<std::size_t>(p.classes), p.dim);
  const auto classes = static_cast<std::size_t>(p.classes);
  if (classes <= p.dim) {
    for (std::size_t c = 0; c < classes; ++c) centers(c, c) = p.separation / std::numbers::sqrt2;
  } else if (p.dim == 1) {
    for (std::size_t c = 0; c < classes; ++c) centers(c, 0) = p.separation * static_cast<double>(c);
  } else {
    const double step = 2.0 * std::numbers::pi / static_cast<double>(classes);
    const double radius = p.separation / (2.0 * std::sin(step / 2.0));
    for (std::size_t c = 0; c < classes; ++c) {
      centers(c, 0) = radius * std::cos(step * static_cast<double>(c));
      centers(c, 1) = radius * std::sin(step * static_cast<double>(c));
    }
  }
  return centers;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = m.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix relu(const Matrix& h) {
  Matrix a = h;
  for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
  return a;
}

// Row-wise softmax of logits minus one-hot labels, divided by B: the
// gradient of the mean cross-entropy with respect to the logits.
Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels) {
  Matrix g(logits.rows(), logits.cols());
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - zmax);
    auto out = g.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = std::exp(z[j] - zmax) / denom * inv_b;
    out[static_cast<std::size_t>(labels[i])] -= inv_b;
  }
  return g;
}

LayerStepMetrics layer_metrics(const LinearLayer& layer, const SavedContext& ctx,
                               const Matrix& input, const Matrix& dy, const Matrix& d_weight,
                               std::int64_t step, bool track_variance, bool paired_exact) {
  LayerStepMetrics m;
  m.stored_bytes = stored_activation_bytes(ctx);
  m.exact_bytes = sizeof(double) * ctx.batch() * layer.in_features();
  if (track_variance) {
    if (const auto* r = ctx.randomized()) {
      m.variance = check_bound(input, dy, r->handle.proj, layer.layer_id, step);
    } else {
      m.variance = sgd_report(input, dy, layer.layer_id, step);
    }
  } else {
    m.variance.batch = ctx.batch();
    m.variance.layer_id = layer.layer_id;
    m.variance.step = step;
  }
  if (paired_exact && ctx.is_randomized()) {
    m.sketch_error_sq = frobenius_norm_sq(d_weight - exact_weight_grad(input, dy));
  }
  return m;
}

void require_finite(const Matrix& m, const char* what, std::int64_t step, std::int64_t layer_id) {
  if (!all_finite(m)) {
    throw DivergenceError(std::string("non-finite ") + what + " at step " + std::to_string(step) +
                              " in layer " + std::to_string(layer_id),
                          step, static_cast<int>(layer_id));
  }
}

void sgd_update(LinearLayer& layer, const LayerGrads& g, double lr) {
  auto w = layer.weight.data();
  auto dw = g.d_weight.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * dw[i];
  for (std::size_t j = 0; j < layer.bias.size(); ++j) layer.bias[j] -= lr * g.d_bias[j];
}

Matrix apply(const LinearLayer& layer, const Matrix& x) {
  Matrix out = matmul_nt(x, layer.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  return out;
}

}  // namespace

Dataset generate_blobs(const BlobParams& p) {
  if (p.classes < 2) throw ConfigError("blobs: classes must be >= 2");
  if (p.dim < 1) throw ConfigError("blobs: dim must be >= 1");
  if (p.n_samples < 2 * static_cast<std::size_t>(p.classes)) {
    throw ConfigError("blobs: n_samples must be >= 2 * classes");
  }
  if (!(p.separation >= 0.0) || !std::isfinite(p.separation)) {
    throw ConfigError("blobs: separation must be finite and >= 0");
  }
  const Matrix centers = class_centers(p);
  Rng rng(p.seed);
  Dataset d{Matrix(p.n_samples, p.dim), std::vector<int>(p.n_samples), p.classes};
  for (std::size_t i = 0; i < p.n_samples; ++i) {
    const std::size_t c = i % static_cast<std::size_t>(p.classes);
    d.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < p.dim; ++j) d.features(i, j) = centers(c, j) + rng.normal();
  }
  return d;
}

Dataset read_dataset_csv(std::istream& in) {
  const auto rows = read_csv_rows(in);
  if (rows.empty()) throw ConfigError("dataset csv: no rows");
  if (rows.front().size() < 2) throw ConfigError("dataset csv: need features and a label");
  const std::size_t dim = rows.front().size() - 1;
  Dataset d{Matrix(rows.size(), dim), std::vector<int>(rows.size()), 0};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end() - 1, d.features.row(i).begin());
    const double label = rows[i].back();
    if (label < 0 || label != std::floor(label) || label > 1e6) {
      throw ConfigError("dataset csv: row " + std::to_string(i + 1) + " has invalid label");
    }
    d.labels[i] = static_cast<int>(label);
    d.classes = std::max(d.classes, d.labels[i] + 1);
  }
  if (d.classes < 2) throw ConfigError("dataset csv: need at least two classes");
  return d;
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset csv: cannot open " + path.string());
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.features.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << data.labels[i] << '\n';
  }
}

MlpModel MlpModel::init(std::size_t n_in, std::size_t hidden, std::size_t classes,
                        const std::optional<SketchSpec>& sketch, std::uint64_t seed) {
  Rng rng(seed);
  auto gaussian = [&rng](std::size_t rows, std::size_t cols) {
    Matrix w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : w.data()) v = rng.normal() * scale;
    return w;
  };
  Matrix w1 = gaussian(hidden, n_in);
  Matrix w2 = gaussian(classes, hidden);
  if (sketch) {
    return {LinearLayer::randomized(std::move(w1), std::vector<double>(hidden), *sketch, 0),
            LinearLayer::randomized(std::move(w2), std::vector<double>(classes), *sketch, 1)};
  }
  return {LinearLayer::exact(std::move(w1), std::vector<double>(hidden), 0),
          LinearLayer::exact(std::move(w2), std::vector<double>(classes), 1)};
}

void write_checkpoint(std::ostream& out, const MlpModel& model) {
  write_layer(out, model.layer1);
  write_layer(out, model.layer2);
}

MlpModel read_checkpoint(std::istream& in) {
  LinearLayer l1 = read_layer(in, 0);
  LinearLayer l2 = read_layer(in, 1);
  if (l2.in_features() != l1.out_features()) {
    throw IntegrityError("checkpoint: layer dims do not chain");
  }
  return {std::move(l1), std::move(l2)};
}

LossAccuracy score_logits(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size() || logits.rows() == 0) {
    throw ShapeError("score_logits: " + logits.shape_string() + " logits for " +
                     std::to_string(labels.size()) + " labels");
  }
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    const auto label = static_cast<std::size_t>(labels[i]);
    if (labels[i] < 0 || label >= z.size()) throw ShapeError("score_logits: label out of range");
    const auto best = std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (double v : z) denom += std::exp(v - *best);
    loss += std::log(denom) - (z[label] - *best);
    if (static_cast<std::size_t>(best - z.begin()) == label) ++correct;
  }
  const double n = static_cast<double>(logits.rows());
  return {loss / n, static_cast<double>(correct) / n};
}

LossAccuracy evaluate(const MlpModel& model, const Dataset& data) {
  if (data.features.cols() != model.layer1.in_features()) {
    throw ShapeError("evaluate: dataset dim " + std::to_string(data.features.cols()) +
                     " does not match model input " + std::to_string(model.layer1.in_features()));
  }
  const Matrix logits = apply(model.layer2, relu(apply(model.layer1, data.features)));
  return score_logits(logits, data.labels);
}

StepGradients compute_step(const MlpModel& model, const Matrix& x, std::span<const int> labels,
                           std::int64_t step, bool track_variance, bool paired_exact) {
  auto first = forward(model.layer1, x, step);
  const Matrix& pre = first.output;
  require_finite(pre, "activation", step, model.layer1.layer_id);
  auto second = forward(model.layer2, relu(pre), step);
  require_finite(second.output, "logits", step, model.layer2.layer_id);

  StepGradients out;
  const auto scored = score_logits(second.output, labels);
  out.loss = scored.loss;
  out.accuracy = scored.accuracy;
  if (!std::isfinite(out.loss)) {
    throw DivergenceError("non-finite loss at step " + std::to_string(step) + " in layer " +
                              std::to_string(model.layer2.layer_id),
                          step, static_cast<int>(model.layer2.layer_id));
  }

  const Matrix d_logits = cross_entropy_grad(second.output, labels);
  out.layer2 = backward(model.layer2, second.context, d_logits);
  Matrix d_pre = out.layer2.d_input;
  for (std::size_t i = 0; i < d_pre.size(); ++i) {
    if (!(pre.data()[i] > 0.0)) d_pre.data()[i] = 0.0;
  }
  out.layer1 = backward(model.layer1, first.context, d_pre);
  require_finite(out.layer2.d_weight, "weight gradient", step, model.layer2.layer_id);
  require_finite(out.layer1.d_weight, "weight gradient", step, model.layer1.layer_id);

  const bool need_inputs = track_variance || paired_exact;
  const Matrix empty;
  out.layers.push_back(layer_metrics(model.layer1, first.context, need_inputs ? x : empty, d_pre,
                                     out.layer1.d_weight, step, track_variance, paired_exact));
  out.layers.push_back(layer_metrics(model.layer2, second.context,
                                     need_inputs ? relu(pre) : empty, d_logits,
                                     out.layer2.d_weight, step, track_variance, paired_exact));
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (hidden < 1) throw ConfigError("train: hidden must be >= 1");
  if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
  if (sketch) sketch->validate();
}

Dataset load_dataset(const TrainConfig& config) {
  if (config.dataset_path) return read_dataset_csv(*config.dataset_path);
  return generate_blobs(config.blobs);
}

TrainResult train(const TrainConfig& config, const Dataset& data) {
  config.validate();
  if (data.size() < config.batch_size) {
    throw ConfigError("train: dataset has " + std::to_string(data.size()) +
                      " samples, fewer than batch_size");
  }
  TrainResult result{{}, MlpModel::init(data.features.cols(), config.hidden,
                                        static_cast<std::size_t>(data.classes), config.sketch,
                                        config.init_seed)};
  MlpModel& model = result.model;

  std::vector<std::size_t> order(data.size());
  std::vector<int> batch_labels(config.batch_size);
  const std::size_t batches = data.size() / config.batch_size;
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix64(config.shuffle_seed ^ mix64(epoch)));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    for (std::size_t b = 0; b < batches; ++b, ++step) {
      const std::span<const std::size_t> idx(order.data() + b * config.batch_size,
                                             config.batch_size);
      for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = data.labels[idx[i]];
      const bool logged = step % static_cast<std::int64_t>(config.log_every) == 0;
      StepGradients g =
          compute_step(model, gather_rows(data.features, idx), batch_labels, step,
                       config.track_variance && logged, config.paired_exact && logged);
      sgd_update(model.layer2, g.layer2, config.learning_rate);
      sgd_update(model.layer1, g.layer1, config.learning_rate);
      if (!all_finite(model.layer1.weight) || !all_finite(model.layer2.weight)) {
        const auto bad = all_finite(model.layer1.weight) ? model.layer2.layer_id
                                                         : model.layer1.layer_id;
        throw DivergenceError("non-finite weights after step " + std::to_string(step) +
                                  " in layer " + std::to_string(bad),
                              step, static_cast<int>(bad));
      }
      if (logged) {
        StepMetrics m{step, epoch, g.loss, g.accuracy, std::move(g.layers), 0};
        for (const auto& l : m.layers) m.stored_activation_bytes += l.stored_bytes;
        result.metrics.push_back(std::move(m));
      }
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config) { return train(config, load_dataset(config)); }

}  // namespace rmmb
