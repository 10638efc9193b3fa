// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmmb/linear.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "rmmb/error.hpp"

namespace rmmb {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'M', 'L'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <std::size_t N>
void read_exact(std::istream& in, std::uint8_t (&buf)[N], const char* what) {
  in.read(reinterpret_cast<char*>(buf), N);
  if (in.gcount() != static_cast<std::streamsize>(N)) {
    throw IntegrityError(std::string("layer blob truncated while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  std::uint8_t buf[4];
  read_exact(in, buf, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const char* what) {
  std::uint8_t buf[8];
  read_exact(in, buf, what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

LinearLayer LinearLayer::exact(Matrix weight, std::vector<double> bias, std::int64_t layer_id) {
  LinearLayer layer{std::move(weight), std::move(bias), std::nullopt, layer_id};
  layer.validate();
  return layer;
}

LinearLayer LinearLayer::randomized(Matrix weight, std::vector<double> bias, SketchSpec spec,
                                    std::int64_t layer_id) {
  spec.validate();
  LinearLayer layer{std::move(weight), std::move(bias), spec, layer_id};
  layer.validate();
  return layer;
}

void LinearLayer::validate() const {
  if (weight.rows() == 0 || weight.cols() == 0) throw ShapeError("LinearLayer: empty weight");
  if (bias.size() != weight.rows()) {
    throw ShapeError("LinearLayer: bias length " + std::to_string(bias.size()) +
                     " does not match N_out " + std::to_string(weight.rows()));
  }
  if (!all_finite(weight)) throw DomainError("LinearLayer: non-finite weight");
  for (double v : bias) {
    if (!std::isfinite(v)) throw DomainError("LinearLayer: non-finite bias");
  }
}

SavedContext::SavedContext(ExactSaved saved)
    : saved_(std::move(saved)), batch_(std::get<ExactSaved>(saved_).input.rows()) {}

SavedContext::SavedContext(RandomizedSaved saved)
    : saved_(std::move(saved)), batch_(std::get<RandomizedSaved>(saved_).handle.batch) {}

const Matrix& SavedContext::stored() const noexcept {
  if (const auto* e = exact()) return e->input;
  return randomized()->projected;
}

ForwardResult forward(const LinearLayer& layer, const Matrix& x, std::int64_t step) {
  if (x.rows() == 0) throw ShapeError("forward: empty batch");
  if (x.cols() != layer.in_features()) {
    throw ShapeError("forward: input " + x.shape_string() + " does not match N_in " +
                     std::to_string(layer.in_features()));
  }
  Matrix out = matmul_nt(x, layer.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  if (!layer.sketch) return {std::move(out), SavedContext(ExactSaved{x})};

  const SketchHandle handle = derive_handle(*layer.sketch, layer.layer_id, step, x.rows());
  Matrix projected = project(x, sample_sketch(handle));
  return {std::move(out), SavedContext(RandomizedSaved{std::move(projected), handle})};
}

LayerGrads backward(const LinearLayer& layer, const SavedContext& ctx, const Matrix& dy) {
  if (dy.rows() != ctx.batch() || dy.cols() != layer.out_features()) {
    throw ShapeError("backward: upstream gradient " + dy.shape_string() + " does not match " +
                     std::to_string(ctx.batch()) + "x" + std::to_string(layer.out_features()));
  }
  if (ctx.stored().cols() != layer.in_features()) {
    throw ShapeError("backward: saved activation " + ctx.stored().shape_string() +
                     " does not match N_in " + std::to_string(layer.in_features()));
  }

  LayerGrads grads;
  grads.d_input = matmul(dy, layer.weight);
  grads.d_bias = column_sums(dy);

  if (const auto* e = ctx.exact()) {
    grads.d_weight = exact_weight_grad(e->input, dy);
    return grads;
  }
  const auto& r = *ctx.randomized();
  const Matrix s = sample_sketch(r.handle);
  if (s.rows() != dy.rows() || s.cols() != r.projected.rows()) {
    throw IntegrityError("backward: rematerialized sketch " + s.shape_string() +
                         " disagrees with stored projection " + r.projected.shape_string());
  }
  // (dyᵀ S) Xproj, never forming the B x B product S Sᵀ.
  grads.d_weight = matmul(matmul_tn(dy, s), r.projected);
  return grads;
}

Matrix exact_weight_grad(const Matrix& x, const Matrix& dy) {
  if (x.rows() != dy.rows()) {
    throw ShapeError("exact_weight_grad: batch rows differ, X " + x.shape_string() + " vs dY " +
                     dy.shape_string());
  }
  return matmul_tn(dy, x);
}

std::size_t stored_activation_bytes(const SavedContext& ctx) noexcept {
  return sizeof(double) * ctx.stored().size();
}

double memory_ratio(std::size_t batch, const SketchSpec& spec) {
  return static_cast<double>(compressed_dim(batch, spec)) / static_cast<double>(batch);
}

std::vector<std::uint8_t> serialize_layer(const LinearLayer& layer) {
  layer.validate();
  if (layer.out_features() > std::numeric_limits<std::uint32_t>::max() ||
      layer.in_features() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("serialize_layer: dims exceed u32");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(12 + 8 * (layer.weight.size() + layer.bias.size()));
  put_u32(out, static_cast<std::uint32_t>(layer.out_features()));
  put_u32(out, static_cast<std::uint32_t>(layer.in_features()));
  for (double v : layer.weight.data()) put_f64(out, v);
  for (double v : layer.bias) put_f64(out, v);
  return out;
}

void write_layer(std::ostream& out, const LinearLayer& layer) {
  const auto blob = serialize_layer(layer);
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
}

LinearLayer read_layer(std::istream& in, std::int64_t layer_id) {
  std::uint8_t magic[4];
  read_exact(in, magic, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw IntegrityError("layer blob: bad magic");
  const std::uint32_t n_out = get_u32(in, "N_out");
  const std::uint32_t n_in = get_u32(in, "N_in");
  if (n_out == 0 || n_in == 0) throw IntegrityError("layer blob: zero dimension");
  std::vector<double> w(static_cast<std::size_t>(n_out) * n_in);
  for (double& v : w) v = get_f64(in, "weights");
  std::vector<double> b(n_out);
  for (double& v : b) v = get_f64(in, "bias");
  Matrix weight;
  try {
    weight = Matrix(n_out, n_in, std::move(w));
  } catch (const DomainError&) {
    throw IntegrityError("layer blob: non-finite weight");
  }
  return LinearLayer::exact(std::move(weight), std::move(b), layer_id);
}

LinearLayer deserialize_layer(std::span<const std::uint8_t> bytes, std::int64_t layer_id) {
  std::istringstream in(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  return read_layer(in, layer_id);
}

}  // namespace rmmb
