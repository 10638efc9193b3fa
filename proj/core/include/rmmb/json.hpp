// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

// nlohmann::json bindings for the config and report types. Header-only so
// the core library itself does not depend on a JSON library.

#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "rmmb/error.hpp"
#include "rmmb/sketch.hpp"
#include "rmmb/trainer.hpp"
#include "rmmb/variance.hpp"

namespace rmmb {

namespace json_detail {

template <typename T>
void read_optional(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

}  // namespace json_detail

inline void to_json(nlohmann::json& j, const SketchSpec& s) {
  j = {{"distribution", std::string(to_string(s.distribution))},
       {"rho", s.rho},
       {"bproj_min", s.bproj_min},
       {"bproj_max", s.bproj_max ? nlohmann::json(*s.bproj_max) : nlohmann::json(nullptr)},
       {"seed", s.master_seed}};
}

// Keys: distribution, rho, bproj_min, bproj_max (null = unbounded), seed.
inline void from_json(const nlohmann::json& j, SketchSpec& s) {
  using json_detail::read_optional;
  json_detail::reject_unknown(j, {"distribution", "rho", "bproj_min", "bproj_max", "seed"},
                              "sketch");
  std::string dist(to_string(s.distribution));
  read_optional(j, "distribution", dist);
  s.distribution = parse_distribution(dist);
  read_optional(j, "rho", s.rho);
  read_optional(j, "bproj_min", s.bproj_min);
  if (auto it = j.find("bproj_max"); it != j.end()) {
    if (it->is_null()) {
      s.bproj_max.reset();
    } else {
      std::size_t v = 0;
      read_optional(j, "bproj_max", v);
      s.bproj_max = v;
    }
  }
  read_optional(j, "seed", s.master_seed);
  s.validate();
}

inline void to_json(nlohmann::json& j, const VarianceReport& r) {
  auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
  j = {{"layer_id", r.layer_id}, {"step", r.step},         {"B", r.batch},
       {"d_sgd_sq", r.d_sgd_sq}, {"alpha", opt(r.alpha)},   {"applicable", r.applicable}};
  // Exact-mode reports carry no sketch fields at all.
  if (r.d_rmm_sq) {
    j["B_proj"] = opt(r.proj);
    j["d_rmm_sq"] = *r.d_rmm_sq;
    j["lhs"] = opt(r.lhs);
    j["bound"] = opt(r.bound);
    j["violation"] = r.violation;
  }
}

inline void to_json(nlohmann::json& j, const LayerStepMetrics& m) {
  j = m.variance;
  j["stored_bytes"] = m.stored_bytes;
  j["exact_bytes"] = m.exact_bytes;
  j["memory_ratio"] = static_cast<double>(m.stored_bytes) / static_cast<double>(m.exact_bytes);
  if (m.sketch_error_sq) j["sketch_error_sq"] = *m.sketch_error_sq;
}

inline void to_json(nlohmann::json& j, const StepMetrics& m) {
  j = {{"step", m.step},
       {"epoch", m.epoch},
       {"loss", m.loss},
       {"accuracy", m.accuracy},
       {"stored_activation_bytes", m.stored_activation_bytes},
       {"layers", m.layers}};
}

inline void from_json(const nlohmann::json& j, BlobParams& p) {
  using json_detail::read_optional;
  json_detail::reject_unknown(j, {"n_samples", "dim", "classes", "separation", "seed"}, "blobs");
  read_optional(j, "n_samples", p.n_samples);
  read_optional(j, "dim", p.dim);
  read_optional(j, "classes", p.classes);
  read_optional(j, "separation", p.separation);
  read_optional(j, "seed", p.seed);
}

// Keys: batch_size, epochs, learning_rate, hidden, sketch (object or null),
// dataset ({"path": ...} or blob params), init_seed, shuffle_seed,
// log_every, track_variance, paired_exact.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  using json_detail::read_optional;
  json_detail::reject_unknown(j,
                              {"batch_size", "epochs", "learning_rate", "hidden", "sketch",
                               "dataset", "init_seed", "shuffle_seed", "log_every",
                               "track_variance", "paired_exact"},
                              "train");
  read_optional(j, "batch_size", c.batch_size);
  read_optional(j, "epochs", c.epochs);
  read_optional(j, "learning_rate", c.learning_rate);
  read_optional(j, "hidden", c.hidden);
  if (auto it = j.find("sketch"); it != j.end()) {
    if (it->is_null()) {
      c.sketch.reset();
    } else {
      c.sketch = it->get<SketchSpec>();
    }
  }
  if (auto it = j.find("dataset"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ConfigError("train: dataset must be an object");
    if (auto p = it->find("path"); p != it->end()) {
      if (!p->is_string()) throw ConfigError("train: dataset.path must be a string");
      c.dataset_path = p->get<std::string>();
    } else {
      c.blobs = it->get<BlobParams>();
    }
  }
  read_optional(j, "init_seed", c.init_seed);
  read_optional(j, "shuffle_seed", c.shuffle_seed);
  read_optional(j, "log_every", c.log_every);
  read_optional(j, "track_variance", c.track_variance);
  read_optional(j, "paired_exact", c.paired_exact);
  c.validate();
}

}  // namespace rmmb
