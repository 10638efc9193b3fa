// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "rmmb/error.hpp"
#include "rmmb/json.hpp"
#include "rmmb/linear.hpp"
#include "rmmb/rng.hpp"
#include "rmmb/trainer.hpp"

namespace rmmb::cli {

using nlohmann::json;

namespace {

// Structural check of a merged config against its defaults: no unknown
// keys, and every value keeps the JSON kind of its default. Keys listed in
// `free` (nullable objects, paths) are left to the typed parser.
void check_shape(const json& reference, const json& actual, const std::string& where,
                 const std::vector<std::string>& free) {
  for (const auto& [key, value] : actual.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (std::find(free.begin(), free.end(), path) != free.end()) continue;
    const auto it = reference.find(key);
    if (it == reference.end()) throw UsageError("config: unknown key '" + path + "'");
    const bool number_ok = it->is_number() && value.is_number();
    if (!number_ok && it->type() != value.type()) {
      throw UsageError("config: '" + path + "' should be " + std::string(it->type_name()) +
                       ", got " + std::string(value.type_name()));
    }
    if (it->is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
      throw UsageError("config: '" + path + "' must be non-negative");
    }
    if (it->is_number_integer() && value.is_number_float()) {
      throw UsageError("config: '" + path + "' must be an integer");
    }
    if (value.is_object()) check_shape(*it, value, path, free);
  }
}

std::vector<std::string> free_keys(const std::string& command) {
  if (command == "train" || command == "variance-report") {
    return {"sketch", "dataset", "checkpoint"};
  }
  return {};
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

TrainConfig parse_train_config(const json& config) {
  json train = config;
  train.erase("checkpoint");
  try {
    return train.get<TrainConfig>();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

LinearLayer bench_layer(Rng& rng, std::size_t n_out, std::size_t n_in,
                        const std::optional<SketchSpec>& spec) {
  Matrix w = random_matrix(rng, n_out, n_in);
  std::vector<double> b(n_out, 0.0);
  if (spec) return LinearLayer::randomized(std::move(w), std::move(b), *spec);
  return LinearLayer::exact(std::move(w), std::move(b));
}

struct MeasuredPass {
  std::size_t retained_bytes = 0;  // heap held by the saved context after forward
  std::size_t peak_bytes = 0;      // high-water mark above baseline over forward+backward
};

MeasuredPass measure_layer_path(const LinearLayer& layer, const Matrix& x, const Matrix& dy) {
  MeasuredPass m;
  const AllocStats before = alloc_stats();
  reset_alloc_peak();
  {
    auto fwd = forward(layer, x, 0);
    const AllocStats after_fwd = alloc_stats();
    m.retained_bytes = after_fwd.live - before.live - sizeof(double) * fwd.output.size();
    auto grads = backward(layer, fwd.context, dy);
    (void)grads;
  }
  m.peak_bytes = alloc_stats().peak - before.live;
  return m;
}

}  // namespace

void JsonlSink::emit(const json& record) {
  const std::string line = record.dump();
  primary_ << line << '\n';
  primary_.flush();
  if (copy_) *copy_ << line << '\n';
}

json default_verify_config() {
  return {
      {"seed", 20220517u},
      {"suites",
       {"counterexample", "sampling_variance_oracle", "sketch_variance_closed_form", "sketch_second_moment", "unbiasedness",
        "ratio_bound_sweep",
        "rematerialization", "gradient_check", "memory_accounting"}},
      {"counterexample", {{"eps", {0.5, 1.0, 2.0, 10.0}}, {"rel_tol", 1e-12}}},
      {"sampling_variance_oracle", {{"cases", 200u}, {"max_batch", 32u}, {"max_dim", 16u}, {"rel_tol", 1e-10}}},
      {"sketch_variance_closed_form",
       {{"cases", 10u}, {"samples", 100000u}, {"max_batch", 32u}, {"max_dim", 8u}, {"rel_tol", 0.05}}},
      {"sketch_second_moment",
       {{"cases", 10u}, {"samples", 100000u}, {"max_batch", 32u}, {"max_dim", 8u}, {"n_se", 4.0}}},
      {"unbiasedness",
       {{"samples", 10000u}, {"batch", 32u}, {"n_in", 8u}, {"n_out", 16u}, {"rho", 0.25},
        {"n_se", 4.0}}},
      {"ratio_bound_sweep", {{"draws", 1000u}, {"min_batch", 4u}, {"max_batch", 64u}, {"max_dim", 8u}}},
      {"rematerialization", {{"batch", 32u}, {"n_in", 8u}, {"n_out", 16u}, {"rho", 0.5}}},
      {"gradient_check", {{"h", 1e-5}, {"dx_rel_tol", 1e-6}, {"dw_rel_tol", 1e-5}, {"entries", 20u}}},
      {"memory_accounting",
       {{"batches", {2u, 7u, 16u, 32u, 64u, 100u, 128u}},
        {"rhos", {0.05, 0.1, 0.25, 0.5, 0.75, 1.0}},
        {"n_in", 16u},
        {"n_out", 8u}}},
  };
}

json default_train_config() {
  return {
      {"batch_size", 16u},
      {"epochs", 20u},
      {"learning_rate", 0.1},
      {"hidden", 16u},
      {"sketch",
       {{"distribution", "gaussian"}, {"rho", 0.5}, {"bproj_min", 1u}, {"bproj_max", nullptr},
        {"seed", 3u}}},
      {"dataset", {{"n_samples", 256u}, {"dim", 2u}, {"classes", 2}, {"separation", 10.0}, {"seed", 0u}}},
      {"init_seed", 1u},
      {"shuffle_seed", 2u},
      {"log_every", 1u},
      {"track_variance", true},
      {"paired_exact", false},
  };
}

json default_bench_memory_config() {
  return {
      {"batches", {16u, 32u, 64u, 128u, 256u}},
      {"n_in", {64u, 256u}},
      {"n_out", 64u},
      {"rhos", {0.1, 0.25, 0.5, 1.0}},
      {"distribution", "gaussian"},
      {"seed", 11u},
  };
}

json default_bench_throughput_config() {
  return {
      {"batch", 256u},
      {"n_in", 256u},
      {"n_out", 256u},
      {"rhos", {0.05, 0.1, 0.25, 0.5, 1.0}},
      {"distribution", "gaussian"},
      {"warmup", 2u},
      {"iterations", 10u},
      {"seed", 13u},
  };
}

json default_config(const std::string& command) {
  if (command == "verify") return default_verify_config();
  if (command == "train" || command == "variance-report") return default_train_config();
  if (command == "bench-memory") return default_bench_memory_config();
  if (command == "bench-throughput") return default_bench_throughput_config();
  throw UsageError("unknown command '" + command + "'");
}

json load_config(const std::string& command, const std::optional<std::filesystem::path>& path,
                 std::span<const std::string> overrides, const char* seed_env) {
  const json defaults = default_config(command);
  json config = defaults;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw UsageError("cannot open config '" + path->string() + "'");
    json user;
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config '" + path->string() + "': " + e.what());
    }
    if (!user.is_object()) throw UsageError("config must be a JSON object");
    check_shape(defaults, user, "", free_keys(command));
    config.merge_patch(user);
  }
  for (const auto& raw : overrides) {
    if (raw.rfind("--", 0) != 0 || raw.find('=') == std::string::npos) {
      throw UsageError("unrecognized argument '" + raw + "' (overrides are --key=value)");
    }
    const auto eq = raw.find('=');
    std::string key = raw.substr(2, eq - 2);
    if (key.empty()) throw UsageError("empty override key in '" + raw + "'");
    std::string pointer = "/" + key;
    for (char& ch : pointer) ch = ch == '.' ? '/' : ch;
    json patch;
    patch[json::json_pointer(pointer)] = parse_override_value(raw.substr(eq + 1));
    check_shape(defaults, patch, "", free_keys(command));
    config[json::json_pointer(pointer)] = patch[json::json_pointer(pointer)];
  }
  if (seed_env != nullptr && *seed_env != '\0') {
    std::uint64_t seed = 0;
    try {
      std::size_t used = 0;
      seed = std::stoull(seed_env, &used);
      if (used != std::string(seed_env).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError(std::string("RMMB_SEED is not an unsigned integer: '") + seed_env + "'");
    }
    if (command == "train" || command == "variance-report") {
      if (config.contains("dataset") && config["dataset"].is_object() &&
          !config["dataset"].contains("path")) {
        config["dataset"]["seed"] = seed;
      }
      config["init_seed"] = seed + 1;
      config["shuffle_seed"] = seed + 2;
      if (config.contains("sketch") && config["sketch"].is_object()) {
        config["sketch"]["seed"] = seed + 3;
      }
    } else {
      config["seed"] = seed;
    }
  }
  if (command == "train" || command == "variance-report") parse_train_config(config);
  return config;
}

int run_train(const json& config, JsonlSink& sink) {
  const TrainConfig tc = parse_train_config(config);
  const Dataset data = load_dataset(tc);
  const TrainResult result = train(tc, data);
  for (const auto& m : result.metrics) {
    json rec = m;
    rec["type"] = "step";
    sink.emit(rec);
  }
  const LossAccuracy final_score = evaluate(result.model, data);
  json summary = {{"type", "summary"},
                  {"steps", result.metrics.empty() ? 0 : result.metrics.back().step + 1},
                  {"train_loss", final_score.loss},
                  {"train_accuracy", final_score.accuracy},
                  {"randomized", tc.sketch.has_value()}};
  if (auto it = config.find("checkpoint"); it != config.end() && it->is_string()) {
    std::ofstream out(it->get<std::string>(), std::ios::binary);
    if (!out) throw UsageError("cannot write checkpoint '" + it->get<std::string>() + "'");
    write_checkpoint(out, result.model);
    summary["checkpoint"] = *it;
  }
  sink.emit(summary);
  return kPass;
}

int run_variance_report(const json& config, JsonlSink& sink) {
  TrainConfig tc = parse_train_config(config);
  tc.track_variance = true;
  tc.paired_exact = tc.sketch.has_value();
  const TrainResult result = train(tc);
  for (const auto& m : result.metrics) {
    for (const auto& layer : m.layers) {
      json rec = layer;
      rec["type"] = "variance";
      rec["epoch"] = m.epoch;
      rec["loss"] = m.loss;
      sink.emit(rec);
    }
  }
  return kPass;
}

int run_bench_memory(const json& config, JsonlSink& sink) {
  Rng rng(config.at("seed").get<std::uint64_t>());
  const auto n_out = config.at("n_out").get<std::size_t>();
  const Distribution dist = parse_distribution(config.at("distribution").get<std::string>());
  for (auto n_in : config.at("n_in").get<std::vector<std::size_t>>()) {
    for (auto batch : config.at("batches").get<std::vector<std::size_t>>()) {
      const Matrix x = random_matrix(rng, batch, n_in);
      const Matrix dy = random_matrix(rng, batch, n_out);
      const LinearLayer exact = bench_layer(rng, n_out, n_in, std::nullopt);
      const MeasuredPass exact_pass = measure_layer_path(exact, x, dy);
      for (double rho : config.at("rhos").get<std::vector<double>>()) {
        SketchSpec spec;
        spec.distribution = dist;
        spec.rho = rho;
        spec.master_seed = rng.next_u64();
        const LinearLayer rmm = bench_layer(rng, n_out, n_in, spec);
        const MeasuredPass rmm_pass = measure_layer_path(rmm, x, dy);
        const std::size_t proj = compressed_dim(batch, spec);
        const std::size_t exact_bytes = sizeof(double) * batch * n_in;
        const std::size_t rmm_bytes = stored_activation_bytes(forward(rmm, x, 0).context);
        sink.emit({{"B", batch},
                   {"N_in", n_in},
                   {"N_out", n_out},
                   {"rho", rho},
                   {"B_proj", proj},
                   {"exact_bytes", exact_bytes},
                   {"rmm_bytes", rmm_bytes},
                   {"ratio", static_cast<double>(proj) / static_cast<double>(batch)},
                   {"saving_factor", static_cast<double>(batch) / static_cast<double>(proj)},
                   {"measured_exact_retained_bytes", exact_pass.retained_bytes},
                   {"measured_rmm_retained_bytes", rmm_pass.retained_bytes},
                   {"measured_exact_peak_bytes", exact_pass.peak_bytes},
                   {"measured_rmm_peak_bytes", rmm_pass.peak_bytes}});
      }
    }
  }
  return kPass;
}

int run_bench_throughput(const json& config, JsonlSink& sink) {
  Rng rng(config.at("seed").get<std::uint64_t>());
  const auto batch = config.at("batch").get<std::size_t>();
  const auto n_in = config.at("n_in").get<std::size_t>();
  const auto n_out = config.at("n_out").get<std::size_t>();
  const auto warmup = config.at("warmup").get<std::size_t>();
  const auto iterations = config.at("iterations").get<std::size_t>();
  if (iterations == 0) throw UsageError("bench-throughput: iterations must be >= 1");
  const Distribution dist = parse_distribution(config.at("distribution").get<std::string>());
  const Matrix x = random_matrix(rng, batch, n_in);
  const Matrix dy = random_matrix(rng, batch, n_out);

  auto samples_per_sec = [&](const LinearLayer& layer) {
    std::int64_t step = 0;
    for (std::size_t i = 0; i < warmup; ++i, ++step) {
      auto f = forward(layer, x, step);
      (void)backward(layer, f.context, dy);
    }
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < iterations; ++i, ++step) {
      auto f = forward(layer, x, step);
      (void)backward(layer, f.context, dy);
    }
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    return static_cast<double>(batch * iterations) / dt.count();
  };

  const double baseline = samples_per_sec(bench_layer(rng, n_out, n_in, std::nullopt));
  sink.emit({{"mode", "exact"},
             {"B", batch},
             {"N_in", n_in},
             {"N_out", n_out},
             {"samples_per_sec", baseline},
             {"relative_throughput", 1.0}});
  for (double rho : config.at("rhos").get<std::vector<double>>()) {
    SketchSpec spec;
    spec.distribution = dist;
    spec.rho = rho;
    spec.master_seed = rng.next_u64();
    const double sps = samples_per_sec(bench_layer(rng, n_out, n_in, spec));
    sink.emit({{"mode", "randomized"},
               {"distribution", std::string(to_string(dist))},
               {"rho", rho},
               {"B", batch},
               {"B_proj", compressed_dim(batch, spec)},
               {"N_in", n_in},
               {"N_out", n_out},
               {"samples_per_sec", sps},
               {"relative_throughput", sps / baseline}});
  }
  return kPass;
}

int run_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"rmmb: randomized backpropagation through linear layers"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  std::optional<std::string> out_path;
  const char* commands[] = {"verify", "variance-report", "train", "bench-memory",
                            "bench-throughput"};
  const char* descriptions[] = {
      "run the verification suites (exit 0 iff all checks pass)",
      "paired exact/randomized variance diagnostics per layer per step",
      "train the two-layer perceptron on synthetic or CSV data",
      "stored activation bytes per (B, N_in, rho), analytic and measured",
      "forward+backward samples/sec, exact vs randomized"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i], descriptions[i]);
    sub->add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
    sub->add_option("--out", out_path, "also write the JSONL stream to this file");
    sub->allow_extras();
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsageError;
  }

  CLI::App* chosen = nullptr;
  for (auto* sub : subs)
    if (sub->parsed()) chosen = sub;
  const std::string command = chosen->get_name();

  try {
    std::optional<std::filesystem::path> path;
    if (config_path) path = *config_path;
    const auto extras = chosen->remaining();
    const json config = load_config(command, path, extras, std::getenv("RMMB_SEED"));

    std::ofstream file;
    if (out_path) {
      file.open(*out_path);
      if (!file) throw UsageError("cannot open --out '" + *out_path + "'");
    }
    JsonlSink sink(out, out_path ? &file : nullptr);
    if (command == "verify") return run_verify(config, sink);
    if (command == "train") return run_train(config, sink);
    if (command == "variance-report") return run_variance_report(config, sink);
    if (command == "bench-memory") return run_bench_memory(config, sink);
    return run_bench_throughput(config, sink);
  } catch (const UsageError& e) {
    err << "rmmb " << command << ": " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "rmmb " << command << ": " << e.what() << '\n';
    return kUsageError;
  } catch (const DivergenceError& e) {
    err << "rmmb " << command << ": diverged: " << e.what() << '\n';
    return kCheckFailed;
  } catch (const std::exception& e) {
    err << "rmmb " << command << ": " << e.what() << '\n';
    return kCheckFailed;
  }
}

}  // namespace rmmb::cli
