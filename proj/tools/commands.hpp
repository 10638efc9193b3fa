// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rmmb::cli {

enum ExitCode : int { kPass = 0, kCheckFailed = 1, kUsageError = 2 };

// Bad command line or config; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json default_verify_config();
nlohmann::json default_train_config();
nlohmann::json default_bench_memory_config();
nlohmann::json default_bench_throughput_config();
nlohmann::json default_config(const std::string& command);

// Defaults, merged with the file (if any), then `--a.b=value` overrides
// (value parsed as JSON, else taken as a string), then RMMB_SEED.
nlohmann::json load_config(const std::string& command,
                           const std::optional<std::filesystem::path>& path,
                           std::span<const std::string> overrides, const char* seed_env);

// One JSON object per line.
class JsonlSink {
 public:
  explicit JsonlSink(std::ostream& primary, std::ostream* copy = nullptr)
      : primary_(primary), copy_(copy) {}
  void emit(const nlohmann::json& record);

 private:
  std::ostream& primary_;
  std::ostream* copy_;
};

int run_verify(const nlohmann::json& config, JsonlSink& sink);
int run_train(const nlohmann::json& config, JsonlSink& sink);
int run_variance_report(const nlohmann::json& config, JsonlSink& sink);
int run_bench_memory(const nlohmann::json& config, JsonlSink& sink);
int run_bench_throughput(const nlohmann::json& config, JsonlSink& sink);

// Full command-line entry point; never throws.
int run_main(int argc, char** argv, std::ostream& out, std::ostream& err);

// Heap bytes currently live / high-water mark since the last reset, counted
// by the binary's replacement operator new.
struct AllocStats {
  std::size_t live = 0;
  std::size_t peak = 0;
};
AllocStats alloc_stats() noexcept;
void reset_alloc_peak() noexcept;

}  // namespace rmmb::cli
