// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <stdlib.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"

namespace rmmb::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
  int code = -1;
  std::vector<json> records;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "rmmb");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  RunResult r;
  r.code = run_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) r.records.push_back(json::parse(line));
  }
  return r;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("rmmb_cli_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path file(const std::string& name, const std::string& contents) const {
    std::ofstream(path_ / name) << contents;
    return path_ / name;
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

class SeedEnvGuard {
 public:
  explicit SeedEnvGuard(const char* value) { ::setenv("RMMB_SEED", value, 1); }
  ~SeedEnvGuard() { ::unsetenv("RMMB_SEED"); }
};

const std::vector<std::string> kQuickTrain = {"--epochs=2", "--dataset.n_samples=64"};

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& more) {
  base.insert(base.end(), more.begin(), more.end());
  return base;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"frobnicate"}).code, kUsageError);
  EXPECT_EQ(run({}).code, kUsageError);
  EXPECT_EQ(run({"train", "--config", "/nonexistent/cfg.json"}).code, kUsageError);
  TempDir dir;
  EXPECT_EQ(run({"train", "--config", dir.file("bad.json", "{ not json").string()}).code,
            kUsageError);
  EXPECT_EQ(run({"train", "--config", dir.file("key.json", R"({"epochz": 3})").string()}).code,
            kUsageError);
  EXPECT_EQ(run({"train", "--config", dir.file("type.json", R"({"epochs": "x"})").string()}).code,
            kUsageError);
  EXPECT_EQ(run({"train", "--epochs=-1"}).code, kUsageError);
  EXPECT_EQ(run({"train", "--sketch.rho=1.5"}).code, kUsageError);
  EXPECT_EQ(run({"verify", "--suites=[\"nope\"]"}).code, kUsageError);
  EXPECT_EQ(run({"train", "stray"}).code, kUsageError);
  const auto r = run({"train", "--config", "/nonexistent/cfg.json"});
  EXPECT_NE(r.err.find("/nonexistent/cfg.json"), std::string::npos);
}

TEST(Cli, BadSeedEnvIsUsageError) {
  SeedEnvGuard guard("twelve");
  EXPECT_EQ(run({"bench-memory"}).code, kUsageError);
}

TEST(Verify, SubsetPassesAndZeroToleranceFails) {
  const auto ok = run({"verify", R"(--suites=["counterexample","memory_accounting","rematerialization"])"});
  EXPECT_EQ(ok.code, kPass) << ok.err;
  ASSERT_FALSE(ok.records.empty());
  EXPECT_EQ(ok.records.back().at("suite"), "summary");
  EXPECT_EQ(ok.records.back().at("pass"), true);
  for (const auto& rec : ok.records) {
    if (rec.at("suite") == "summary") continue;
    for (const char* key : {"name", "expected", "observed", "tolerance", "pass"})
      EXPECT_TRUE(rec.contains(key)) << key;
  }

  const auto bad = run({"verify", R"(--suites=["sampling_variance_oracle"])", "--sampling_variance_oracle.rel_tol=0",
                        "--sampling_variance_oracle.cases=50"});
  EXPECT_EQ(bad.code, kCheckFailed);
  EXPECT_EQ(bad.records.back().at("pass"), false);
}

TEST(Verify, OutFileDuplicatesStdout) {
  TempDir dir;
  const auto path = dir / "verify.jsonl";
  const auto r = run({"verify", "--out", path.string(), R"(--suites=["counterexample"])"});
  ASSERT_EQ(r.code, kPass);
  std::ifstream in(path);
  const std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(file, r.out);
}

TEST(Train, EmitsStepsAndSummary) {
  const auto r = run(kQuickTrain);
  ASSERT_EQ(r.code, kUsageError);  // no subcommand
  const auto t = run(with({"train"}, kQuickTrain));
  ASSERT_EQ(t.code, kPass) << t.err;
  ASSERT_EQ(t.records.size(), 9u);  // 2 epochs x 4 steps + summary
  EXPECT_EQ(t.records.front().at("type"), "step");
  EXPECT_EQ(t.records.back().at("type"), "summary");
  EXPECT_EQ(t.records.back().at("steps"), 8);
  EXPECT_EQ(t.records.back().at("randomized"), true);
  EXPECT_EQ(t.records.front().at("layers").size(), 2u);
}

TEST(Train, DeterministicAndSeedEnvChangesOutput) {
  const auto a = run(with({"train"}, kQuickTrain));
  const auto b = run(with({"train"}, kQuickTrain));
  EXPECT_EQ(a.out, b.out);
  std::string seeded;
  {
    SeedEnvGuard guard("12345");
    seeded = run(with({"train"}, kQuickTrain)).out;
    EXPECT_EQ(seeded, run(with({"train"}, kQuickTrain)).out);
  }
  EXPECT_NE(seeded, a.out);
}

TEST(Train, WritesCheckpointAndReadsCsvDataset) {
  TempDir dir;
  std::string csv;
  for (int i = 0; i < 40; ++i) {
    const int label = i % 2;
    csv += std::to_string(label * 8.0 + (i % 5) * 0.1) + "," + std::to_string(-label * 8.0) + "," +
           std::to_string(label) + "\n";
  }
  const auto data = dir.file("data.csv", csv);
  const auto ckpt = dir / "model.bin";
  const auto r = run({"train", "--epochs=3", "--dataset={\"path\":\"" + data.string() + "\"}",
                      "--checkpoint=" + ckpt.string()});
  ASSERT_EQ(r.code, kPass) << r.err;
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_GT(fs::file_size(ckpt), 8u);
  EXPECT_EQ(r.records.back().at("checkpoint"), ckpt.string());
}

TEST(VarianceReport, RhoOneHasUnitMemoryRatio) {
  const auto r = run(with({"variance-report", "--sketch.rho=1"}, kQuickTrain));
  ASSERT_EQ(r.code, kPass) << r.err;
  ASSERT_FALSE(r.records.empty());
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.at("type"), "variance");
    EXPECT_EQ(rec.at("memory_ratio"), 1.0);
    EXPECT_EQ(rec.at("B_proj"), rec.at("B"));
    EXPECT_TRUE(rec.contains("sketch_error_sq"));
  }
}

TEST(VarianceReport, HalfRhoAtBatch64) {
  const auto r = run({"variance-report", "--batch_size=64", "--epochs=1", "--sketch.rho=0.5"});
  ASSERT_EQ(r.code, kPass) << r.err;
  ASSERT_EQ(r.records.size(), 8u);  // 256 / 64 steps x 2 layers
  for (const auto& rec : r.records) {
    EXPECT_EQ(rec.at("B"), 64);
    EXPECT_EQ(rec.at("B_proj"), 32);
    EXPECT_EQ(rec.at("memory_ratio"), 0.5);
    EXPECT_EQ(rec.at("violation"), false);
  }
}

TEST(VarianceReport, BaselineOmitsSketchFields) {
  const auto r = run(with({"variance-report", "--sketch=null"}, kQuickTrain));
  ASSERT_EQ(r.code, kPass) << r.err;
  ASSERT_FALSE(r.records.empty());
  for (const auto& rec : r.records) {
    for (const char* key : {"d_rmm_sq", "B_proj", "lhs", "bound", "sketch_error_sq"})
      EXPECT_FALSE(rec.contains(key)) << key;
    EXPECT_TRUE(rec.at("d_sgd_sq").is_number());
    EXPECT_EQ(rec.at("memory_ratio"), 1.0);
  }
}

TEST(BenchMemory, RatiosAndMeasuredBytes) {
  const auto r = run({"bench-memory", "--batches=[16,64]", "--n_in=[32]", "--rhos=[0.1,0.5,1.0]"});
  ASSERT_EQ(r.code, kPass) << r.err;
  ASSERT_EQ(r.records.size(), 6u);
  for (const auto& rec : r.records) {
    const auto b = rec.at("B").get<std::size_t>();
    const auto k = rec.at("B_proj").get<std::size_t>();
    EXPECT_DOUBLE_EQ(rec.at("ratio").get<double>(), static_cast<double>(k) / b);
    EXPECT_EQ(rec.at("exact_bytes"), 8u * b * 32u);
    EXPECT_EQ(rec.at("rmm_bytes"), 8u * k * 32u);
    EXPECT_EQ(rec.at("measured_rmm_retained_bytes"), rec.at("rmm_bytes"));
    EXPECT_EQ(rec.at("measured_exact_retained_bytes"), rec.at("exact_bytes"));
  }
}

TEST(BenchThroughput, ReportsEveryRho) {
  const auto r = run({"bench-throughput", "--batch=32", "--n_in=16", "--n_out=16", "--rhos=[0.25,1.0]",
                      "--warmup=1", "--iterations=3"});
  ASSERT_EQ(r.code, kPass) << r.err;
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].at("mode"), "exact");
  EXPECT_EQ(r.records[0].at("relative_throughput"), 1.0);
  EXPECT_EQ(r.records[1].at("B_proj"), 8);
  for (const auto& rec : r.records) EXPECT_GT(rec.at("samples_per_sec").get<double>(), 0.0);
  EXPECT_EQ(run({"bench-throughput", "--iterations=0"}).code, kUsageError);
}

TEST(LoadConfig, OverridesAndSeed) {
  const std::vector<std::string> overrides{"--sketch.rho=0.25", "--dataset.seed=9"};
  const json c = load_config("train", std::nullopt, overrides, "100");
  EXPECT_EQ(c.at("sketch").at("rho"), 0.25);
  EXPECT_EQ(c.at("dataset").at("seed"), 100);  // the environment wins
  EXPECT_EQ(c.at("init_seed"), 101);
  EXPECT_EQ(c.at("shuffle_seed"), 102);
  EXPECT_EQ(c.at("sketch").at("seed"), 103);
  EXPECT_EQ(load_config("verify", std::nullopt, {}, "7").at("seed"), 7);
  const std::vector<std::string> str{"--sketch.distribution=rademacher"};
  EXPECT_EQ(load_config("train", std::nullopt, str, nullptr).at("sketch").at("distribution"),
            "rademacher");
}

}  // namespace
}  // namespace rmmb::cli
