// Copyright 2026 The LDRF Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "ldrf/io.hpp"

namespace ldrf {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun ldrf_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run_command(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("ldrf_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    ASSERT_EQ(ldrf_cli({"--seed", "5", "gen-data", "--out", p("train.bin"), "--samples", "128", "--test-out",
                        p("test.bin"), "--test-samples", "64"})
                  .code,
              0);
    ASSERT_EQ(ldrf_cli({"--seed", "5", "train-toy", "--data", p("train.bin"), "--out", p("model.ldrf"), "--epochs", "2"}).code,
              0);
    ASSERT_EQ(ldrf_cli({"--seed", "5", "decompose", "--model", p("model.ldrf"), "--data", p("train.bin"), "--energy",
                        "0.5", "--out", p("dec.ldrf"), "--report", p("ranks.json")})
                  .code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }
  static std::string p(const std::string& name) { return (dir / name).string(); }
  static nlohmann::json ranks() { return nlohmann::json::parse(slurp(p("ranks.json"))); }
  static int rank_of(const std::string& layer) {
    const auto r = ranks();
    for (const auto& l : r.at("layers"))
      if (l.at("name").get<std::string>() == layer) return l.at("z").get<int>();
    return -1;
  }
  static void write_config(const std::string& name, const nlohmann::json& j) { std::ofstream(p(name)) << j.dump(); }
  static fs::path dir;
};

fs::path Cli::dir;

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(ldrf_cli({}).code, 2);
  EXPECT_EQ(ldrf_cli({"bogus"}).code, 2);
  EXPECT_EQ(ldrf_cli({"eval", "--model", p("model.ldrf")}).code, 2);
  EXPECT_EQ(ldrf_cli({"--help"}).code, 0);
  const CliRun missing = ldrf_cli({"eval", "--model", p("nope.ldrf"), "--data", p("test.bin")});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("nope.ldrf"), std::string::npos);
}

TEST_F(Cli, RankViolationCitesValidRange) {
  const int z = rank_of("conv2");
  ASSERT_GT(z, 0);
  write_config("bad.json", {{"energy", 0.5}, {"layers", {{{"name", "conv2"}, {"keep", z}}}}, {"criterion", "topk"}, {"seed", 1}});
  const CliRun r = ldrf_cli({"prune", "--model", p("dec.ldrf"), "--config", p("bad.json"), "--data", p("train.bin"), "--out",
                          p("bad.ldrf")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("(" + std::to_string(z) + ", 32]"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(p("bad.ldrf")));
}

TEST_F(Cli, MalformedConfigExitsTwo) {
  std::ofstream(p("broken.json")) << "{\"energy\": 0.5, ";
  EXPECT_EQ(ldrf_cli({"prune", "--model", p("dec.ldrf"), "--config", p("broken.json"), "--data", p("train.bin"), "--out",
                      p("x.ldrf")})
                .code,
            2);
}

TEST_F(Cli, DivergenceExitsThreeWithPartialReport) {
  write_config("hot.json", {{"energy", 0.5},
                            {"layers", {{{"name", "conv1"}, {"keep", rank_of("conv1") + 1}}}},
                            {"criterion", "topk"},
                            {"optim", {{"lr", 1e6}, {"iters", 32}}},
                            {"seed", 1}});
  const CliRun r = ldrf_cli({"prune", "--model", p("dec.ldrf"), "--config", p("hot.json"), "--data", p("train.bin"), "--out",
                          p("hot.ldrf"), "--report", p("hot_report.json")});
  EXPECT_EQ(r.code, 3) << r.err;
  const auto j = nlohmann::json::parse(slurp(p("hot_report.json")));
  EXPECT_EQ(j.at("diverged_layer"), "conv1");
}

TEST_F(Cli, PruneRecomposeEvalFlops) {
  write_config("ok.json", {{"energy", 0.5},
                           {"layers", {{{"name", "conv1"}, {"keep", 8}}, {{"name", "conv2"}, {"keep", 16}}}},
                           {"criterion", "weight"},
                           {"optim", {{"iters", 40}}},
                           {"seed", 3}});
  ASSERT_GE(8, rank_of("conv1") + 1);
  ASSERT_GE(16, rank_of("conv2") + 1);
  CliRun r = ldrf_cli({"--reproducible", "prune", "--model", p("dec.ldrf"), "--config", p("ok.json"), "--data",
                    p("train.bin"), "--out", p("pruned.ldrf"), "--report", p("r1.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = ldrf_cli({"--reproducible", "prune", "--model", p("dec.ldrf"), "--config", p("ok.json"), "--data", p("train.bin"),
                "--out", p("pruned2.ldrf"), "--report", p("r2.json")});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(slurp(p("pruned.ldrf")), slurp(p("pruned2.ldrf")));
  EXPECT_EQ(slurp(p("r1.json")), slurp(p("r2.json")));
  const auto report = nlohmann::json::parse(slurp(p("r1.json")));
  EXPECT_EQ(report.at("version"), 1);
  EXPECT_EQ(report.at("seed"), 3);
  EXPECT_TRUE(report.contains("config"));

  r = ldrf_cli({"recompose", "--model", p("pruned.ldrf"), "--out", p("slim.ldrf"), "--data", p("test.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).at("equivalent"));
  EXPECT_EQ(load_model(p("slim.ldrf")).layers[0].out, 8);

  r = ldrf_cli({"eval", "--model", p("slim.ldrf"), "--data", p("test.bin")});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out).at("samples"), 64);

  r = ldrf_cli({"--flops-scope", "conv", "flops", "--model", p("slim.ldrf"), "--reference", p("model.ldrf")});
  ASSERT_EQ(r.code, 0);
  EXPECT_GT(nlohmann::json::parse(r.out).at("speedup").get<double>(), 1.5);
  r = ldrf_cli({"flops", "--model", p("slim.ldrf"), "--format", "csv"});
  EXPECT_NE(r.out.find("conv1"), std::string::npos);

  r = ldrf_cli({"baseline-prune", "--model", p("model.ldrf"), "--config", p("ok.json"), "--data", p("train.bin"), "--out",
                p("base.ldrf")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("config").at("prune").at("criterion"), "weight");
}

TEST_F(Cli, GenDataIsSeeded) {
  ASSERT_EQ(ldrf_cli({"--seed", "9", "gen-data", "--out", p("a.bin"), "--samples", "16"}).code, 0);
  ASSERT_EQ(ldrf_cli({"--seed", "9", "gen-data", "--out", p("b.bin"), "--samples", "16"}).code, 0);
  ASSERT_EQ(ldrf_cli({"--seed", "10", "gen-data", "--out", p("c.bin"), "--samples", "16"}).code, 0);
  EXPECT_EQ(slurp(p("a.bin")), slurp(p("b.bin")));
  EXPECT_NE(slurp(p("a.bin")), slurp(p("c.bin")));
}

TEST_F(Cli, AnalyzeReportsRanges) {
  const CliRun r = ldrf_cli({"analyze", "--model", p("model.ldrf"), "--energy", "0.5"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("layers").size(), 4u);
  EXPECT_EQ(ldrf_cli({"analyze", "--model", p("model.ldrf"), "--energy", "1.5"}).code, 2);
}

}  // namespace
}  // namespace ldrf
