/*
 * Copyright 2026 The soundexpl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Drives the built command-line tool as a subprocess.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("soundexpl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliRun run(const std::string& args) {
    const auto err_path = dir_ / "stderr.txt";
    const std::string cmd = "cd " + dir_.string() + " && " + SOUNDEXPL_CLI + " " + args + " 2>" + err_path.string();
    CliRun r;
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_path);
    return r;
  }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

const char* kSmallCohort = R"({"cohort": {"n_positive": 100, "n_negative": 300},
  "train": {"epochs": 3, "batch_size": 64}, "n_boot": 100})";

TEST_F(CliTest, AxiomsPrintsTheoremInstance) {
  const auto r = run("axioms --models 3 --pairs 2 --sweep-steps 512");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("attribution1=(2,-1)"), std::string::npos);
  EXPECT_NE(r.out.find("attribution2=(0,1)"), std::string::npos);
  EXPECT_NE(r.out.find("baseline_invariance=violated i=1 j=2"), std::string::npos);
  EXPECT_NE(r.out.find("\nverdict="), std::string::npos);
  EXPECT_NE(r.out.find("sweep axiom=completeness checks=6 holds=6"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  auto r = run("gen --bogus");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(run("").code, 1);
  r = run("gen --out-matrix m.txt");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--seed is required"), std::string::npos);
  EXPECT_EQ(run("train --data m.txt --out x.json").code, 1);
  EXPECT_EQ(run("experiment --out-dir x").code, 1);
}

TEST_F(CliTest, MissingFileExitsTwo) {
  EXPECT_EQ(run("train --data missing.txt --out x.json --seed 1").code, 2);
  EXPECT_EQ(run("explain --graph missing.json --input 1").code, 2);
}

TEST_F(CliTest, InvalidConfigExitsOne) {
  write("bad.json", R"({"cohort": {"target_sparsity": 0.999}})");
  const auto r = run("gen --config bad.json --seed 1 --out-matrix m.txt");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos);
}

TEST_F(CliTest, PrintConfigIsJson) {
  const auto r = run("experiment --print-config --lambda-mask 0.002");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["train"]["lambda_mask"].get<double>(), 0.002);
  EXPECT_EQ(j["removal"]["stop_delta"].get<double>(), 0.006);
  EXPECT_EQ(j["cohort"]["target_sparsity"].get<double>(), 0.94);
}

TEST_F(CliTest, GenIsByteIdentical) {
  write("c.json", kSmallCohort);
  ASSERT_EQ(run("gen --config c.json --seed 7 --out-cohort a.jsonl --out-matrix a.txt").code, 0);
  ASSERT_EQ(run("gen --config c.json --seed 7 --out-cohort b.jsonl --out-matrix b.txt").code, 0);
  EXPECT_EQ(slurp(dir_ / "a.jsonl"), slurp(dir_ / "b.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a.txt"), slurp(dir_ / "b.txt"));
  EXPECT_EQ(slurp(dir_ / "a.txt.cols"), slurp(dir_ / "b.txt.cols"));
  EXPECT_EQ(slurp(dir_ / "a.txt.labels"), slurp(dir_ / "b.txt.labels"));
  const auto man = nlohmann::json::parse(slurp(dir_ / "a.txt.manifest.json"));
  EXPECT_EQ(man["subcommand"], "gen");
  EXPECT_EQ(man["outputs"].size(), 4u);
  EXPECT_EQ(man["seeds"]["cohort"].get<std::uint64_t>(), 7u);
}

TEST_F(CliTest, StageCommandsChain) {
  write("c.json", kSmallCohort);
  ASSERT_EQ(run("gen --config c.json --seed 3 --out-matrix tr.txt --out-test-matrix te.txt").code, 0);
  auto r = run("select --config c.json --data tr.txt --seed 3 --out bin.json --out-selection sel.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(nlohmann::json::parse(r.out)["selected"].get<int>(), 0);
  r = run("reduce --model bin.json --data tr.txt --selection sel.csv --out red.csv --out-trace trace.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto red = nlohmann::json::parse(r.out);
  EXPECT_GE(red["final_auc"].get<double>(), red["baseline_auc"].get<double>() - 0.006);
  r = run("retrain --config c.json --data tr.txt --test te.txt --selection red.csv --seed 3 --n-boot 100 --out f.json");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["stage"], "final");
  r = run("report --model f.json --data te.txt --out rank.csv --svg rank.svg");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "rank.csv").rfind("feature,univariate_auc,stage_selected\n", 0), 0u);
  EXPECT_TRUE(fs::exists(dir_ / "rank.svg"));
  EXPECT_TRUE(fs::exists(dir_ / "rank.csv.manifest.json"));
  r = run("explain --model f.json --out g.json");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto g = nlohmann::json::parse(slurp(dir_ / "g.json"));
  std::size_t inputs = 0;
  for (const auto& v : g["vertices"]) inputs += v["kind"] == "input";
  std::string values;
  for (std::size_t i = 0; i < inputs; ++i) values += (i ? "," : "") + std::to_string(0.25 * (i % 4));
  r = run("explain --graph g.json --input " + values);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out)["sound"].get<bool>());
}

TEST_F(CliTest, ExperimentRerunIsByteIdentical) {
  write("c.json", kSmallCohort);
  ASSERT_EQ(run("experiment --config c.json --seed 7 --out-dir a --svg").code, 0);
  const auto r = run("experiment --config c.json --seed 7 --out-dir b --svg");
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / e.path().filename())) << e.path().filename();
  }
  EXPECT_EQ(files, 11u);
  const auto man = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(man["outputs"].size(), 10u);
  EXPECT_EQ(man["seeds"]["master"].get<std::uint64_t>(), 7u);
  EXPECT_NE(r.err.find("experiment finished"), std::string::npos);
  EXPECT_EQ(nlohmann::json::parse(r.out)["stages"].size(), 4u);
}

}  // namespace
