// Copyright 2026 The LangDA Authors. All Rights Reserved.
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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "langda/experiment.hpp"
#include "test_support.hpp"

namespace langda {
namespace {

using testing::slurp;
using testing::spit;
using testing::TempDir;

std::string fixed_clock() { return "2026-01-01T00:00:00Z"; }

TEST(Preset, DefaultsCarryTrainingConstants) {
  const ExperimentPreset p;
  EXPECT_EQ(p.train.tau, 0.968);
  EXPECT_EQ(p.train.alpha, 0.999);
  EXPECT_EQ(p.train.lambda_p, 0.1);
  EXPECT_NO_THROW(p.validate());
}

TEST(Preset, JsonRoundTrip) {
  for (const std::string& name : builtin_preset_names()) {
    const ExperimentPreset p = builtin_preset(name);
    const nlohmann::json j = p;
    EXPECT_EQ(j.get<ExperimentPreset>(), p) << name;
  }
}

TEST(Preset, StrictKeys) {
  nlohmann::json j = builtin_preset("smoke");
  j["train"]["bogus"] = 1;
  EXPECT_ANY_THROW(j.get<ExperimentPreset>());
  j = builtin_preset("smoke");
  j["extra"] = true;
  EXPECT_ANY_THROW(j.get<ExperimentPreset>());
}

TEST(Preset, InvalidTauNamesKeyAndRange) {
  TempDir dir;
  nlohmann::json j = builtin_preset("smoke");
  j["train"]["tau"] = 1.5;
  spit(dir / "bad.json", j.dump());
  try {
    load_config(dir / "bad.json");
    FAIL();
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("tau"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(0,1)"), std::string::npos) << msg;
  }
}

TEST(Preset, SaveLoadRoundTrip) {
  TempDir dir;
  const ExperimentPreset p = builtin_preset("default");
  save_config(dir / "p.json", p);
  EXPECT_EQ(load_config(dir / "p.json"), p);
  EXPECT_EQ(resolve_preset((dir / "p.json").string()), p);
  EXPECT_THROW(resolve_preset("no-such-preset"), InvalidArgument);
}

TEST(Preset, ShippedFilesMatchBuiltins) {
  for (const std::string& name : builtin_preset_names()) {
    const auto path = std::filesystem::path(LANGDA_SOURCE_DIR) / "presets" / (name + ".json");
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_EQ(load_config(path), builtin_preset(name)) << name;
  }
}

TEST(Variants, Expansion) {
  const auto sweep = expand_variants({"lambda-sweep"}, 0.1);
  ASSERT_EQ(sweep.size(), kLambdaSweep.size());
  for (std::size_t i = 0; i < sweep.size(); ++i) EXPECT_EQ(sweep[i].lambda_p, kLambdaSweep[i]);
  const auto v = expand_variants({"no-lang", "langda", "class-prompt", "pixel-align"}, 0.1);
  EXPECT_EQ(v[0].lambda_p, 0.0);
  EXPECT_EQ(v[1].lambda_p, 0.1);
  EXPECT_TRUE(v[2].class_prompt_captions);
  EXPECT_EQ(v[3].alignment, Alignment::kPixel);
  EXPECT_EQ(expand_variants({"lambda=0.5"}, 0.1)[0].lambda_p, 0.5);
  EXPECT_THROW(expand_variants({"lambda=x"}, 0.1), InvalidArgument);
  EXPECT_THROW(expand_variants({"langda", "langda"}, 0.1), InvalidArgument);
  EXPECT_THROW(expand_variants({"mystery"}, 0.1), InvalidArgument);
}

TEST(ExperimentErrorTest, MessageFormat) {
  const ExperimentError e("train", 3, "boom");
  EXPECT_EQ(std::string(e.what()), "[train seed=3] boom");
  EXPECT_EQ(e.stage(), "train");
  EXPECT_EQ(*e.seed(), 3u);
  EXPECT_EQ(std::string(ExperimentError("data", std::nullopt, "x").what()), "[data] x");
}

TEST(ClassPrompt, Text) {
  EXPECT_EQ(class_prompt("road"), "a photo of a road");
}

TEST(LpWindow, Means) {
  std::vector<MetricRow> rows;
  for (int i = 1; i <= 20; ++i) rows.push_back({i, 0, 0, static_cast<double>(i), 0, 0});
  const auto [first, last] = lp_window_means(rows);
  EXPECT_EQ(first, 1.5);
  EXPECT_EQ(last, 19.5);
  EXPECT_THROW(lp_window_means({}), InvalidArgument);
}

class SmokeRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    ExperimentOptions opts;
    opts.out_dir = dir_->path();
    opts.clock = fixed_clock;
    summary_ = new ExperimentSummary(run_experiment(builtin_preset("smoke"), opts));
  }
  static void TearDownTestSuite() {
    delete summary_;
    delete dir_;
  }
  static TempDir* dir_;
  static ExperimentSummary* summary_;
};

TempDir* SmokeRun::dir_ = nullptr;
ExperimentSummary* SmokeRun::summary_ = nullptr;

TEST_F(SmokeRun, OneRunDirectoryPerVariantAndSeed) {
  for (const auto& v : summary_->variants) {
    ASSERT_EQ(v.runs.size(), 1u);
    int dirs = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir_->path() / v.variant.name)) dirs += e.is_directory();
    EXPECT_EQ(dirs, 1);
    const auto run = dir_->path() / v.variant.name / "seed0";
    for (const char* f : {"config.json", "metrics.csv", "checkpoint.ldck", "checkpoint_000010.ldck",
                          "eval.json", "eval.txt", "miou_history.csv"})
      EXPECT_TRUE(std::filesystem::exists(run / f)) << run / f;
    EXPECT_EQ(parse_metrics_csv(slurp(run / "metrics.csv")).size(), 20u);
  }
  EXPECT_TRUE(std::filesystem::exists(dir_->path() / "summary.json"));
  ASSERT_EQ(summary_->comparisons.size(), 1u);
  EXPECT_EQ(summary_->comparisons[0].baseline, "no-lang");
  EXPECT_EQ(summary_->comparisons[0].deltas.size(), 1u);
  EXPECT_NE(summary_->table().find("Vision-only (lambda_p=0)"), std::string::npos);
}

TEST_F(SmokeRun, PlotsMatchHistory) {
  const auto run = dir_->path() / "langda" / "seed0";
  const auto files = emit_plots(run, dir_->path() / "captions_source.jsonl");
  EXPECT_EQ(files.size(), 8u);
  for (const auto& f : files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  const nlohmann::json loss = nlohmann::json::parse(slurp(run / "plots" / "loss_curves.json"));
  ASSERT_EQ(loss.at("series").size(), 3u);
  for (const auto& s : loss.at("series")) EXPECT_EQ(s.at("points"), 20);
  const nlohmann::json miou = nlohmann::json::parse(slurp(run / "plots" / "miou_curve.json"));
  EXPECT_EQ(miou.at("series")[0].at("points"), 2);

  const CaptionStats st = caption_stats(caption_bank_load(dir_->path() / "captions_source.jsonl"));
  const nlohmann::json hist = nlohmann::json::parse(slurp(run / "plots" / "token_histogram.json"));
  const auto raw = hist.at("series")[0].at("counts").get<std::vector<std::size_t>>();
  const auto refined = hist.at("series")[1].at("counts").get<std::vector<std::size_t>>();
  EXPECT_TRUE(std::equal(raw.begin(), raw.end(), st.histogram_raw.begin(), st.histogram_raw.end()));
  EXPECT_TRUE(std::equal(refined.begin(), refined.end(), st.histogram_refined.begin(), st.histogram_refined.end()));
}

TEST_F(SmokeRun, PlotErrors) {
  TempDir empty;
  EXPECT_THROW(emit_plots(empty.path()), InvalidArgument);
  const auto run = dir_->path() / "langda" / "seed0";
  spit(empty / "bank.jsonl", "");
  EXPECT_THROW(emit_plots(run, empty / "bank.jsonl"), InvalidArgument);
}

TEST(Experiment, ConfigErrorIsStaged) {
  TempDir dir;
  ExperimentPreset p = builtin_preset("smoke");
  p.seeds.clear();
  ExperimentOptions opts;
  opts.out_dir = dir.path();
  try {
    run_experiment(p, opts);
    FAIL();
  } catch (const ExperimentError& e) {
    EXPECT_EQ(e.stage(), "config");
  }
}

}  // namespace
}  // namespace langda
