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

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "langda/eval_metrics.hpp"

namespace langda {
namespace {

LabelMap random_map(Rng& rng, int h, int w, int lo, int hi) {
  LabelMap m(h, w);
  for (Eigen::Index p = 0; p < m.size(); ++p) m.labels[p] = static_cast<int>(rng.uniform_int(lo, hi));
  return m;
}

ConfusionMatrix cm_of(std::initializer_list<std::initializer_list<std::int64_t>> rows) {
  ConfusionMatrix::Counts c(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (std::int64_t v : r) c(i, j++) = v;
    ++i;
  }
  return ConfusionMatrix::from_counts(c);
}

TEST(ConfusionMatrix, PerfectPrediction) {
  LabelMap gt(2, 4);
  for (int x = 0; x < 4; ++x) gt.at(1, x) = 1;
  ConfusionMatrix cm(2);
  cm.accumulate(gt, gt, 255);
  EXPECT_EQ(cm.counts()(0, 0), 4);
  EXPECT_EQ(cm.counts()(1, 1), 4);
  EXPECT_EQ(cm.counts()(0, 1), 0);
  EXPECT_EQ(cm.counts()(1, 0), 0);
}

TEST(ConfusionMatrix, AllIgnored) {
  const LabelMap gt(3, 3, 2), pred(3, 3, 0);
  ConfusionMatrix cm(2);
  cm.accumulate(pred, gt, 2);
  EXPECT_EQ(cm.counted(), 0);
  EXPECT_EQ(cm.ignored(), 9);
}

TEST(ConfusionMatrix, LoopOracleAndConservation) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelMap gt = random_map(rng, 4, 4, 0, 3), pred = random_map(rng, 4, 4, 0, 2);
    ConfusionMatrix cm(3);
    cm.accumulate(pred, gt, 3);
    std::int64_t want[3][3] = {};
    std::int64_t ignored = 0;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        if (gt.at(y, x) == 3) {
          ++ignored;
          continue;
        }
        ++want[gt.at(y, x)][pred.at(y, x)];
      }
    for (int g = 0; g < 3; ++g)
      for (int p = 0; p < 3; ++p) EXPECT_EQ(cm.counts()(g, p), want[g][p]);
    EXPECT_EQ(cm.ignored(), ignored);
    EXPECT_EQ(cm.counted() + cm.ignored(), 16);
  }
}

TEST(ConfusionMatrix, Errors) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 0), LabelMap(2, 3, 0), 9), InvalidArgument);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 2), LabelMap(2, 2, 0), 9), InvalidArgument);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 0), LabelMap(2, 2, 5), 9), InvalidArgument);
  EXPECT_THROW(cm.accumulate(LabelMap(2, 2, 0), LabelMap(2, 2, -1), 9), InvalidArgument);
  ConfusionMatrix other(3);
  EXPECT_THROW(cm += other, InvalidArgument);
}

TEST(ConfusionMatrix, PermutationInvarianceAndAdditivity) {
  Rng rng(2);
  const LabelMap gt = random_map(rng, 1, 20, 0, 3), pred = random_map(rng, 1, 20, 0, 2);
  ConfusionMatrix whole(3);
  whole.accumulate(pred, gt, 3);

  LabelMap gt_rev = gt, pred_rev = pred;
  gt_rev.labels.reverseInPlace();
  pred_rev.labels.reverseInPlace();
  ConfusionMatrix rev(3);
  rev.accumulate(pred_rev, gt_rev, 3);
  EXPECT_EQ(rev, whole);

  LabelMap ga(1, 8), pa(1, 8), gb(1, 12), pb(1, 12);
  ga.labels = gt.labels.head(8);
  pa.labels = pred.labels.head(8);
  gb.labels = gt.labels.tail(12);
  pb.labels = pred.labels.tail(12);
  ConfusionMatrix a(3), b(3);
  a.accumulate(pa, ga, 3);
  b.accumulate(pb, gb, 3);
  a += b;
  EXPECT_EQ(a, whole);
}

TEST(Iou, WorkedExample) {
  const ConfusionMatrix cm = cm_of({{3, 1}, {2, 4}});
  const auto iou = iou_per_class(cm);
  EXPECT_EQ(*iou[0], 0.5);
  EXPECT_EQ(*iou[1], 4.0 / 7.0);
  EXPECT_NEAR(miou(cm), 100 * (0.5 + 4.0 / 7.0) / 2, 1e-12);
  EXPECT_NEAR(miou(cm), 53.6, 0.05);
}

TEST(Iou, PerfectAndUndefined) {
  const ConfusionMatrix cm = cm_of({{5, 0, 0}, {0, 0, 0}, {0, 0, 2}});
  const auto iou = iou_per_class(cm);
  EXPECT_EQ(*iou[0], 1.0);
  EXPECT_FALSE(iou[1].has_value());
  EXPECT_EQ(*iou[2], 1.0);
  EXPECT_EQ(miou(cm), 100.0);
}

TEST(Iou, SingleClassAndAllUndefined) {
  const ConfusionMatrix one = cm_of({{0, 0}, {3, 1}});
  EXPECT_EQ(*iou_per_class(one)[0], 0.0);
  const ConfusionMatrix single = cm_of({{3, 0}, {0, 0}});
  EXPECT_EQ(miou(single), 100.0);
  EXPECT_THROW(miou(ConfusionMatrix(3)), InvalidArgument);
}

TEST(Iou, SetOracleOnRandomPairs) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = static_cast<int>(rng.uniform_int(2, 5));
    const LabelMap gt = random_map(rng, 5, 5, 0, k), pred = random_map(rng, 5, 5, 0, k - 1);
    ConfusionMatrix cm(k);
    cm.accumulate(pred, gt, k);
    const auto iou = iou_per_class(cm);
    double sum = 0;
    int defined = 0;
    for (int c = 0; c < k; ++c) {
      std::set<Eigen::Index> g, p;
      for (Eigen::Index i = 0; i < gt.size(); ++i) {
        if (gt.labels[i] == k) continue;
        if (gt.labels[i] == c) g.insert(i);
        if (pred.labels[i] == c) p.insert(i);
      }
      std::set<Eigen::Index> uni = g;
      uni.insert(p.begin(), p.end());
      std::size_t inter = 0;
      for (Eigen::Index i : g) inter += p.count(i);
      if (uni.empty()) {
        EXPECT_FALSE(iou[c].has_value());
        continue;
      }
      const double want = static_cast<double>(inter) / static_cast<double>(uni.size());
      ASSERT_TRUE(iou[c].has_value());
      EXPECT_EQ(*iou[c], want);
      EXPECT_GE(*iou[c], 0.0);
      EXPECT_LE(*iou[c], 1.0);
      sum += want;
      ++defined;
    }
    if (defined) EXPECT_NEAR(miou(cm), 100 * sum / defined, 1e-12);
  }
}

TEST(GroupedReport, OneGroupEqualsGlobal) {
  Rng rng(4);
  std::vector<ConfusionMatrix> cms;
  for (int i = 0; i < 4; ++i) {
    ConfusionMatrix cm(3);
    cm.accumulate(random_map(rng, 3, 3, 0, 2), random_map(rng, 3, 3, 0, 2), 3);
    cms.push_back(cm);
  }
  const GroupedReport r = grouped_report(cms, {"a", "a", "a", "a"});
  ASSERT_EQ(r.groups.size(), 1u);
  EXPECT_EQ(r.groups[0].miou, r.all.miou);
  EXPECT_EQ(r.groups[0].cm, r.all.cm);
  EXPECT_EQ(r.all.group, "All");
}

TEST(GroupedReport, ThreeGroupsMatchPerGroupOracle) {
  Rng rng(5);
  std::vector<ConfusionMatrix> cms;
  std::vector<std::string> groups;
  const std::vector<std::string> names = {"fog", "night", "rain"};
  std::vector<ConfusionMatrix> oracle(3, ConfusionMatrix(4));
  ConfusionMatrix total(4);
  for (int i = 0; i < 12; ++i) {
    ConfusionMatrix cm(4);
    cm.accumulate(random_map(rng, 4, 4, 0, 3), random_map(rng, 4, 4, 0, 4), 4);
    const int g = static_cast<int>(rng.uniform_int(0, 2));
    oracle[g] += cm;
    total += cm;
    cms.push_back(cm);
    groups.push_back(names[g]);
  }
  const GroupedReport r = grouped_report(cms, groups);
  ASSERT_EQ(r.groups.size(), 3u);
  for (int g = 0; g < 3; ++g) {
    EXPECT_EQ(r.groups[g].group, names[g]);
    EXPECT_EQ(r.groups[g].cm, oracle[g]);
    EXPECT_EQ(r.groups[g].miou, miou(oracle[g]));
  }
  EXPECT_EQ(r.all.cm, total);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(GroupedReport, EmptyGroupOmittedWithWarning) {
  ConfusionMatrix counted(2), ignored(2);
  counted.accumulate(LabelMap(2, 2, 1), LabelMap(2, 2, 1), 2);
  ignored.accumulate(LabelMap(2, 2, 0), LabelMap(2, 2, 2), 2);
  const GroupedReport r = grouped_report({counted, ignored}, {"day", "night"}, {"day", "night", "snow"});
  ASSERT_EQ(r.groups.size(), 1u);
  EXPECT_EQ(r.groups[0].group, "day");
  ASSERT_EQ(r.warnings.size(), 2u);
  EXPECT_NE(r.warnings[0].find("night"), std::string::npos);
  EXPECT_NE(r.warnings[1].find("snow"), std::string::npos);
  EXPECT_THROW(grouped_report({counted}, {}), InvalidArgument);
}

TEST(GroupedReport, JsonAndTable) {
  const GroupedReport r = grouped_report({cm_of({{3, 1}, {2, 4}})}, {"target"});
  const nlohmann::json j = report_json(r, {"road", "sky"});
  EXPECT_EQ(j.at("iou").at("road").get<double>(), 0.5);
  EXPECT_EQ(j.at("iou").at("sky").get<double>(), 4.0 / 7.0);
  EXPECT_EQ(j.at("groups").size(), 1u);
  const std::string table = report_table(r, {"road", "sky"});
  EXPECT_NE(table.find("road"), std::string::npos);
  EXPECT_NE(table.find("53.6"), std::string::npos);
  EXPECT_NE(table.find("All"), std::string::npos);
}

TEST(ResizeNearest, IdentityAndUpsample) {
  Rng rng(6);
  const LabelMap m = random_map(rng, 3, 4, 0, 5);
  EXPECT_EQ(resize_nearest(m, 3, 4), m);
  const LabelMap up = resize_nearest(m, 6, 8);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(up.at(y, x), m.at(y / 2, x / 2));
  EXPECT_EQ(resize_nearest(up, 3, 4), m);
  EXPECT_THROW(resize_nearest(m, 0, 4), InvalidArgument);
}

}  // namespace
}  // namespace langda
