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

// Confusion-matrix segmentation metrics: per-class IoU, mIoU and per-group
// breakdowns.

#ifndef LANGDA_EVAL_METRICS_HPP_
#define LANGDA_EVAL_METRICS_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "langda/core.hpp"

namespace langda {

class ConfusionMatrix {
 public:
  using Counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit ConfusionMatrix(int num_classes = 0);

  int num_classes() const { return static_cast<int>(counts_.rows()); }
  const Counts& counts() const { return counts_; }
  std::int64_t ignored() const { return ignored_; }
  std::int64_t counted() const { return counts_.sum(); }

  // rows: ground truth, cols: prediction. Pixels whose gt equals
  // ignore_index are only counted as ignored.
  void accumulate(const LabelMap& pred, const LabelMap& gt, int ignore_index);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix& o) const {
    return ignored_ == o.ignored_ && counts_.rows() == o.counts_.rows() && counts_ == o.counts_;
  }

  static ConfusionMatrix from_counts(const Counts& counts, std::int64_t ignored = 0);

 private:
  Counts counts_;
  std::int64_t ignored_ = 0;
};

// nullopt where the class appears in neither ground truth nor prediction.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);
// Mean of the defined IoUs, in percent. Throws when none is defined.
double miou(const ConfusionMatrix& cm);

struct GroupRow {
  std::string group;
  ConfusionMatrix cm;
  double miou = 0;
};

struct GroupedReport {
  std::vector<GroupRow> groups;  // sorted by name, empty groups omitted
  GroupRow all;
  std::vector<std::string> warnings;
};

GroupedReport grouped_report(const std::vector<ConfusionMatrix>& per_sample,
                             const std::vector<std::string>& groups,
                             const std::vector<std::string>& group_order = {});

// Nearest-neighbour resampling of a label map.
LabelMap resize_nearest(const LabelMap& labels, int height, int width);

nlohmann::json report_json(const GroupedReport& report, const std::vector<std::string>& class_names);
// Per-class IoU columns followed by mIoU, one row per group and "All".
std::string report_table(const GroupedReport& report, const std::vector<std::string>& class_names);

}  // namespace langda

#endif  // LANGDA_EVAL_METRICS_HPP_
