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

#include "langda/eval_metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace langda {

ConfusionMatrix::ConfusionMatrix(int num_classes) {
  if (num_classes < 0) throw InvalidArgument("confusion matrix: negative class count");
  counts_ = Counts::Zero(num_classes, num_classes);
}

ConfusionMatrix ConfusionMatrix::from_counts(const Counts& counts, std::int64_t ignored) {
  if (counts.rows() != counts.cols()) throw InvalidArgument("confusion matrix: counts must be square");
  if ((counts.array() < 0).any() || ignored < 0)
    throw InvalidArgument("confusion matrix: negative count");
  ConfusionMatrix cm(static_cast<int>(counts.rows()));
  cm.counts_ = counts;
  cm.ignored_ = ignored;
  return cm;
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt, int ignore_index) {
  if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size())
    throw InvalidArgument("accumulate: prediction is " + std::to_string(pred.height) + "x" +
                          std::to_string(pred.width) + ", ground truth " +
                          std::to_string(gt.height) + "x" + std::to_string(gt.width));
  const int k = num_classes();
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    const int g = gt.labels[i];
    if (g == ignore_index) continue;
    if (g < 0 || g >= k) throw InvalidArgument("accumulate: ground-truth id " + std::to_string(g) + " out of range");
    const int p = pred.labels[i];
    if (p < 0 || p >= k) throw InvalidArgument("accumulate: predicted id " + std::to_string(p) + " out of range");
  }
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    const int g = gt.labels[i];
    if (g == ignore_index) {
      ++ignored_;
      continue;
    }
    ++counts_(g, pred.labels[i]);
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes() != num_classes()) throw InvalidArgument("confusion matrix: class count mismatch");
  counts_ += other.counts_;
  ignored_ += other.ignored_;
  return *this;
}

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  const auto& c = cm.counts();
  std::vector<std::optional<double>> out(static_cast<std::size_t>(cm.num_classes()));
  for (int k = 0; k < cm.num_classes(); ++k) {
    const std::int64_t tp = c(k, k);
    const std::int64_t denom = c.row(k).sum() + c.col(k).sum() - tp;
    if (denom > 0) out[static_cast<std::size_t>(k)] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  double sum = 0;
  int defined = 0;
  for (const auto& v : iou_per_class(cm)) {
    if (!v) continue;
    sum += *v;
    ++defined;
  }
  if (defined == 0) throw InvalidArgument("miou: no class has a defined IoU");
  return 100.0 * sum / defined;
}

GroupedReport grouped_report(const std::vector<ConfusionMatrix>& per_sample,
                             const std::vector<std::string>& groups,
                             const std::vector<std::string>& group_order) {
  if (per_sample.size() != groups.size())
    throw InvalidArgument("grouped_report: every sample needs a group label");
  if (per_sample.empty()) throw InvalidArgument("grouped_report: no samples");
  const int k = per_sample.front().num_classes();
  std::map<std::string, ConfusionMatrix> by_group;
  for (const auto& g : group_order) by_group.emplace(g, ConfusionMatrix(k));
  GroupedReport r;
  r.all = GroupRow{"All", ConfusionMatrix(k), 0};
  for (std::size_t i = 0; i < per_sample.size(); ++i) {
    auto it = by_group.try_emplace(groups[i], k).first;
    it->second += per_sample[i];
    r.all.cm += per_sample[i];
  }
  for (auto& [name, cm] : by_group) {
    if (cm.counted() == 0) {
      r.warnings.push_back("group '" + name + "' has no evaluated pixels and is omitted");
      continue;
    }
    r.groups.push_back(GroupRow{name, cm, miou(cm)});
  }
  r.all.miou = miou(r.all.cm);
  return r;
}

LabelMap resize_nearest(const LabelMap& labels, int height, int width) {
  if (height < 1 || width < 1 || labels.height < 1 || labels.width < 1)
    throw InvalidArgument("resize_nearest: empty size");
  LabelMap out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(labels.height - 1, static_cast<int>((y + 0.5) * labels.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(labels.width - 1, static_cast<int>((x + 0.5) * labels.width / width));
      out.at(y, x) = labels.at(sy, sx);
    }
  }
  return out;
}

namespace {

nlohmann::json row_json(const GroupRow& row, const std::vector<std::string>& names) {
  nlohmann::json iou = nlohmann::json::object();
  const auto values = iou_per_class(row.cm);
  for (std::size_t c = 0; c < values.size(); ++c) {
    const std::string name = c < names.size() ? names[c] : std::to_string(c);
    iou[name] = values[c] ? nlohmann::json(*values[c]) : nlohmann::json(nullptr);
  }
  return {{"group", row.group},
          {"miou", row.miou},
          {"iou", iou},
          {"pixels", row.cm.counted()},
          {"ignored", row.cm.ignored()}};
}

}  // namespace

nlohmann::json report_json(const GroupedReport& report, const std::vector<std::string>& class_names) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups) groups.push_back(row_json(g, class_names));
  nlohmann::json all = row_json(report.all, class_names);
  return {{"miou", report.all.miou},
          {"iou", all["iou"]},
          {"groups", groups},
          {"all", all},
          {"warnings", report.warnings}};
}

std::string report_table(const GroupedReport& report, const std::vector<std::string>& class_names) {
  std::string out;
  char buf[64];
  auto cell = [&](const std::string& s, int w) {
    std::snprintf(buf, sizeof buf, "%*s", w, s.substr(0, static_cast<std::size_t>(w)).c_str());
    out += buf;
  };
  cell("Group", 12);
  for (const auto& n : class_names) cell(n, 11);
  cell("mIoU", 8);
  out += '\n';
  std::vector<const GroupRow*> rows;
  for (const auto& g : report.groups) rows.push_back(&g);
  rows.push_back(&report.all);
  for (const GroupRow* r : rows) {
    cell(r->group, 12);
    const auto values = iou_per_class(r->cm);
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      if (c < values.size() && values[c]) {
        std::snprintf(buf, sizeof buf, "%11.1f", 100.0 * *values[c]);
        out += buf;
      } else {
        cell("-", 11);
      }
    }
    std::snprintf(buf, sizeof buf, "%8.1f\n", r->miou);
    out += buf;
  }
  return out;
}

}  // namespace langda
