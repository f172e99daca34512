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

#include "langda/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "binary_io.hpp"
#include "langda/core.hpp"

namespace langda {
namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 360;
constexpr int kMargin = 40;
constexpr std::array<Rgb, 6> kColors = {{{31, 119, 180}, {214, 39, 40}, {44, 160, 44},
                                          {255, 127, 14}, {148, 103, 189}, {140, 86, 75}}};

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  detail::write_file(tmp.string(), bytes);
  std::filesystem::rename(tmp, path);
}

void axes(Canvas& c) {
  const Rgb k = {0, 0, 0};
  c.line(kMargin, kHeight - kMargin, kWidth - kMargin, kHeight - kMargin, k);
  c.line(kMargin, kMargin, kMargin, kHeight - kMargin, k);
}

ChartFiles finish(const std::filesystem::path& stem, const Canvas& canvas,
                  const nlohmann::json& sidecar) {
  ChartFiles f{stem, stem};
  f.image += ".ppm";
  f.sidecar += ".json";
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  atomic_write(f.image, canvas.ppm());
  atomic_write(f.sidecar, sidecar.dump(2) + "\n");
  return f;
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb background) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw InvalidArgument("canvas: empty size");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3)
    std::copy(background.begin(), background.end(), pixels_.begin() + static_cast<std::ptrdiff_t>(i));
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  std::copy(c.begin(), c.end(), pixels_.begin() + static_cast<std::ptrdiff_t>(i));
}

Rgb Canvas::get(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
}

std::string Canvas::ppm() const {
  std::string out = "P6\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels_.data()), pixels_.size());
  return out;
}

ChartFiles write_line_chart(const std::filesystem::path& stem, const std::string& title,
                            const std::vector<Series>& series) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  nlohmann::json sj = nlohmann::json::array();
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) throw InvalidArgument("line chart: x/y length mismatch in " + s.name);
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
    sj.push_back({{"name", s.name}, {"points", s.x.size()}, {"x", s.x}, {"y", s.y}});
  }
  if (!(xmin <= xmax)) throw InvalidArgument("line chart '" + title + "': no data");
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  Canvas c(kWidth, kHeight);
  axes(c);
  const double sx = (kWidth - 2 * kMargin) / (xmax - xmin);
  const double sy = (kHeight - 2 * kMargin) / (ymax - ymin);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const Rgb col = kColors[k % kColors.size()];
    int px = -1, py = -1;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      const int x = kMargin + static_cast<int>(std::lround((s.x[i] - xmin) * sx));
      const int y = kHeight - kMargin - static_cast<int>(std::lround((s.y[i] - ymin) * sy));
      if (px >= 0) c.line(px, py, x, y, col);
      else c.set(x, y, col);
      px = x;
      py = y;
    }
  }
  const nlohmann::json side = {{"title", title},
                               {"kind", "line"},
                               {"x_range", {xmin, xmax}},
                               {"y_range", {ymin, ymax}},
                               {"series", sj}};
  return finish(stem, c, side);
}

ChartFiles write_histogram(const std::filesystem::path& stem, const std::string& title,
                           int bin_width, const std::vector<HistogramSeries>& series,
                           double marker) {
  if (series.empty()) throw InvalidArgument("histogram '" + title + "': no series");
  std::size_t bins = 0, top = 0;
  nlohmann::json sj = nlohmann::json::array();
  for (const auto& s : series) {
    bins = std::max(bins, s.counts.size());
    for (std::size_t v : s.counts) top = std::max(top, v);
    sj.push_back({{"name", s.name}, {"counts", s.counts}});
  }
  if (bins == 0) throw InvalidArgument("histogram '" + title + "': no bins");
  Canvas c(kWidth, kHeight);
  axes(c);
  const double bw = static_cast<double>(kWidth - 2 * kMargin) / static_cast<double>(bins);
  const double sy = top ? static_cast<double>(kHeight - 2 * kMargin) / static_cast<double>(top) : 0.0;
  const double sub = bw / static_cast<double>(series.size());
  for (std::size_t k = 0; k < series.size(); ++k)
    for (std::size_t b = 0; b < series[k].counts.size(); ++b) {
      if (series[k].counts[b] == 0) continue;
      const int x0 = kMargin + static_cast<int>(b * bw + k * sub);
      const int x1 = std::max(x0, kMargin + static_cast<int>(b * bw + (k + 1) * sub) - 1);
      const int y1 = kHeight - kMargin - 1;
      const int y0 = y1 - static_cast<int>(std::lround(static_cast<double>(series[k].counts[b]) * sy)) + 1;
      c.fill_rect(x0, y0, x1, y1, kColors[k % kColors.size()]);
    }
  if (marker >= 0) {
    const int x = kMargin + static_cast<int>(std::lround(marker / bin_width * bw));
    for (int y = kMargin; y < kHeight - kMargin; y += 2) c.set(x, y, {0, 0, 0});
  }
  nlohmann::json side = {{"title", title},   {"kind", "histogram"}, {"bin_width", bin_width},
                         {"bins", bins},     {"series", sj}};
  if (marker >= 0) side["marker"] = marker;
  return finish(stem, c, side);
}

}  // namespace langda
