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

// Minimal raster charts written as binary PPM, each with a JSON sidecar
// holding the plotted numbers.

#ifndef LANGDA_PLOTTING_HPP_
#define LANGDA_PLOTTING_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace langda {

using Rgb = std::array<std::uint8_t, 3>;

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});
  int width() const { return width_; }
  int height() const { return height_; }
  void set(int x, int y, Rgb c);
  Rgb get(int x, int y) const;
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  std::string ppm() const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartFiles {
  std::filesystem::path image;
  std::filesystem::path sidecar;
};

// Writes <stem>.ppm and <stem>.json; files appear atomically (temp + rename).
ChartFiles write_line_chart(const std::filesystem::path& stem, const std::string& title,
                            const std::vector<Series>& series);

struct HistogramSeries {
  std::string name;
  std::vector<std::size_t> counts;
};

ChartFiles write_histogram(const std::filesystem::path& stem, const std::string& title,
                           int bin_width, const std::vector<HistogramSeries>& series,
                           double marker = -1);

}  // namespace langda

#endif  // LANGDA_PLOTTING_HPP_
