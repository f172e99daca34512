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

#ifndef LANGDA_CORE_HPP_
#define LANGDA_CORE_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace langda {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXdR = Matrix<double>;
using MatrixXfR = Matrix<float>;

// Dense [channels x (height*width)] tensor; each row is one channel in
// row-major pixel order.
template <typename Scalar>
struct Tensor3 {
  Matrix<Scalar> data;
  int height = 0;
  int width = 0;

  Tensor3() = default;
  Tensor3(int channels, int h, int w)
      : data(Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(h) * w)),
        height(h),
        width(w) {}

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }
  Scalar& at(int c, int y, int x) { return data(c, static_cast<Eigen::Index>(y) * width + x); }
  Scalar at(int c, int y, int x) const {
    return data(c, static_cast<Eigen::Index>(y) * width + x);
  }

  template <typename Other>
  Tensor3<Other> cast() const {
    Tensor3<Other> out;
    out.data = data.template cast<Other>();
    out.height = height;
    out.width = width;
    return out;
  }

  bool operator==(const Tensor3& o) const {
    return height == o.height && width == o.width && data.rows() == o.data.rows() &&
           data.cols() == o.data.cols() && data == o.data;
  }
};

using Image = Tensor3<float>;

// Integer label map, row-major.
struct LabelMap {
  Eigen::Matrix<int, Eigen::Dynamic, 1> labels;
  int height = 0;
  int width = 0;

  LabelMap() = default;
  LabelMap(int h, int w, int fill = 0)
      : labels(Eigen::Matrix<int, Eigen::Dynamic, 1>::Constant(
            static_cast<Eigen::Index>(h) * w, fill)),
        height(h),
        width(w) {}

  int& at(int y, int x) { return labels[static_cast<Eigen::Index>(y) * width + x]; }
  int at(int y, int x) const { return labels[static_cast<Eigen::Index>(y) * width + x]; }
  Eigen::Index size() const { return labels.size(); }
  bool operator==(const LabelMap& o) const {
    return height == o.height && width == o.width && labels == o.labels;
  }
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed files; `line` is 1-based when the format is line oriented, 0 otherwise.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Seeded generator with distributions implemented here so streams do not
// depend on the standard library's distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw InvalidArgument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  // Box-Muller, one draw per call.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace langda

#endif  // LANGDA_CORE_HPP_
