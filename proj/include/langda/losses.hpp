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

// Segmentation and language losses with their gradients. Logits are
// [K x P] (one column per pixel); every loss is a mean, never a sum.

#ifndef LANGDA_LOSSES_HPP_
#define LANGDA_LOSSES_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "langda/core.hpp"

namespace langda {

using LabelVector = Eigen::Matrix<int, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LossResult {
  Scalar value = 0;
  Matrix<Scalar> grad;  // d value / d logits
};

template <typename Scalar>
Matrix<Scalar> softmax_columns(const Matrix<Scalar>& logits) {
  Matrix<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const Scalar m = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - m).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

// Cross-entropy averaged over pixels whose label != ignore_index.
template <typename Scalar>
LossResult<Scalar> supervised_loss(const Matrix<Scalar>& logits, const LabelVector& labels,
                                   int ignore_index) {
  if (labels.size() != logits.cols())
    throw InvalidArgument("supervised_loss: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(logits.cols()) + " pixels");
  const int k = static_cast<int>(logits.rows());
  LossResult<Scalar> r;
  r.grad = Matrix<Scalar>::Zero(logits.rows(), logits.cols());
  Eigen::Index valid = 0;
  for (Eigen::Index j = 0; j < labels.size(); ++j) {
    const int y = labels[j];
    if (y == ignore_index) continue;
    if (y < 0 || y >= k) throw InvalidArgument("supervised_loss: label " + std::to_string(y) + " out of range");
    ++valid;
  }
  if (valid == 0) throw InvalidArgument("supervised_loss: every pixel is ignored");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(valid);
  Scalar total = 0;
  for (Eigen::Index j = 0; j < labels.size(); ++j) {
    const int y = labels[j];
    if (y == ignore_index) continue;
    const Scalar m = logits.col(j).maxCoeff();
    const auto e = (logits.col(j).array() - m).exp();
    const Scalar z = e.sum();
    total += std::log(z) + m - logits(y, j);
    r.grad.col(j) = (e / z).matrix() * inv;
    r.grad(y, j) -= inv;
  }
  r.value = total * inv;
  return r;
}

// Hard labels from teacher probabilities; ties resolve to the lowest index.
template <typename Scalar>
LabelVector pseudo_labels(const Matrix<Scalar>& probs) {
  LabelVector out(probs.cols());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    int best = 0;
    for (Eigen::Index c = 0; c < probs.rows(); ++c) {
      const Scalar v = probs(c, j);
      if (!std::isfinite(static_cast<double>(v)))
        throw InvalidArgument("pseudo_labels: non-finite probability at pixel " + std::to_string(j));
      if (v > probs(best, j)) best = static_cast<int>(c);
    }
    out[j] = best;
  }
  return out;
}

// Fraction of pixels whose top probability is strictly above tau.
template <typename Scalar>
double quality_estimate(const Matrix<Scalar>& probs, double tau) {
  if (probs.cols() == 0) throw InvalidArgument("quality_estimate: empty map");
  Eigen::Index confident = 0;
  for (Eigen::Index j = 0; j < probs.cols(); ++j)
    if (static_cast<double>(probs.col(j).maxCoeff()) > tau) ++confident;
  return static_cast<double>(confident) / static_cast<double>(probs.cols());
}

// Quality-weighted cross-entropy on one target image.
template <typename Scalar>
LossResult<Scalar> weighted_pseudo_loss(const Matrix<Scalar>& logits, const LabelVector& labels,
                                        double quality) {
  if (quality == 0.0) return {Scalar(0), Matrix<Scalar>::Zero(logits.rows(), logits.cols())};
  LossResult<Scalar> r = supervised_loss<Scalar>(logits, labels, -1);
  r.value *= static_cast<Scalar>(quality);
  r.grad *= static_cast<Scalar>(quality);
  return r;
}

template <typename Scalar>
struct CosineLoss {
  Scalar value = 0;
  Vector<Scalar> grad_f;  // gradient w.r.t. the image side only
  Vector<Scalar> grad_v;  // gradient w.r.t. the text side (used by the text adapter)
};

// 1 - cos(f, v).
template <typename Scalar>
CosineLoss<Scalar> language_consistency_loss(const Vector<Scalar>& f, const Vector<Scalar>& v) {
  if (f.size() != v.size())
    throw InvalidArgument("language_consistency_loss: dimension mismatch (" +
                          std::to_string(f.size()) + " vs " + std::to_string(v.size()) + ")");
  const Scalar nf = f.norm(), nv = v.norm();
  if (nf == 0 || nv == 0) throw InvalidArgument("language_consistency_loss: zero-norm input");
  const Scalar cos = f.dot(v) / (nf * nv);
  CosineLoss<Scalar> r;
  r.value = Scalar(1) - cos;
  r.grad_f = -(v / (nf * nv) - cos * f / (nf * nf));
  r.grad_v = -(f / (nf * nv) - cos * v / (nv * nv));
  return r;
}

inline double total_loss(double l_s, double l_t, double l_p, double lambda_p) {
  return l_s + l_t + lambda_p * l_p;
}

}  // namespace langda

#endif  // LANGDA_LOSSES_HPP_
