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

#include "langda/uda_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json_util.hpp"

namespace langda {
namespace {

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  try {
    detail::read_opt(j, key, out);
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("config key \"") + key + "\" has the wrong type");
  }
}

void check_range(bool ok, const char* key, double value, const char* bound) {
  if (ok) return;
  std::ostringstream os;
  os << "config key \"" << key << "\" = " << value << " is outside " << bound;
  throw InvalidArgument(os.str());
}

}  // namespace

const char* to_string(CaptionMode m) {
  switch (m) {
    case CaptionMode::kSourceOnly: return "source_only";
    case CaptionMode::kTargetOnly: return "target_only";
    case CaptionMode::kSourceAndTarget: return "source_and_target";
  }
  return "?";
}

CaptionMode caption_mode_from_string(const std::string& s) {
  if (s == "source_only") return CaptionMode::kSourceOnly;
  if (s == "target_only") return CaptionMode::kTargetOnly;
  if (s == "source_and_target") return CaptionMode::kSourceAndTarget;
  throw InvalidArgument("caption_mode \"" + s +
                        "\" is not one of source_only, target_only, source_and_target");
}

const char* to_string(Alignment a) { return a == Alignment::kImage ? "image" : "pixel"; }

Alignment alignment_from_string(const std::string& s) {
  if (s == "image") return Alignment::kImage;
  if (s == "pixel") return Alignment::kPixel;
  throw InvalidArgument("alignment \"" + s + "\" is not one of image, pixel");
}

void TrainConfig::validate() const {
  check_range(tau > 0 && tau < 1, "tau", tau, "(0,1)");
  check_range(alpha >= 0 && alpha < 1, "alpha", alpha, "[0,1)");
  check_range(lambda_p >= 0 && std::isfinite(lambda_p), "lambda_p", lambda_p, "[0,inf)");
  check_range(lambda_target >= 0 && std::isfinite(lambda_target), "lambda_target", lambda_target,
              "[0,inf)");
  check_range(lr_encoder > 0 && std::isfinite(lr_encoder), "lr_encoder", lr_encoder, "(0,inf)");
  check_range(lr_decoder > 0 && std::isfinite(lr_decoder), "lr_decoder", lr_decoder, "(0,inf)");
  check_range(weight_decay >= 0 && std::isfinite(weight_decay), "weight_decay", weight_decay,
              "[0,inf)");
  check_range(beta1 >= 0 && beta1 < 1, "beta1", beta1, "[0,1)");
  check_range(beta2 >= 0 && beta2 < 1, "beta2", beta2, "[0,1)");
  check_range(adam_eps > 0, "adam_eps", adam_eps, "(0,inf)");
  check_range(warmup_steps >= 0, "warmup_steps", warmup_steps, "[0,inf)");
  check_range(total_steps >= 0, "total_steps", total_steps, "[0,inf)");
  check_range(batch_size >= 1, "batch_size", batch_size, "[1,inf)");
  check_range(rcs_temperature > 0 && std::isfinite(rcs_temperature), "rcs_temperature",
              rcs_temperature, "(0,inf)");
  check_range(color_jitter_strength >= 0 && color_jitter_strength <= 1, "color_jitter_strength",
              color_jitter_strength, "[0,1]");
  check_range(color_jitter_prob >= 0 && color_jitter_prob <= 1, "color_jitter_prob",
              color_jitter_prob, "[0,1]");
  check_range(blur_prob >= 0 && blur_prob <= 1, "blur_prob", blur_prob, "[0,1]");
  check_range(checkpoint_every >= 0, "checkpoint_every", checkpoint_every, "[0,inf)");
  check_range(eval_every >= 0, "eval_every", eval_every, "[0,inf)");
  if (alignment == Alignment::kPixel && caption_mode != CaptionMode::kSourceOnly)
    throw InvalidArgument("config key \"alignment\" = pixel requires caption_mode source_only");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"tau", c.tau},
       {"alpha", c.alpha},
       {"lambda_p", c.lambda_p},
       {"lambda_target", c.lambda_target},
       {"lr_encoder", c.lr_encoder},
       {"lr_decoder", c.lr_decoder},
       {"weight_decay", c.weight_decay},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"warmup_steps", c.warmup_steps},
       {"total_steps", c.total_steps},
       {"batch_size", c.batch_size},
       {"caption_mode", to_string(c.caption_mode)},
       {"alignment", to_string(c.alignment)},
       {"rcs_temperature", c.rcs_temperature},
       {"mix_enabled", c.mix_enabled},
       {"color_jitter_strength", c.color_jitter_strength},
       {"color_jitter_prob", c.color_jitter_prob},
       {"blur_prob", c.blur_prob},
       {"checkpoint_every", c.checkpoint_every},
       {"eval_every", c.eval_every},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::require_known_keys(
      j,
      {"tau", "alpha", "lambda_p", "lambda_target", "lr_encoder", "lr_decoder", "weight_decay",
       "beta1", "beta2", "adam_eps", "warmup_steps", "total_steps", "batch_size", "caption_mode",
       "alignment", "rcs_temperature", "mix_enabled", "color_jitter_strength",
       "color_jitter_prob", "blur_prob", "checkpoint_every", "eval_every", "seed"},
      "train");
  c = TrainConfig{};
  read_key(j, "tau", c.tau);
  read_key(j, "alpha", c.alpha);
  read_key(j, "lambda_p", c.lambda_p);
  read_key(j, "lambda_target", c.lambda_target);
  read_key(j, "lr_encoder", c.lr_encoder);
  read_key(j, "lr_decoder", c.lr_decoder);
  read_key(j, "weight_decay", c.weight_decay);
  read_key(j, "beta1", c.beta1);
  read_key(j, "beta2", c.beta2);
  read_key(j, "adam_eps", c.adam_eps);
  read_key(j, "warmup_steps", c.warmup_steps);
  read_key(j, "total_steps", c.total_steps);
  read_key(j, "batch_size", c.batch_size);
  std::string mode = to_string(c.caption_mode), align = to_string(c.alignment);
  read_key(j, "caption_mode", mode);
  read_key(j, "alignment", align);
  c.caption_mode = caption_mode_from_string(mode);
  c.alignment = alignment_from_string(align);
  read_key(j, "rcs_temperature", c.rcs_temperature);
  read_key(j, "mix_enabled", c.mix_enabled);
  read_key(j, "color_jitter_strength", c.color_jitter_strength);
  read_key(j, "color_jitter_prob", c.color_jitter_prob);
  read_key(j, "blur_prob", c.blur_prob);
  read_key(j, "checkpoint_every", c.checkpoint_every);
  read_key(j, "eval_every", c.eval_every);
  read_key(j, "seed", c.seed);
  c.validate();
}

Matrix<double> PseudoLabelBatch::one_hot(std::size_t i) const {
  const LabelVector& l = labels.at(i);
  Matrix<double> m = Matrix<double>::Zero(num_classes, l.size());
  for (Eigen::Index p = 0; p < l.size(); ++p) m(l[p], p) = 1.0;
  return m;
}

RareClassSampler::RareClassSampler(const std::vector<LabelMap>& masks, int num_classes,
                                   double temperature)
    : num_images_(masks.size()) {
  if (num_classes < 1) throw InvalidArgument("rare_class_sampler: no classes");
  if (!(temperature > 0)) throw InvalidArgument("rare_class_sampler: temperature must be > 0");
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  images_with_.resize(static_cast<std::size_t>(num_classes));
  double valid = 0;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
    for (Eigen::Index p = 0; p < masks[i].size(); ++p) {
      const int c = masks[i].labels[p];
      if (c < 0 || c >= num_classes) continue;
      counts[static_cast<std::size_t>(c)] += 1;
      valid += 1;
      seen[static_cast<std::size_t>(c)] = true;
    }
    for (int c = 0; c < num_classes; ++c)
      if (seen[static_cast<std::size_t>(c)]) images_with_[static_cast<std::size_t>(c)].push_back(i);
  }
  if (valid == 0) throw InvalidArgument("rare_class_sampler: no labelled pixels");
  freq_.resize(counts.size());
  prob_.assign(counts.size(), 0.0);
  double top = -INFINITY;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    freq_[c] = counts[c] / valid;
    if (counts[c] == 0) {
      excluded_.push_back(static_cast<int>(c));
      continue;
    }
    top = std::max(top, (1.0 - freq_[c]) / temperature);
  }
  double z = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    prob_[c] = std::exp((1.0 - freq_[c]) / temperature - top);
    z += prob_[c];
  }
  for (double& p : prob_) p /= z;
}

std::vector<double> RareClassSampler::image_distribution() const {
  std::vector<double> d(num_images_, 0.0);
  for (std::size_t c = 0; c < prob_.size(); ++c) {
    if (images_with_[c].empty()) continue;
    const double share = prob_[c] / static_cast<double>(images_with_[c].size());
    for (std::size_t i : images_with_[c]) d[i] += share;
  }
  return d;
}

std::size_t RareClassSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0;
  std::size_t cls = prob_.size();
  for (std::size_t c = 0; c < prob_.size(); ++c) {
    if (images_with_[c].empty()) continue;
    cls = c;
    acc += prob_[c];
    if (u < acc) break;
  }
  const auto& pool = images_with_[cls];
  return pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))];
}

std::vector<int> select_mix_classes(const LabelVector& source_labels, int ignore_index, Rng& rng) {
  std::vector<int> present;
  for (Eigen::Index p = 0; p < source_labels.size(); ++p) {
    const int c = source_labels[p];
    if (c < 0 || c == ignore_index) continue;
    if (std::find(present.begin(), present.end(), c) == present.end()) present.push_back(c);
  }
  std::sort(present.begin(), present.end());
  const std::size_t k = (present.size() + 1) / 2;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(present.size()) - 1));
    std::swap(present[i], present[j]);
  }
  present.resize(k);
  std::sort(present.begin(), present.end());
  return present;
}

template <typename Scalar>
void strong_augment(Tensor3<Scalar>& image, Rng& rng, double strength, double jitter_prob,
                    double blur_prob) {
  if (image.channels() != 3) throw InvalidArgument("strong_augment: expected an RGB image");
  // Draws happen unconditionally so the stream does not depend on outcomes.
  const bool jitter = rng.uniform() < jitter_prob;
  const double brightness = rng.uniform(1.0 - strength, 1.0 + strength);
  const double contrast = rng.uniform(1.0 - strength, 1.0 + strength);
  const double saturation = rng.uniform(1.0 - strength, 1.0 + strength);
  const double hue = rng.uniform(-strength, strength) * 360.0;
  const bool blur = rng.uniform() < blur_prob;
  const double sigma = rng.uniform(0.15, 1.15);
  Matrix<Scalar>& x = image.data;
  if (jitter) {
    x *= static_cast<Scalar>(brightness);
    x = x.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    const Vector<Scalar> gray_px = (Scalar(0.299) * x.row(0) + Scalar(0.587) * x.row(1) + Scalar(0.114) * x.row(2)).transpose();
    const Scalar mean = gray_px.mean();
    x = (static_cast<Scalar>(contrast) * x.array() + static_cast<Scalar>(1.0 - contrast) * mean).matrix();
    x = x.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> gray =
        Scalar(0.299) * x.row(0) + Scalar(0.587) * x.row(1) + Scalar(0.114) * x.row(2);
    for (int c = 0; c < 3; ++c)
      x.row(c) = static_cast<Scalar>(saturation) * x.row(c) + static_cast<Scalar>(1.0 - saturation) * gray;
    x = x.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    const double a = hue * M_PI / 180.0;
    const double co = std::cos(a), si = std::sin(a) / std::sqrt(3.0), k = (1.0 - co) / 3.0;
    Eigen::Matrix<Scalar, 3, 3> rot;
    rot << Scalar(co + k), Scalar(k - si), Scalar(k + si),
           Scalar(k + si), Scalar(co + k), Scalar(k - si),
           Scalar(k - si), Scalar(k + si), Scalar(co + k);
    x = (rot * x).eval();
    x = x.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }
  if (blur) {
    const double e = std::exp(-1.0 / (2.0 * sigma * sigma));
    const Scalar w1 = static_cast<Scalar>(e / (1.0 + 2.0 * e));
    const Scalar w0 = static_cast<Scalar>(1.0 / (1.0 + 2.0 * e));
    const int h = image.height, w = image.width;
    Matrix<Scalar> tmp(x.rows(), x.cols());
    for (int c = 0; c < 3; ++c)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
          const int l = std::max(xx - 1, 0), r = std::min(xx + 1, w - 1);
          tmp(c, yy * w + xx) = w1 * x(c, yy * w + l) + w0 * x(c, yy * w + xx) + w1 * x(c, yy * w + r);
        }
    for (int c = 0; c < 3; ++c)
      for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
          const int u = std::max(yy - 1, 0), d = std::min(yy + 1, h - 1);
          x(c, yy * w + xx) = w1 * tmp(c, u * w + xx) + w0 * tmp(c, yy * w + xx) + w1 * tmp(c, d * w + xx);
        }
  }
}

template <typename Scalar>
std::vector<std::optional<Vector<Scalar>>> class_pooling_weights(const LabelVector& labels, int height,
                                                                 int width, int feat_h, int feat_w,
                                                                 int num_classes) {
  if (labels.size() != static_cast<Eigen::Index>(height) * width)
    throw InvalidArgument("class_pooling_weights: label size mismatch");
  const Matrix<Scalar> uh = bilinear_matrix<Scalar>(height, feat_h);
  const Matrix<Scalar> uw = bilinear_matrix<Scalar>(width, feat_w);
  std::vector<Vector<Scalar>> acc(static_cast<std::size_t>(num_classes),
                                  Vector<Scalar>::Zero(static_cast<Eigen::Index>(feat_h) * feat_w));
  std::vector<Eigen::Index> count(static_cast<std::size_t>(num_classes), 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int c = labels[static_cast<Eigen::Index>(y) * width + x];
      if (c < 0 || c >= num_classes) continue;
      auto& a = acc[static_cast<std::size_t>(c)];
      for (int fy = 0; fy < feat_h; ++fy) {
        const Scalar wy = uh(y, fy);
        if (wy == 0) continue;
        for (int fx = 0; fx < feat_w; ++fx) a[fy * feat_w + fx] += wy * uw(x, fx);
      }
      ++count[static_cast<std::size_t>(c)];
    }
  std::vector<std::optional<Vector<Scalar>>> out(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c)
    if (count[static_cast<std::size_t>(c)] > 0)
      out[static_cast<std::size_t>(c)] =
          acc[static_cast<std::size_t>(c)] / static_cast<Scalar>(count[static_cast<std::size_t>(c)]);
  return out;
}

namespace {

// 1 - cos(adapter(pooled), text_adapter(text)); backpropagates `weight`
// times the loss into `grad` and returns d/d(pooled) when grad is set.
template <typename Scalar>
Scalar aligned_cosine(const SegNetwork<Scalar>& net, const Vector<Scalar>& params,
                      const Vector<Scalar>& pooled, const Vector<Scalar>& text, Scalar weight,
                      Vector<Scalar>* grad, Vector<Scalar>* dpooled) {
  AdapterCache<Scalar> ac, tc;
  const Vector<Scalar> f = net.adapter_project(params, pooled, &ac);
  const Vector<Scalar> v = net.text_adapter_project(params, text, &tc);
  const CosineLoss<Scalar> cl = language_consistency_loss<Scalar>(f, v);
  if (grad) {
    *dpooled = net.adapter_backward(params, ac, cl.grad_f * weight, *grad);
    if (net.has_text_adapter()) net.text_adapter_backward(params, tc, cl.grad_v * weight, *grad);
  }
  return cl.value;
}

// Image alignment term on one feature map; adds d/d(features) into dfeat.
template <typename Scalar>
Scalar image_term(const SegNetwork<Scalar>& net, const Vector<Scalar>& params,
                  const Tensor3<Scalar>& features, const Vector<Scalar>& text, Scalar weight,
                  Vector<Scalar>* grad, Matrix<Scalar>* dfeat) {
  PoolCache<Scalar> pc;
  const Vector<Scalar> pooled = net.attention_pool(params, features, &pc);
  Vector<Scalar> dpooled;
  const Scalar value = aligned_cosine(net, params, pooled, text, weight, grad, &dpooled);
  if (grad) *dfeat += net.attention_pool_backward(params, pc, dpooled, *grad);
  return value;
}

// Mean over present classes of the class-prompt alignment.
template <typename Scalar>
Scalar pixel_term(const SegNetwork<Scalar>& net, const Vector<Scalar>& params,
                  const Tensor3<Scalar>& features, const LabelVector& labels, int height, int width,
                  const std::vector<Vector<Scalar>>& class_text, Scalar weight,
                  Vector<Scalar>* grad, Matrix<Scalar>* dfeat) {
  const int k = net.config().num_classes;
  if (static_cast<int>(class_text.size()) != k)
    throw InvalidArgument("pixel alignment needs one class embedding per class");
  const auto weights = class_pooling_weights<Scalar>(labels, height, width, features.height,
                                                     features.width, k);
  int present = 0;
  for (const auto& w : weights) present += w.has_value();
  if (present == 0) return Scalar(0);
  const Scalar share = weight / static_cast<Scalar>(present);
  Scalar total = 0;
  for (int c = 0; c < k; ++c) {
    const auto& w = weights[static_cast<std::size_t>(c)];
    if (!w) continue;
    const Vector<Scalar> pooled = features.data * *w;
    Vector<Scalar> dpooled;
    total += aligned_cosine(net, params, pooled, class_text[static_cast<std::size_t>(c)], share,
                            grad, &dpooled);
    if (grad) dfeat->noalias() += dpooled * w->transpose();
  }
  return total / static_cast<Scalar>(present);
}

}  // namespace

template <typename Scalar>
StepLosses student_step_losses(const SegNetwork<Scalar>& net, const Vector<Scalar>& params,
                               const StepInputs<Scalar>& in, const TrainConfig& cfg,
                               Vector<Scalar>* grad) {
  const std::size_t nb = in.source_images.size();
  const std::size_t nt = in.student_target_images.size();
  if (nb == 0) throw InvalidArgument("student_step_losses: empty source batch");
  if (in.source_labels.size() != nb) throw InvalidArgument("student_step_losses: label count mismatch");
  if (in.pseudo.labels.size() != nt) throw InvalidArgument("student_step_losses: pseudo-label count mismatch");
  if (grad) *grad = Vector<Scalar>::Zero(params.size());

  const bool lang = cfg.lambda_p > 0;
  const bool src_lang = lang && cfg.caption_mode != CaptionMode::kTargetOnly;
  const bool tgt_lang = lang && cfg.caption_mode != CaptionMode::kSourceOnly;
  const bool pixel = cfg.alignment == Alignment::kPixel;
  const Scalar lp_weight = static_cast<Scalar>(cfg.lambda_p);

  StepLosses out;
  const Scalar inv_b = Scalar(1) / static_cast<Scalar>(nb);
  Scalar ls = 0, lp_src = 0;
  for (std::size_t i = 0; i < nb; ++i) {
    NetworkCache<Scalar> cache;
    const ForwardResult<Scalar> fr = net.forward(params, in.source_images[i], grad ? &cache : nullptr);
    const LossResult<Scalar> sup = supervised_loss<Scalar>(fr.logits.data, in.source_labels[i], in.ignore_index);
    ls += sup.value * inv_b;
    Matrix<Scalar> dfeat = Matrix<Scalar>::Zero(fr.features.data.rows(), fr.features.data.cols());
    if (src_lang) {
      const Scalar w = lp_weight * inv_b;
      Scalar term;
      if (pixel) {
        term = pixel_term(net, params, fr.features, in.source_labels[i], fr.logits.height,
                          fr.logits.width, in.class_text, w, grad, &dfeat);
      } else {
        if (in.source_text.size() != nb) throw InvalidArgument("student_step_losses: missing source text");
        term = image_term(net, params, fr.features, in.source_text[i], w, grad, &dfeat);
      }
      lp_src += term * inv_b;
    }
    if (grad) net.backward(params, cache, sup.grad * inv_b, src_lang ? &dfeat : nullptr, *grad);
  }

  Scalar lt = 0;
  if (nt > 0) {
    const Scalar inv_t = Scalar(1) / static_cast<Scalar>(nt);
    const Scalar wt = static_cast<Scalar>(cfg.lambda_target);
    for (std::size_t i = 0; i < nt; ++i) {
      NetworkCache<Scalar> cache;
      const ForwardResult<Scalar> fr = net.forward(params, in.student_target_images[i], grad ? &cache : nullptr);
      const LossResult<Scalar> tl = weighted_pseudo_loss<Scalar>(fr.logits.data, in.pseudo.labels[i], in.pseudo.quality[i]);
      lt += tl.value * inv_t;
      if (grad) net.backward(params, cache, tl.grad * (inv_t * wt), nullptr, *grad);
    }
  }

  Scalar lp_tgt = 0;
  if (tgt_lang) {
    const std::size_t n = in.target_images.size();
    if (n == 0 || in.target_text.size() != n) throw InvalidArgument("student_step_losses: missing target text");
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    for (std::size_t i = 0; i < n; ++i) {
      NetworkCache<Scalar> cache;
      const ForwardResult<Scalar> fr = net.forward(params, in.target_images[i], grad ? &cache : nullptr);
      Matrix<Scalar> dfeat = Matrix<Scalar>::Zero(fr.features.data.rows(), fr.features.data.cols());
      lp_tgt += image_term(net, params, fr.features, in.target_text[i], lp_weight * inv_n, grad, &dfeat) * inv_n;
      if (grad) {
        const Matrix<Scalar> zero = Matrix<Scalar>::Zero(fr.logits.data.rows(), fr.logits.data.cols());
        net.backward(params, cache, zero, &dfeat, *grad);
      }
    }
  }

  out.l_s = static_cast<double>(ls);
  out.l_t = static_cast<double>(lt);
  out.l_p = static_cast<double>(lp_src + lp_tgt);
  out.total = static_cast<double>(ls + static_cast<Scalar>(cfg.lambda_target) * lt + lp_weight * (lp_src + lp_tgt));
  double q = 0;
  for (double v : in.pseudo.quality) q += v;
  out.q_mean = in.pseudo.quality.empty() ? 0.0 : q / static_cast<double>(in.pseudo.quality.size());
  return out;
}

template <typename Scalar>
PseudoLabelBatch teacher_pseudo_labels(const SegNetwork<Scalar>& net, const Vector<Scalar>& teacher,
                                       const std::vector<Tensor3<Scalar>>& target_images,
                                       double tau) {
  std::vector<Matrix<Scalar>> probs;
  probs.reserve(target_images.size());
  for (const auto& img : target_images)
    probs.push_back(softmax_columns<Scalar>(net.forward(teacher, img).logits.data));
  PseudoLabelBatch b = make_pseudo_labels<Scalar>(probs, tau);
  b.num_classes = net.config().num_classes;
  return b;
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "step,L_S,L_T,L_p,q_T_mean,lr\n";
  char buf[256];
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.l_s, r.l_t,
                  r.l_p, r.q_mean, r.lr);
    out += buf;
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1) {
      if (line != "step,L_S,L_T,L_p,q_T_mean,lr") throw FormatError("metrics: bad header", n);
      continue;
    }
    if (line.empty()) continue;
    MetricRow r;
    int used = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf%n", &r.step, &r.l_s, &r.l_t, &r.l_p,
                    &r.q_mean, &r.lr, &used) != 6 ||
        static_cast<std::size_t>(used) != line.size())
      throw FormatError("metrics: malformed row", n);
    rows.push_back(r);
  }
  if (n == 0) throw FormatError("metrics: empty file");
  return rows;
}

namespace {

std::vector<LabelMap> source_masks(const Dataset& d) {
  std::vector<LabelMap> masks;
  for (const SegSample& s : d.source) {
    if (!s.mask) throw InvalidArgument("train: source sample '" + s.id + "' has no mask");
    masks.push_back(*s.mask);
  }
  return masks;
}

const Dataset& require_dataset(const TrainData& d) {
  if (!d.dataset) throw InvalidArgument("train: no dataset");
  if (d.dataset->source.empty()) throw InvalidArgument("train: empty source split");
  if (d.dataset->target.empty()) throw InvalidArgument("train: empty target split");
  return *d.dataset;
}

}  // namespace

template <typename Scalar>
Trainer<Scalar>::Trainer(TrainConfig config, NetworkConfig net_config, TrainData data)
    : config_(std::move(config)),
      net_((config_.validate(), std::move(net_config))),
      data_(std::move(data)),
      sampler_(source_masks(require_dataset(data_)), net_.config().num_classes, config_.rcs_temperature),
      rng_(mix_seed(config_.seed, 101)) {
  if (static_cast<int>(data_.dataset->class_set.size()) != net_.config().num_classes)
    throw InvalidArgument("train: dataset has " + std::to_string(data_.dataset->class_set.size()) +
                          " classes, network expects " + std::to_string(net_.config().num_classes));
  if (config_.lambda_p > 0) {
    const bool need_src = config_.caption_mode != CaptionMode::kTargetOnly;
    const bool need_tgt = config_.caption_mode != CaptionMode::kSourceOnly;
    if (config_.alignment == Alignment::kPixel) {
      if (static_cast<int>(data_.class_embeddings.size()) != net_.config().num_classes)
        throw InvalidArgument("train: pixel alignment needs one class embedding per class");
      for (const auto& e : data_.class_embeddings)
        if (e.size() != net_.config().embed_dim)
          throw InvalidArgument("train: class embedding dimension differs from embed_dim");
    } else {
      for (const auto& [bank, needed, side] :
           {std::tuple{data_.source_bank, need_src, "source"}, std::tuple{data_.target_bank, need_tgt, "target"}}) {
        if (!needed) continue;
        if (!bank) throw InvalidArgument(std::string("train: no ") + side + " embedding bank");
        if (bank->dimension() != net_.config().embed_dim)
          throw InvalidArgument(std::string("train: ") + side + " embedding dimension " +
                                std::to_string(bank->dimension()) + " differs from embed_dim " +
                                std::to_string(net_.config().embed_dim));
      }
    }
  }
  models_.student = net_.init_params(mix_seed(config_.seed, 100));
  models_.teacher = models_.student;
  adam_m_ = Vector<Scalar>::Zero(models_.student.size());
  adam_v_ = Vector<Scalar>::Zero(models_.student.size());
  lr_base_.resize(models_.student.size());
  for (const ParamInfo& p : net_.layout().params())
    lr_base_.segment(p.offset, p.size()).setConstant(static_cast<Scalar>(
        p.group == ParamGroup::kEncoder ? config_.lr_encoder : config_.lr_decoder));
}

template <typename Scalar>
double Trainer<Scalar>::warmup_factor(int step) const {
  if (config_.warmup_steps <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / config_.warmup_steps);
}

template <typename Scalar>
Vector<Scalar> Trainer<Scalar>::text_vector(const EmbeddingBank* bank, const std::string& id,
                                            const char* side) const {
  const EmbeddingVector* v = bank ? bank->find(id) : nullptr;
  if (!v) throw TrainingError(std::string("no caption embedding for ") + side + " image '" + id + "'");
  return v->values.template cast<Scalar>();
}

template <typename Scalar>
StepInputs<Scalar> Trainer<Scalar>::draw_inputs(Rng& rng) const {
  const Dataset& d = *data_.dataset;
  const bool lang = config_.lambda_p > 0;
  const bool src_text = lang && config_.caption_mode != CaptionMode::kTargetOnly &&
                        config_.alignment == Alignment::kImage;
  const bool tgt_text = lang && config_.caption_mode != CaptionMode::kSourceOnly;
  StepInputs<Scalar> in;
  in.ignore_index = static_cast<int>(d.class_set.size());
  for (int b = 0; b < config_.batch_size; ++b) {
    const SegSample& s = d.source[sampler_.sample(rng)];
    in.source_images.push_back(s.image.template cast<Scalar>());
    in.source_labels.push_back(s.mask->labels);
    if (src_text) in.source_text.push_back(text_vector(data_.source_bank, s.id, "source"));
  }
  for (int b = 0; b < config_.batch_size; ++b) {
    const auto idx = rng.uniform_int(0, static_cast<std::int64_t>(d.target.size()) - 1);
    const SegSample& t = d.target[static_cast<std::size_t>(idx)];
    in.target_images.push_back(t.image.template cast<Scalar>());
    if (tgt_text) in.target_text.push_back(text_vector(data_.target_bank, t.id, "target"));
  }
  in.pseudo = teacher_pseudo_labels(net_, models_.teacher, in.target_images, config_.tau);
  if (config_.mix_enabled) {
    for (std::size_t i = 0; i < in.target_images.size(); ++i) {
      const std::vector<int> classes = select_mix_classes(in.source_labels[i], in.ignore_index, rng);
      MixedSample<Scalar> m = classmix<Scalar>(in.source_images[i], in.source_labels[i],
                                               in.target_images[i], in.pseudo.labels[i], classes);
      strong_augment(m.image, rng, config_.color_jitter_strength, config_.color_jitter_prob,
                     config_.blur_prob);
      in.student_target_images.push_back(std::move(m.image));
      in.pseudo.labels[i] = std::move(m.labels);
    }
  } else {
    in.student_target_images = in.target_images;
  }
  if (lang && config_.alignment == Alignment::kPixel)
    for (const auto& e : data_.class_embeddings) in.class_text.push_back(e.template cast<Scalar>());
  return in;
}

template <typename Scalar>
StepInputs<Scalar> Trainer<Scalar>::peek_inputs() const {
  Rng copy = rng_;
  return draw_inputs(copy);
}

template <typename Scalar>
MetricRow Trainer<Scalar>::step() {
  const StepInputs<Scalar> in = draw_inputs(rng_);
  Vector<Scalar> grad;
  const StepLosses losses = student_step_losses(net_, models_.student, in, config_, &grad);
  const int t = step_ + 1;
  if (!std::isfinite(losses.total) || !grad.allFinite())
    throw TrainingError("non-finite loss at step " + std::to_string(t));

  const double factor = warmup_factor(t);
  const Scalar b1 = static_cast<Scalar>(config_.beta1), b2 = static_cast<Scalar>(config_.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(config_.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, t));
  const Scalar eps = static_cast<Scalar>(config_.adam_eps);
  const Scalar wd = static_cast<Scalar>(config_.weight_decay);
  adam_m_ = b1 * adam_m_ + (Scalar(1) - b1) * grad;
  adam_v_ = b2 * adam_v_ + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const auto update = (adam_m_.array() / c1) / ((adam_v_.array() / c2).sqrt() + eps) +
                      wd * models_.student.array();
  models_.student.array() -= static_cast<Scalar>(factor) * lr_base_.array() * update;
  ema_update(models_, config_.alpha);

  step_ = t;
  MetricRow row{t, losses.l_s, losses.l_t, losses.l_p, losses.q_mean, config_.lr_encoder * factor};
  history_.push_back(row);
  return row;
}

template <typename Scalar>
void Trainer<Scalar>::run(const std::function<void(const Trainer&)>& on_step) {
  while (step_ < config_.total_steps) {
    step();
    if (on_step) on_step(*this);
  }
}

#define LANGDA_INSTANTIATE(S)                                                                    \
  template StepLosses student_step_losses<S>(const SegNetwork<S>&, const Vector<S>&,             \
                                             const StepInputs<S>&, const TrainConfig&,           \
                                             Vector<S>*);                                        \
  template PseudoLabelBatch teacher_pseudo_labels<S>(const SegNetwork<S>&, const Vector<S>&,     \
                                                     const std::vector<Tensor3<S>>&, double);    \
  template std::vector<std::optional<Vector<S>>> class_pooling_weights<S>(                       \
      const LabelVector&, int, int, int, int, int);                                              \
  template void strong_augment<S>(Tensor3<S>&, Rng&, double, double, double);                    \
  template class Trainer<S>;

LANGDA_INSTANTIATE(float)
LANGDA_INSTANTIATE(double)

}  // namespace langda
