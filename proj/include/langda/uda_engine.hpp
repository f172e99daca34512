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

// Self-training loop: source supervision, EMA-teacher pseudo-labels with a
// confidence-weighted target loss, rare class sampling, class mixing and the
// caption-embedding consistency term.

#ifndef LANGDA_UDA_ENGINE_HPP_
#define LANGDA_UDA_ENGINE_HPP_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "langda/core.hpp"
#include "langda/losses.hpp"
#include "langda/scene_synth.hpp"
#include "langda/seg_network.hpp"
#include "langda/text_embedding.hpp"

namespace langda {

enum class CaptionMode { kSourceOnly, kTargetOnly, kSourceAndTarget };
enum class Alignment { kImage, kPixel };

const char* to_string(CaptionMode m);
CaptionMode caption_mode_from_string(const std::string& s);
const char* to_string(Alignment a);
Alignment alignment_from_string(const std::string& s);

struct TrainConfig {
  double tau = 0.968;
  double alpha = 0.999;
  double lambda_p = 0.1;
  double lambda_target = 1.0;  // self-training weight on L_T
  double lr_encoder = 6e-5;
  double lr_decoder = 6e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int warmup_steps = 1500;
  int total_steps = 2000;
  int batch_size = 2;
  CaptionMode caption_mode = CaptionMode::kSourceOnly;
  Alignment alignment = Alignment::kImage;
  double rcs_temperature = 0.01;
  bool mix_enabled = true;
  double color_jitter_strength = 0.2;  // mixed images only
  double color_jitter_prob = 0.8;
  double blur_prob = 0.5;
  int checkpoint_every = 0;  // 0: final checkpoint only
  int eval_every = 0;        // 0: no intermediate evaluation
  std::uint64_t seed = 0;

  // Throws InvalidArgument naming the key and its admissible range.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Strict: unknown keys are rejected; absent keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct PseudoLabelBatch {
  std::vector<LabelVector> labels;  // argmax class per pixel
  std::vector<double> quality;      // per image
  int num_classes = 0;

  // [K x P] one-hot view of image i.
  Matrix<double> one_hot(std::size_t i) const;
};

template <typename Scalar>
PseudoLabelBatch make_pseudo_labels(const std::vector<Matrix<Scalar>>& teacher_probs, double tau) {
  PseudoLabelBatch b;
  for (const auto& p : teacher_probs) {
    b.num_classes = static_cast<int>(p.rows());
    b.labels.push_back(pseudo_labels<Scalar>(p));
    b.quality.push_back(quality_estimate<Scalar>(p, tau));
  }
  return b;
}

// Mean over images of q_i * CE(logits_i, p_i). Gradients are per image.
template <typename Scalar>
Scalar target_loss(const std::vector<Matrix<Scalar>>& logits, const PseudoLabelBatch& pseudo,
                   std::vector<Matrix<Scalar>>* grads = nullptr) {
  if (logits.size() != pseudo.labels.size())
    throw InvalidArgument("target_loss: batch size mismatch");
  if (logits.empty()) return Scalar(0);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(logits.size());
  Scalar total = 0;
  if (grads) grads->clear();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    LossResult<Scalar> r = weighted_pseudo_loss<Scalar>(logits[i], pseudo.labels[i], pseudo.quality[i]);
    total += r.value * inv;
    if (grads) grads->push_back(r.grad * inv);
  }
  return total;
}

class RareClassSampler {
 public:
  RareClassSampler(const std::vector<LabelMap>& masks, int num_classes, double temperature);

  const std::vector<double>& class_frequency() const { return freq_; }
  const std::vector<double>& class_probability() const { return prob_; }
  const std::vector<int>& excluded_classes() const { return excluded_; }
  // Probability of drawing each image.
  std::vector<double> image_distribution() const;
  std::size_t sample(Rng& rng) const;

 private:
  std::vector<double> freq_;
  std::vector<double> prob_;
  std::vector<int> excluded_;
  std::vector<std::vector<std::size_t>> images_with_;
  std::size_t num_images_ = 0;
};

template <typename Scalar>
struct MixedSample {
  Tensor3<Scalar> image;
  LabelVector labels;
  LabelVector mask;  // 1 where the source pixel was pasted
};

// ceil(n/2) of the classes present in the source labels, in ascending order.
std::vector<int> select_mix_classes(const LabelVector& source_labels, int ignore_index, Rng& rng);

template <typename Scalar>
MixedSample<Scalar> classmix(const Tensor3<Scalar>& source_image, const LabelVector& source_labels,
                             const Tensor3<Scalar>& target_image, const LabelVector& pseudo,
                             const std::vector<int>& classes) {
  if (source_image.data.rows() != target_image.data.rows() ||
      source_image.data.cols() != target_image.data.cols() ||
      source_labels.size() != source_image.pixels() || pseudo.size() != target_image.pixels())
    throw InvalidArgument("classmix: shape mismatch");
  MixedSample<Scalar> m;
  m.image = target_image;
  m.labels = pseudo;
  m.mask = LabelVector::Zero(source_labels.size());
  for (Eigen::Index p = 0; p < source_labels.size(); ++p) {
    bool hit = false;
    for (int c : classes) hit = hit || source_labels[p] == c;
    if (!hit) continue;
    m.mask[p] = 1;
    m.labels[p] = source_labels[p];
    m.image.data.col(p) = source_image.data.col(p);
  }
  return m;
}

// Photometric augmentation of a mixed image: brightness, contrast,
// saturation and hue jitter with probability `jitter_prob`, then a 3x3
// Gaussian blur (sigma in [0.15, 1.15]) with probability `blur_prob`.
template <typename Scalar>
void strong_augment(Tensor3<Scalar>& image, Rng& rng, double strength, double jitter_prob,
                    double blur_prob);

// Everything the student sees in one step, after teacher labelling and mixing.
template <typename Scalar>
struct StepInputs {
  std::vector<Tensor3<Scalar>> source_images;
  std::vector<LabelVector> source_labels;
  int ignore_index = -1;
  std::vector<Vector<Scalar>> source_text;  // per source image, image alignment
  std::vector<Tensor3<Scalar>> target_images;
  std::vector<Vector<Scalar>> target_text;  // per target image
  std::vector<Tensor3<Scalar>> student_target_images;  // mixed or plain target
  PseudoLabelBatch pseudo;                             // labels for student_target_images
  std::vector<Vector<Scalar>> class_text;              // pixel alignment, one per class
};

struct StepLosses {
  double l_s = 0;
  double l_t = 0;
  double l_p = 0;
  double total = 0;
  double q_mean = 0;
};

// Loss components and, when `grad` is given, d(total)/d(student params).
template <typename Scalar>
StepLosses student_step_losses(const SegNetwork<Scalar>& net, const Vector<Scalar>& params,
                               const StepInputs<Scalar>& in, const TrainConfig& cfg,
                               Vector<Scalar>* grad);

// Teacher forward on each target image, softmax, argmax and quality.
template <typename Scalar>
PseudoLabelBatch teacher_pseudo_labels(const SegNetwork<Scalar>& net, const Vector<Scalar>& teacher,
                                       const std::vector<Tensor3<Scalar>>& target_images,
                                       double tau);

// Weights over the [h x w] feature grid whose dot product with a feature
// channel gives that channel's bilinearly upsampled mean over class pixels.
template <typename Scalar>
std::vector<std::optional<Vector<Scalar>>> class_pooling_weights(const LabelVector& labels, int height,
                                                                 int width, int feat_h, int feat_w,
                                                                 int num_classes);

struct MetricRow {
  int step = 0;  // 1-based
  double l_s = 0;
  double l_t = 0;
  double l_p = 0;
  double q_mean = 0;
  double lr = 0;  // encoder rate after warmup scaling
};

std::string metrics_csv(const std::vector<MetricRow>& rows);
std::vector<MetricRow> parse_metrics_csv(const std::string& text);

struct TrainData {
  const Dataset* dataset = nullptr;
  const EmbeddingBank* source_bank = nullptr;  // caption embeddings by image id
  const EmbeddingBank* target_bank = nullptr;
  std::vector<Eigen::VectorXf> class_embeddings;  // pixel alignment, indexed by class id
};

template <typename Scalar>
class Trainer {
 public:
  Trainer(TrainConfig config, NetworkConfig net_config, TrainData data);

  // One optimisation step; returns the logged row.
  MetricRow step();
  // Runs until total_steps; `on_step` sees the trainer after every step.
  void run(const std::function<void(const Trainer&)>& on_step = {});

  const TrainConfig& config() const { return config_; }
  const SegNetwork<Scalar>& network() const { return net_; }
  const ModelPair<Scalar>& models() const { return models_; }
  ModelPair<Scalar>& mutable_models() { return models_; }
  const std::vector<MetricRow>& history() const { return history_; }
  int steps_done() const { return step_; }
  const RareClassSampler& sampler() const { return sampler_; }
  double warmup_factor(int step) const;

  // Assembles the inputs of the next step without consuming randomness.
  StepInputs<Scalar> peek_inputs() const;

 private:
  StepInputs<Scalar> draw_inputs(Rng& rng) const;
  Vector<Scalar> text_vector(const EmbeddingBank* bank, const std::string& id,
                             const char* side) const;

  TrainConfig config_;
  SegNetwork<Scalar> net_;
  TrainData data_;
  RareClassSampler sampler_;
  ModelPair<Scalar> models_;
  Vector<Scalar> adam_m_;
  Vector<Scalar> adam_v_;
  Vector<Scalar> lr_base_;  // per-entry base rate from the parameter group
  Rng rng_;
  int step_ = 0;
  std::vector<MetricRow> history_;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace langda

#endif  // LANGDA_UDA_ENGINE_HPP_
