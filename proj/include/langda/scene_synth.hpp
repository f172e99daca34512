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

#ifndef LANGDA_SCENE_SYNTH_HPP_
#define LANGDA_SCENE_SYNTH_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "langda/core.hpp"

namespace langda {

enum class RuleKind { kFill, kBand, kBandAbove, kBlobOn };

// One placement rule. Fractions are relative to image height; blob sizes are
// in pixels. Rules are applied in order, later rules paint over earlier ones.
struct LayoutRule {
  RuleKind kind = RuleKind::kBand;
  std::string cls;
  std::string anchor;  // band_above: band to sit on; blob_on: host class
  double top = 0.0;
  double bottom = 1.0;
  double height = 0.1;
  double jitter = 0.0;
  double probability = 1.0;
  int count_min = 1;
  int count_max = 1;
  int blob_w_min = 1;
  int blob_w_max = 1;
  int blob_h_min = 1;
  int blob_h_max = 1;

  std::string describe() const;

  static LayoutRule fill(std::string cls);
  static LayoutRule band(std::string cls, double top, double bottom, double jitter = 0.0);
  static LayoutRule band_above(std::string cls, std::string anchor, double height,
                               double jitter = 0.0);
  static LayoutRule blob_on(std::string cls, std::string host, int count_min, int count_max,
                            std::pair<int, int> width, std::pair<int, int> height);
};

struct SceneSpec {
  int height = 32;
  int width = 32;
  std::vector<std::string> class_set;
  std::vector<LayoutRule> layout_rules;
  std::uint64_t seed = 0;
  double color_jitter = 0.03;

  int num_classes() const { return static_cast<int>(class_set.size()); }
  // One past the last class id.
  int ignore_index() const { return num_classes(); }
  int class_id(const std::string& name) const;  // -1 when absent
  void validate() const;
};

struct DomainShift {
  double hue_shift = 0.0;  // degrees
  double brightness_scale = 1.0;
  double noise_sigma = 0.0;
  double texture_freq = 0.0;  // cycles per image; 0 disables
  double texture_amplitude = 0.2;

  bool is_neutral() const {
    return hue_shift == 0.0 && brightness_scale == 1.0 && noise_sigma == 0.0 &&
           texture_freq == 0.0;
  }
  void validate() const;
};

enum class Domain { kSource, kTarget };

struct SegSample {
  std::string id;
  Image image;
  std::optional<LabelMap> mask;
  std::string group;  // condition tag, used for grouped evaluation
};

struct GeneratedScene {
  SegSample sample;  // carries the mask for source scenes only
  LabelMap ground_truth;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Fixed base color for a class id.
std::array<float, 3> class_color(int class_id);

GeneratedScene generate_scene(const SceneSpec& spec, Domain domain, const DomainShift& shift);

// Applies the target corruption chain to an image: hue rotation, brightness,
// additive noise, then multiplicative low-frequency texture.
Image apply_shift(const Image& image, const DomainShift& shift, std::uint64_t seed);

// Sorted unique class ids present in the mask, ignore excluded.
std::vector<int> present_classes(const LabelMap& mask, int ignore_index);

// Unordered pairs (a < b) of distinct classes sharing a 4-connected boundary.
std::vector<std::pair<int, int>> adjacent_pairs(const LabelMap& mask, int ignore_index);

std::string template_caption(const LabelMap& mask, const std::vector<std::string>& class_set);

// Class names (from class_set) mentioned as whole words in text; a plural
// "s"/"es" suffix also counts. Sorted by class id.
std::vector<std::string> mentioned_classes(const std::string& text,
                                           const std::vector<std::string>& class_set);

struct NamedShift {
  std::string name;
  DomainShift shift;
};

// Target ground truth, kept apart from anything handed to the trainer.
struct EvalSidecar {
  std::map<std::string, LabelMap> masks;
};

struct Dataset {
  std::vector<std::string> class_set;
  std::vector<SegSample> source;
  std::vector<SegSample> target;
  EvalSidecar eval;
  std::string spec_hash;
};

// Target samples are split round-robin across the given conditions.
Dataset build_dataset(const SceneSpec& spec, int n_source, int n_target,
                      const std::vector<NamedShift>& shifts, std::uint64_t seed);
Dataset build_dataset(const SceneSpec& spec, int n_source, int n_target, const DomainShift& shift,
                      std::uint64_t seed);

// Hex SHA-256 of the canonical JSON serialization.
std::string spec_hash(const SceneSpec& spec);

void to_json(nlohmann::json& j, const LayoutRule& r);
void from_json(const nlohmann::json& j, LayoutRule& r);
void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);
void to_json(nlohmann::json& j, const DomainShift& s);
void from_json(const nlohmann::json& j, DomainShift& s);

// The six-class street layout used by the default benchmark preset.
SceneSpec default_street_spec(int height = 32, int width = 32);

}  // namespace langda

#endif  // LANGDA_SCENE_SYNTH_HPP_
