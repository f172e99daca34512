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

#include "langda/scene_synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "langda/hashing.hpp"

namespace langda {
namespace {

constexpr int kMaxLayoutAttempts = 16;

const char* kind_name(RuleKind kind) {
  switch (kind) {
    case RuleKind::kFill:
      return "fill";
    case RuleKind::kBand:
      return "band";
    case RuleKind::kBandAbove:
      return "band_above";
    case RuleKind::kBlobOn:
      return "blob_on";
  }
  return "?";
}

RuleKind kind_from_name(const std::string& name) {
  if (name == "fill") return RuleKind::kFill;
  if (name == "band") return RuleKind::kBand;
  if (name == "band_above") return RuleKind::kBandAbove;
  if (name == "blob_on") return RuleKind::kBlobOn;
  throw InvalidArgument("layout rule: unknown kind \"" + name + "\"");
}

struct Band {
  int top = 0;
  int bottom = 0;  // exclusive
};

// Labels 4-connected components of `cls`; returns component index per pixel (-1 elsewhere).
int label_components(const LabelMap& mask, int cls, std::vector<int>& comp) {
  comp.assign(static_cast<std::size_t>(mask.size()), -1);
  int n = 0;
  std::vector<int> stack;
  for (int start = 0; start < mask.size(); ++start) {
    if (mask.labels[start] != cls || comp[start] >= 0) continue;
    comp[start] = n;
    stack.push_back(start);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int y = p / mask.width, x = p % mask.width;
      const int nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= mask.height || nb[1] < 0 || nb[1] >= mask.width) continue;
        const int q = nb[0] * mask.width + nb[1];
        if (mask.labels[q] == cls && comp[q] < 0) {
          comp[q] = n;
          stack.push_back(q);
        }
      }
    }
    ++n;
  }
  return n;
}

// Every component of `cls` must touch `host` through a 4-neighbor.
bool components_touch(const LabelMap& mask, int cls, int host) {
  std::vector<int> comp;
  const int n = label_components(mask, cls, comp);
  std::vector<bool> touched(static_cast<std::size_t>(n), false);
  for (int p = 0; p < mask.size(); ++p) {
    if (comp[p] < 0) continue;
    const int y = p / mask.width, x = p % mask.width;
    const int nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
    for (const auto& nb : nbrs) {
      if (nb[0] < 0 || nb[0] >= mask.height || nb[1] < 0 || nb[1] >= mask.width) continue;
      if (mask.at(nb[0], nb[1]) == host) touched[comp[p]] = true;
    }
  }
  return std::all_of(touched.begin(), touched.end(), [](bool b) { return b; });
}

std::string rule_label(std::size_t index, const LayoutRule& rule) {
  return "rule " + std::to_string(index) + " (" + rule.describe() + ")";
}

// One attempt at painting the layout; returns an error message on failure.
std::optional<std::string> paint_layout(const SceneSpec& spec, Rng& rng, LabelMap& mask) {
  const int h = spec.height, w = spec.width;
  int background = 0;
  mask = LabelMap(h, w, background);
  std::map<int, Band> bands;
  std::vector<std::pair<std::size_t, const LayoutRule*>> blob_rules;

  for (std::size_t i = 0; i < spec.layout_rules.size(); ++i) {
    const LayoutRule& rule = spec.layout_rules[i];
    const int cls = spec.class_id(rule.cls);
    const bool active = rng.uniform() < rule.probability;
    switch (rule.kind) {
      case RuleKind::kFill:
        if (active) mask.labels.setConstant(cls);
        break;
      case RuleKind::kBand: {
        const double t = std::clamp(rule.top + rng.uniform(-rule.jitter, rule.jitter), 0.0, 1.0);
        const double b =
            std::clamp(rule.bottom + rng.uniform(-rule.jitter, rule.jitter), 0.0, 1.0);
        if (!active) break;
        const int r0 = static_cast<int>(std::lround(t * h));
        const int r1 = static_cast<int>(std::lround(b * h));
        if (r1 <= r0) return rule_label(i, rule) + ": band collapsed to zero rows";
        for (int y = r0; y < r1; ++y)
          for (int x = 0; x < w; ++x) mask.at(y, x) = cls;
        bands[cls] = Band{r0, r1};
        break;
      }
      case RuleKind::kBandAbove: {
        const double hh = rule.height + rng.uniform(-rule.jitter, rule.jitter);
        if (!active) break;
        auto it = bands.find(spec.class_id(rule.anchor));
        if (it == bands.end()) {
          // Anchor skipped by its own probability: nothing to sit on.
          bool anchor_declared = false;
          for (std::size_t k = 0; k < i; ++k) {
            const auto& prev = spec.layout_rules[k];
            if (prev.cls == rule.anchor &&
                (prev.kind == RuleKind::kBand || prev.kind == RuleKind::kBandAbove))
              anchor_declared = prev.probability < 1.0 || anchor_declared;
          }
          if (anchor_declared) break;
          return rule_label(i, rule) + ": anchor band '" + rule.anchor + "' was not placed";
        }
        const int rows = static_cast<int>(std::lround(std::max(hh, 0.0) * h));
        const int r1 = it->second.top;
        const int r0 = std::max(0, r1 - rows);
        if (r1 <= r0) return rule_label(i, rule) + ": no room above anchor '" + rule.anchor + "'";
        for (int y = r0; y < r1; ++y)
          for (int x = 0; x < w; ++x) mask.at(y, x) = cls;
        bands[cls] = Band{r0, r1};
        break;
      }
      case RuleKind::kBlobOn: {
        const int count = static_cast<int>(rng.uniform_int(rule.count_min, rule.count_max));
        if (!active || count == 0) break;
        const int host = spec.class_id(rule.anchor);
        for (int n = 0; n < count; ++n) {
          const int bw = static_cast<int>(rng.uniform_int(rule.blob_w_min, rule.blob_w_max));
          const int bh = static_cast<int>(rng.uniform_int(rule.blob_h_min, rule.blob_h_max));
          // Footing: a host pixel with another host pixel directly below it.
          std::vector<int> footing;
          for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x < w; ++x)
              if (mask.at(y, x) == host && mask.at(y + 1, x) == host) footing.push_back(y * w + x);
          if (footing.empty())
            return rule_label(i, rule) + ": host '" + rule.anchor + "' offers no footing";
          const int p =
              footing[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(footing.size()) - 1))];
          const int fy = p / w, fx = p % w;
          const int x0 = std::clamp(fx - bw / 2, 0, w - bw);
          for (int y = std::max(0, fy - bh + 1); y <= fy; ++y)
            for (int x = x0; x < x0 + bw; ++x) mask.at(y, x) = cls;
        }
        blob_rules.emplace_back(i, &rule);
        break;
      }
    }
  }
  for (const auto& [i, rule] : blob_rules) {
    if (!components_touch(mask, spec.class_id(rule->cls), spec.class_id(rule->anchor)))
      return rule_label(i, *rule) + ": blob lost contact with host '" + rule->anchor + "'";
  }
  return std::nullopt;
}

std::string percent_text(double frac) {
  return std::to_string(static_cast<int>(std::lround(100.0 * frac)));
}

}  // namespace

std::string LayoutRule::describe() const {
  std::ostringstream os;
  os << kind_name(kind) << ' ' << cls;
  if (kind == RuleKind::kBandAbove) os << " above " << anchor;
  if (kind == RuleKind::kBlobOn) os << " on " << anchor;
  return os.str();
}

LayoutRule LayoutRule::fill(std::string cls) {
  LayoutRule r;
  r.kind = RuleKind::kFill;
  r.cls = std::move(cls);
  return r;
}

LayoutRule LayoutRule::band(std::string cls, double top, double bottom, double jitter) {
  LayoutRule r;
  r.kind = RuleKind::kBand;
  r.cls = std::move(cls);
  r.top = top;
  r.bottom = bottom;
  r.jitter = jitter;
  return r;
}

LayoutRule LayoutRule::band_above(std::string cls, std::string anchor, double height,
                                  double jitter) {
  LayoutRule r;
  r.kind = RuleKind::kBandAbove;
  r.cls = std::move(cls);
  r.anchor = std::move(anchor);
  r.height = height;
  r.jitter = jitter;
  return r;
}

LayoutRule LayoutRule::blob_on(std::string cls, std::string host, int count_min, int count_max,
                               std::pair<int, int> width, std::pair<int, int> height) {
  LayoutRule r;
  r.kind = RuleKind::kBlobOn;
  r.cls = std::move(cls);
  r.anchor = std::move(host);
  r.count_min = count_min;
  r.count_max = count_max;
  r.blob_w_min = width.first;
  r.blob_w_max = width.second;
  r.blob_h_min = height.first;
  r.blob_h_max = height.second;
  return r;
}

int SceneSpec::class_id(const std::string& name) const {
  auto it = std::find(class_set.begin(), class_set.end(), name);
  return it == class_set.end() ? -1 : static_cast<int>(it - class_set.begin());
}

void SceneSpec::validate() const {
  if (height < 1 || width < 1) throw InvalidArgument("scene spec: height and width must be >= 1");
  if (class_set.empty()) throw InvalidArgument("scene spec: class_set is empty");
  if (class_set.size() > 254) throw InvalidArgument("scene spec: at most 254 classes");
  std::set<std::string> seen;
  for (const auto& name : class_set) {
    if (name.empty()) throw InvalidArgument("scene spec: empty class name");
    if (!seen.insert(name).second)
      throw InvalidArgument("scene spec: duplicate class name '" + name + "'");
  }
  if (!(color_jitter >= 0.0)) throw InvalidArgument("scene spec: color_jitter must be >= 0");
  for (std::size_t i = 0; i < layout_rules.size(); ++i) {
    const LayoutRule& r = layout_rules[i];
    const std::string where = "scene spec: " + rule_label(i, r);
    if (class_id(r.cls) < 0) throw InvalidArgument(where + ": unknown class '" + r.cls + "'");
    if ((r.kind == RuleKind::kBandAbove || r.kind == RuleKind::kBlobOn) && class_id(r.anchor) < 0)
      throw InvalidArgument(where + ": unknown anchor class '" + r.anchor + "'");
    if (!(r.probability >= 0.0 && r.probability <= 1.0))
      throw InvalidArgument(where + ": probability outside [0,1]");
    if (!(r.jitter >= 0.0)) throw InvalidArgument(where + ": jitter must be >= 0");
    if (r.kind == RuleKind::kBand && !(r.top < r.bottom))
      throw InvalidArgument(where + ": top must be below bottom");
    if (r.kind == RuleKind::kBlobOn) {
      if (r.count_min < 0 || r.count_min > r.count_max)
        throw InvalidArgument(where + ": invalid count range");
      if (r.blob_w_min < 1 || r.blob_w_min > r.blob_w_max || r.blob_h_min < 1 ||
          r.blob_h_min > r.blob_h_max)
        throw InvalidArgument(where + ": invalid blob size range");
      if (r.blob_w_max > width || r.blob_h_max > height)
        throw InvalidArgument(where + ": blob larger than the image");
      if (r.anchor == r.cls) throw InvalidArgument(where + ": blob cannot stand on itself");
    }
  }
}

void DomainShift::validate() const {
  if (!(brightness_scale > 0.0)) throw InvalidArgument("domain shift: brightness_scale must be > 0");
  if (!(noise_sigma >= 0.0)) throw InvalidArgument("domain shift: noise_sigma must be >= 0");
  if (!(texture_freq >= 0.0)) throw InvalidArgument("domain shift: texture_freq must be >= 0");
  if (!(texture_amplitude >= 0.0 && texture_amplitude < 1.0))
    throw InvalidArgument("domain shift: texture_amplitude must be in [0,1)");
  if (!std::isfinite(hue_shift)) throw InvalidArgument("domain shift: hue_shift must be finite");
}

std::array<float, 3> class_color(int class_id) {
  static constexpr std::array<std::array<float, 3>, 12> kPalette = {{
      {0.50f, 0.45f, 0.50f},  // road-like gray
      {0.62f, 0.52f, 0.62f},  // close to 0 on purpose
      {0.55f, 0.35f, 0.25f},
      {0.25f, 0.55f, 0.25f},
      {0.45f, 0.65f, 0.90f},
      {0.85f, 0.20f, 0.25f},
      {0.90f, 0.80f, 0.20f},
      {0.20f, 0.25f, 0.60f},
      {0.40f, 0.75f, 0.70f},
      {0.70f, 0.40f, 0.80f},
      {0.95f, 0.55f, 0.15f},
      {0.30f, 0.30f, 0.30f},
  }};
  return kPalette[static_cast<std::size_t>(class_id) % kPalette.size()];
}

Image apply_shift(const Image& image, const DomainShift& shift, std::uint64_t seed) {
  shift.validate();
  Image out = image;
  if (shift.hue_shift != 0.0) {
    // Rotation about the gray axis.
    const double a = shift.hue_shift * M_PI / 180.0;
    const double c = std::cos(a), s = std::sin(a) / std::sqrt(3.0), k = (1.0 - c) / 3.0;
    Eigen::Matrix3d rot;
    rot << c + k, k - s, k + s, k + s, c + k, k - s, k - s, k + s, c + k;
    const Eigen::MatrixXd rotated = rot * out.data.cast<double>();
    out.data = rotated.cwiseMax(0.0).cwiseMin(1.0).cast<float>();
  }
  if (shift.brightness_scale != 1.0) {
    out.data = (out.data.cast<double>() * shift.brightness_scale).cwiseMin(1.0).cast<float>();
  }
  if (shift.noise_sigma > 0.0) {
    Rng rng(mix_seed(seed, 3));
    for (Eigen::Index i = 0; i < out.data.size(); ++i) {
      const double v = out.data.data()[i] + rng.normal(0.0, shift.noise_sigma);
      out.data.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  if (shift.texture_freq > 0.0) {
    Rng rng(mix_seed(seed, 4));
    const double px = rng.uniform(0.0, 2.0 * M_PI), py = rng.uniform(0.0, 2.0 * M_PI);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const double f = 1.0 + shift.texture_amplitude *
                                   std::sin(2.0 * M_PI * shift.texture_freq * x / out.width + px) *
                                   std::sin(2.0 * M_PI * shift.texture_freq * y / out.height + py);
        for (int c = 0; c < out.channels(); ++c)
          out.at(c, y, x) = static_cast<float>(std::clamp(out.at(c, y, x) * f, 0.0, 1.0));
      }
    }
  }
  return out;
}

GeneratedScene generate_scene(const SceneSpec& spec, Domain domain, const DomainShift& shift) {
  spec.validate();
  shift.validate();
  Rng layout_rng(mix_seed(spec.seed, 1));
  LabelMap mask;
  std::string last_error;
  bool ok = false;
  for (int attempt = 0; attempt < kMaxLayoutAttempts && !ok; ++attempt) {
    if (auto err = paint_layout(spec, layout_rng, mask)) {
      last_error = *err;
    } else {
      ok = true;
    }
  }
  if (!ok) throw GenerationError("infeasible layout: " + last_error);

  Image image(3, spec.height, spec.width);
  Rng color_rng(mix_seed(spec.seed, 2));
  for (Eigen::Index p = 0; p < mask.size(); ++p) {
    const auto base = class_color(mask.labels[p]);
    for (int c = 0; c < 3; ++c) {
      const double v = base[static_cast<std::size_t>(c)] + color_rng.normal(0.0, spec.color_jitter);
      image.data(c, p) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  GeneratedScene out;
  out.ground_truth = mask;
  out.sample.id = std::to_string(spec.seed);
  if (domain == Domain::kSource) {
    out.sample.image = std::move(image);
    out.sample.mask = std::move(mask);
    out.sample.group = "source";
  } else {
    out.sample.image = apply_shift(image, shift, spec.seed);
    out.sample.group = "target";
  }
  return out;
}

std::vector<int> present_classes(const LabelMap& mask, int ignore_index) {
  std::set<int> ids;
  for (Eigen::Index p = 0; p < mask.size(); ++p)
    if (mask.labels[p] != ignore_index) ids.insert(mask.labels[p]);
  return {ids.begin(), ids.end()};
}

std::vector<std::pair<int, int>> adjacent_pairs(const LabelMap& mask, int ignore_index) {
  std::set<std::pair<int, int>> pairs;
  auto consider = [&](int a, int b) {
    if (a == b || a == ignore_index || b == ignore_index) return;
    pairs.emplace(std::min(a, b), std::max(a, b));
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (x + 1 < mask.width) consider(mask.at(y, x), mask.at(y, x + 1));
      if (y + 1 < mask.height) consider(mask.at(y, x), mask.at(y + 1, x));
    }
  }
  return {pairs.begin(), pairs.end()};
}

std::string template_caption(const LabelMap& mask, const std::vector<std::string>& class_set) {
  const int k = static_cast<int>(class_set.size());
  for (Eigen::Index p = 0; p < mask.size(); ++p)
    if (mask.labels[p] < 0 || mask.labels[p] > k)
      throw InvalidArgument("template_caption: mask value out of range");
  const std::vector<int> present = present_classes(mask, k);
  if (present.empty()) throw InvalidArgument("template_caption: mask has no labeled pixels");
  if (present.size() == 1) return "The image shows " + class_set[present[0]] + ".";

  std::ostringstream os;
  os << "The image shows ";
  for (std::size_t i = 0; i < present.size(); ++i) {
    if (i > 0) os << (i + 1 == present.size() ? " and " : ", ");
    os << class_set[present[i]];
  }
  os << '.';

  std::vector<double> count(k, 0.0), sy(k, 0.0), sx(k, 0.0);
  double labeled = 0.0;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int c = mask.at(y, x);
      if (c == k) continue;
      count[c] += 1.0;
      sy[c] += y + 0.5;
      sx[c] += x + 0.5;
      labeled += 1.0;
    }
  }
  for (int c : present) {
    const double cy = sy[c] / count[c] / mask.height, cx = sx[c] / count[c] / mask.width;
    const char* vert = cy < 1.0 / 3.0 ? "top" : (cy < 2.0 / 3.0 ? "middle" : "bottom");
    const char* horiz = cx < 1.0 / 3.0 ? "left" : (cx < 2.0 / 3.0 ? "center" : "right");
    os << " The " << class_set[c] << " covers " << percent_text(count[c] / labeled)
       << " percent of the image and is located in the " << vert << ' ' << horiz
       << " part of the scene.";
  }
  for (const auto& [a, b] : adjacent_pairs(mask, k))
    os << " A " << class_set[a] << " is next to " << class_set[b] << '.';
  return os.str();
}

std::vector<std::string> mentioned_classes(const std::string& text,
                                           const std::vector<std::string>& class_set) {
  std::string lower(text.size(), ' ');
  std::transform(text.begin(), text.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  auto is_word = [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_';
  };
  std::vector<std::string> out;
  for (const auto& name : class_set) {
    std::string needle(name.size(), ' ');
    std::transform(name.begin(), name.end(), needle.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    bool found = false;
    for (std::size_t pos = lower.find(needle); pos != std::string::npos && !found;
         pos = lower.find(needle, pos + 1)) {
      if (pos > 0 && is_word(lower[pos - 1])) continue;
      std::size_t end = pos + needle.size();
      if (end < lower.size() && is_word(lower[end])) {
        if (lower.compare(end, 2, "es") == 0 && (end + 2 == lower.size() || !is_word(lower[end + 2])))
          found = true;
        else if (lower[end] == 's' && (end + 1 == lower.size() || !is_word(lower[end + 1])))
          found = true;
        continue;
      }
      found = true;
    }
    if (found) out.push_back(name);
  }
  return out;
}

Dataset build_dataset(const SceneSpec& spec, int n_source, int n_target,
                      const std::vector<NamedShift>& shifts, std::uint64_t seed) {
  if (n_source < 1 || n_target < 1)
    throw InvalidArgument("build_dataset: n_source and n_target must be >= 1");
  if (shifts.empty()) throw InvalidArgument("build_dataset: at least one target shift required");
  spec.validate();
  for (const auto& s : shifts) s.shift.validate();

  Dataset ds;
  ds.class_set = spec.class_set;
  ds.spec_hash = spec_hash(spec);
  SceneSpec scene = spec;
  for (int i = 0; i < n_source; ++i) {
    scene.seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(i));
    GeneratedScene g = generate_scene(scene, Domain::kSource, DomainShift{});
    char id[32];
    std::snprintf(id, sizeof(id), "s%04d", i);
    g.sample.id = id;
    ds.source.push_back(std::move(g.sample));
  }
  for (int i = 0; i < n_target; ++i) {
    const NamedShift& cond = shifts[static_cast<std::size_t>(i) % shifts.size()];
    scene.seed = mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1);
    GeneratedScene g = generate_scene(scene, Domain::kTarget, cond.shift);
    char id[32];
    std::snprintf(id, sizeof(id), "t%04d", i);
    g.sample.id = id;
    g.sample.group = cond.name;
    ds.eval.masks.emplace(g.sample.id, std::move(g.ground_truth));
    ds.target.push_back(std::move(g.sample));
  }
  return ds;
}

Dataset build_dataset(const SceneSpec& spec, int n_source, int n_target, const DomainShift& shift,
                      std::uint64_t seed) {
  return build_dataset(spec, n_source, n_target, {NamedShift{"target", shift}}, seed);
}

std::string spec_hash(const SceneSpec& spec) {
  nlohmann::json j = spec;
  return sha256_hex(j.dump());
}

void to_json(nlohmann::json& j, const LayoutRule& r) {
  j = nlohmann::json{{"kind", kind_name(r.kind)}, {"class", r.cls}};
  if (r.probability != 1.0) j["probability"] = r.probability;
  switch (r.kind) {
    case RuleKind::kFill:
      break;
    case RuleKind::kBand:
      j["top"] = r.top;
      j["bottom"] = r.bottom;
      j["jitter"] = r.jitter;
      break;
    case RuleKind::kBandAbove:
      j["anchor"] = r.anchor;
      j["height"] = r.height;
      j["jitter"] = r.jitter;
      break;
    case RuleKind::kBlobOn:
      j["anchor"] = r.anchor;
      j["count"] = {r.count_min, r.count_max};
      j["blob_width"] = {r.blob_w_min, r.blob_w_max};
      j["blob_height"] = {r.blob_h_min, r.blob_h_max};
      break;
  }
}

void from_json(const nlohmann::json& j, LayoutRule& r) {
  detail::require_known_keys(j,
                             {"kind", "class", "probability", "top", "bottom", "jitter", "anchor",
                              "height", "count", "blob_width", "blob_height"},
                             "layout rule");
  r = LayoutRule{};
  r.kind = kind_from_name(j.at("kind").get<std::string>());
  r.cls = j.at("class").get<std::string>();
  detail::read_opt(j, "probability", r.probability);
  detail::read_opt(j, "top", r.top);
  detail::read_opt(j, "bottom", r.bottom);
  detail::read_opt(j, "jitter", r.jitter);
  detail::read_opt(j, "anchor", r.anchor);
  detail::read_opt(j, "height", r.height);
  auto read_range = [&](const char* key, int& lo, int& hi) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_array() || it->size() != 2)
        throw InvalidArgument(std::string("layout rule: ") + key + " must be [min, max]");
      lo = (*it)[0].get<int>();
      hi = (*it)[1].get<int>();
    }
  };
  read_range("count", r.count_min, r.count_max);
  read_range("blob_width", r.blob_w_min, r.blob_w_max);
  read_range("blob_height", r.blob_h_min, r.blob_h_max);
}

void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"height", s.height},
                     {"width", s.width},
                     {"class_set", s.class_set},
                     {"layout_rules", s.layout_rules},
                     {"seed", s.seed},
                     {"color_jitter", s.color_jitter}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
  detail::require_known_keys(
      j, {"height", "width", "class_set", "layout_rules", "seed", "color_jitter"}, "scene spec");
  s = SceneSpec{};
  detail::read_opt(j, "height", s.height);
  detail::read_opt(j, "width", s.width);
  s.class_set = j.at("class_set").get<std::vector<std::string>>();
  detail::read_opt(j, "layout_rules", s.layout_rules);
  detail::read_opt(j, "seed", s.seed);
  detail::read_opt(j, "color_jitter", s.color_jitter);
}

void to_json(nlohmann::json& j, const DomainShift& s) {
  j = nlohmann::json{{"hue_shift", s.hue_shift},
                     {"brightness_scale", s.brightness_scale},
                     {"noise_sigma", s.noise_sigma},
                     {"texture_freq", s.texture_freq},
                     {"texture_amplitude", s.texture_amplitude}};
}

void from_json(const nlohmann::json& j, DomainShift& s) {
  detail::require_known_keys(
      j, {"hue_shift", "brightness_scale", "noise_sigma", "texture_freq", "texture_amplitude"},
      "domain shift");
  s = DomainShift{};
  detail::read_opt(j, "hue_shift", s.hue_shift);
  detail::read_opt(j, "brightness_scale", s.brightness_scale);
  detail::read_opt(j, "noise_sigma", s.noise_sigma);
  detail::read_opt(j, "texture_freq", s.texture_freq);
  detail::read_opt(j, "texture_amplitude", s.texture_amplitude);
}

SceneSpec default_street_spec(int height, int width) {
  SceneSpec spec;
  spec.height = height;
  spec.width = width;
  spec.class_set = {"road", "sidewalk", "building", "vegetation", "sky", "person"};
  LayoutRule building = LayoutRule::band_above("building", "sidewalk", 0.28, 0.08);
  building.probability = 0.8;
  spec.layout_rules = {
      LayoutRule::fill("sky"),
      LayoutRule::band("road", 0.62, 1.0, 0.06),
      LayoutRule::band_above("sidewalk", "road", 0.14, 0.03),
      building,
      LayoutRule::blob_on("vegetation", "sidewalk", 0, 2, {3, 6}, {6, 12}),
      LayoutRule::blob_on("person", "sidewalk", 0, 3, {2, 3}, {4, 7}),
  };
  return spec;
}

}  // namespace langda
