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

// Experiment presets and the end-to-end pipeline: scenes, captions,
// embeddings, training per variant and seed, evaluation and the paired
// comparison report.

#ifndef LANGDA_EXPERIMENT_HPP_
#define LANGDA_EXPERIMENT_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "langda/caption_pipeline.hpp"
#include "langda/eval_metrics.hpp"
#include "langda/scene_synth.hpp"
#include "langda/seg_network.hpp"
#include "langda/text_embedding.hpp"
#include "langda/uda_engine.hpp"

namespace langda {

struct DataSettings {
  SceneSpec scene = default_street_spec();
  std::string manifest;  // when set, the dataset is loaded instead of generated
  int n_source = 200;
  int n_target = 200;
  std::uint64_t seed = 0;
  std::vector<NamedShift> shifts;
  bool operator==(const DataSettings&) const;
};

struct CaptionSettings {
  CaptionProvider provider = CaptionProvider::kTemplateMock;
  int refine_attempts = 3;
  int workers = 1;
  bool operator==(const CaptionSettings&) const = default;
};

struct EmbeddingSettings {
  std::string backend = "hash";  // see make_text_encoder
  int dim = kDefaultEmbeddingDim;
  bool operator==(const EmbeddingSettings&) const = default;
};

// no-lang, langda, class-prompt, pixel-align, lambda=<v>; "lambda-sweep"
// expands to the five lambda values.
struct Variant {
  std::string name;
  double lambda_p = 0;
  Alignment alignment = Alignment::kImage;
  bool class_prompt_captions = false;
  std::string label;  // row title in the comparison table
};

std::vector<Variant> expand_variants(const std::vector<std::string>& names, double lambda_p);
inline const std::vector<double> kLambdaSweep = {2.0, 1.0, 0.1, 0.01, 0.0};

struct ExperimentPreset {
  std::string name = "default";
  DataSettings data;
  CaptionSettings captions;
  EmbeddingSettings embedding;
  NetworkConfig network;
  TrainConfig train;
  std::vector<std::string> variants = {"no-lang", "langda"};
  std::string baseline = "no-lang";
  std::vector<std::uint64_t> seeds = {0};

  void validate() const;
  bool operator==(const ExperimentPreset&) const;
};

void to_json(nlohmann::json& j, const ExperimentPreset& p);
// Strict: unknown keys anywhere are rejected; absent keys take defaults.
void from_json(const nlohmann::json& j, ExperimentPreset& p);

// Reads and validates a preset/config file.
ExperimentPreset load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentPreset& preset);

// Built-in presets: "default" (the desk-scale benchmark) and "smoke".
std::vector<std::string> builtin_preset_names();
ExperimentPreset builtin_preset(const std::string& name);
// A path to a JSON file, or a built-in name.
ExperimentPreset resolve_preset(const std::string& name_or_path);

class ExperimentError : public Error {
 public:
  ExperimentError(std::string stage, std::optional<std::uint64_t> seed, const std::string& what);
  const std::string& stage() const { return stage_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

 private:
  std::string stage_;
  std::optional<std::uint64_t> seed_;
};

// Caption prompts for the class-prompt and pixel-alignment ablations.
std::string class_prompt(const std::string& class_name);
std::string class_prompt_caption(const std::vector<std::string>& class_names);

struct PreparedData {
  Dataset dataset;
  std::vector<CaptionRecord> source_captions;
  std::vector<CaptionRecord> target_captions;
  EmbeddingBank source_bank;
  EmbeddingBank target_bank;
  EmbeddingBank class_prompt_bank;  // per source image
  EmbeddingBank class_bank;         // per class name
  CaptionPipelineStats caption_stats;
};

struct ExperimentOptions {
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
  std::function<std::string()> clock;  // caption timestamps; system clock when empty
};

// Dataset, captions and embeddings shared by every run of a preset.
PreparedData prepare_data(const ExperimentPreset& preset, const ExperimentOptions& options);

// Student predictions on the target split against the held-out masks.
GroupedReport evaluate_model(const SegNetwork<float>& net, const Vector<float>& params,
                             const Dataset& dataset);

struct SeedResult {
  std::uint64_t seed = 0;
  double miou = 0;
  double lp_first = 0;  // mean L_p over the first 10% of steps
  double lp_last = 0;   // and over the last 10%
  std::filesystem::path run_dir;
};

// Trains and evaluates one variant for one seed inside run_dir.
SeedResult run_variant(const ExperimentPreset& preset, const Variant& variant, std::uint64_t seed,
                       const PreparedData& data, const std::filesystem::path& run_dir,
                       std::ostream* log = nullptr);

struct VariantSummary {
  Variant variant;
  std::vector<SeedResult> runs;
  double mean = 0;
  double stddev = 0;  // sample standard deviation
};

struct PairedComparison {
  std::string baseline;
  std::string treatment;
  std::vector<double> deltas;  // treatment - baseline, per seed
  double mean_delta = 0;
};

struct ExperimentSummary {
  std::string preset;
  std::vector<VariantSummary> variants;
  std::vector<PairedComparison> comparisons;
  nlohmann::json to_json() const;
  std::string table() const;
};

ExperimentSummary run_experiment(const ExperimentPreset& preset, const ExperimentOptions& options);

// Mean over the first / last `fraction` of rows (at least one row each).
std::pair<double, double> lp_window_means(const std::vector<MetricRow>& rows, double fraction = 0.1);

// Loss curves, the mIoU curve (when logged) and, given a caption bank, the
// raw/refined token histograms. Returns the files written.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& run_dir,
                                              const std::filesystem::path& caption_bank = {});

}  // namespace langda

#endif  // LANGDA_EXPERIMENT_HPP_
