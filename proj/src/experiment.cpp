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

#include "langda/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "json_util.hpp"
#include "langda/dataset_io.hpp"
#include "langda/plotting.hpp"

namespace langda {
namespace {

using nlohmann::json;

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& context) {
  try {
    detail::read_opt(j, key, out);
  } catch (const json::exception&) {
    throw InvalidArgument(context + ": key \"" + key + "\" has the wrong type");
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << std::endl;
}

json data_json(const DataSettings& d) {
  json shifts = json::array();
  for (const auto& s : d.shifts) shifts.push_back({{"name", s.name}, {"shift", s.shift}});
  json j = {{"n_source", d.n_source}, {"n_target", d.n_target}, {"seed", d.seed}, {"shifts", shifts}};
  if (d.manifest.empty()) j["scene"] = d.scene;
  else j["manifest"] = d.manifest;
  return j;
}

}  // namespace

bool DataSettings::operator==(const DataSettings& o) const { return data_json(*this) == data_json(o); }

bool ExperimentPreset::operator==(const ExperimentPreset& o) const {
  return json(*this) == json(o);
}

std::vector<Variant> expand_variants(const std::vector<std::string>& names, double lambda_p) {
  std::vector<Variant> out;
  auto add = [&](Variant v) {
    for (const auto& e : out)
      if (e.name == v.name) throw InvalidArgument("variants: duplicate '" + v.name + "'");
    out.push_back(std::move(v));
  };
  for (const std::string& n : names) {
    if (n == "no-lang") {
      add({n, 0.0, Alignment::kImage, false, "Vision-only (lambda_p=0)"});
    } else if (n == "langda") {
      add({n, lambda_p, Alignment::kImage, false, "Image-level, context captions"});
    } else if (n == "class-prompt") {
      add({n, lambda_p, Alignment::kImage, true, "Image-level, class prompts"});
    } else if (n == "pixel-align") {
      add({n, lambda_p, Alignment::kPixel, true, "Pixel-level, class prompts"});
    } else if (n == "lambda-sweep") {
      for (double l : kLambdaSweep)
        add({"lambda=" + format_double(l), l, Alignment::kImage, false,
             "Context captions, lambda_p=" + format_double(l)});
    } else if (n.starts_with("lambda=")) {
      double l;
      try {
        std::size_t used = 0;
        l = std::stod(n.substr(7), &used);
        if (used != n.size() - 7) throw std::invalid_argument(n);
      } catch (const std::exception&) {
        throw InvalidArgument("variants: bad lambda in '" + n + "'");
      }
      if (!(l >= 0)) throw InvalidArgument("variants: lambda must be >= 0 in '" + n + "'");
      add({n, l, Alignment::kImage, false, "Context captions, lambda_p=" + format_double(l)});
    } else {
      throw InvalidArgument("variants: unknown variant '" + n +
                            "' (expected no-lang, langda, class-prompt, pixel-align, "
                            "lambda-sweep or lambda=<v>)");
    }
  }
  return out;
}

void ExperimentPreset::validate() const {
  if (name.empty()) throw InvalidArgument("preset: empty name");
  if (seeds.empty()) throw InvalidArgument("preset: seed list must not be empty");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t k = i + 1; k < seeds.size(); ++k)
      if (seeds[i] == seeds[k]) throw InvalidArgument("preset: duplicate seed " + std::to_string(seeds[i]));
  if (data.manifest.empty()) {
    data.scene.validate();
    if (data.n_source < 1) throw InvalidArgument("preset: data.n_source must be >= 1");
    if (data.n_target < 1) throw InvalidArgument("preset: data.n_target must be >= 1");
    for (const auto& s : data.shifts) s.shift.validate();
    if (static_cast<int>(data.scene.class_set.size()) != network.num_classes)
      throw InvalidArgument("preset: network.num_classes " + std::to_string(network.num_classes) +
                            " differs from the scene's " + std::to_string(data.scene.class_set.size()) +
                            " classes");
  } else if (!std::filesystem::exists(data.manifest)) {
    throw InvalidArgument("preset: manifest '" + data.manifest + "' does not exist");
  }
  if (captions.refine_attempts < 1) throw InvalidArgument("preset: captions.refine_attempts must be >= 1");
  if (captions.workers < 1) throw InvalidArgument("preset: captions.workers must be >= 1");
  if (embedding.dim < 1) throw InvalidArgument("preset: embedding.dim must be >= 1");
  network.validate();
  if (network.embed_dim != embedding.dim)
    throw InvalidArgument("preset: network.embed_dim " + std::to_string(network.embed_dim) +
                          " differs from embedding.dim " + std::to_string(embedding.dim));
  train.validate();
  const auto vs = expand_variants(variants, train.lambda_p);
  if (vs.empty()) throw InvalidArgument("preset: no variants");
  if (!baseline.empty() && std::none_of(vs.begin(), vs.end(), [&](const Variant& v) { return v.name == baseline; }))
    throw InvalidArgument("preset: baseline '" + baseline + "' is not among the variants");
}

void to_json(json& j, const ExperimentPreset& p) {
  j = {{"name", p.name},
       {"data", data_json(p.data)},
       {"captions",
        {{"provider", to_string(p.captions.provider)},
         {"refine_attempts", p.captions.refine_attempts},
         {"workers", p.captions.workers}}},
       {"embedding", {{"backend", p.embedding.backend}, {"dim", p.embedding.dim}}},
       {"network", p.network},
       {"train", p.train},
       {"variants", p.variants},
       {"baseline", p.baseline},
       {"seeds", p.seeds}};
}

void from_json(const json& j, ExperimentPreset& p) {
  detail::require_known_keys(j, {"name", "data", "captions", "embedding", "network", "train", "variants", "baseline", "seeds"}, "preset");
  p = ExperimentPreset{};
  read_key(j, "name", p.name, "preset");
  if (auto it = j.find("data"); it != j.end()) {
    const json& d = *it;
    detail::require_known_keys(d, {"scene", "manifest", "n_source", "n_target", "seed", "shifts"}, "data");
    if (d.contains("scene") && d.contains("manifest"))
      throw InvalidArgument("data: \"scene\" and \"manifest\" are mutually exclusive");
    if (auto s = d.find("scene"); s != d.end()) p.data.scene = s->get<SceneSpec>();
    read_key(d, "manifest", p.data.manifest, "data");
    read_key(d, "n_source", p.data.n_source, "data");
    read_key(d, "n_target", p.data.n_target, "data");
    read_key(d, "seed", p.data.seed, "data");
    if (auto s = d.find("shifts"); s != d.end()) {
      if (!s->is_array()) throw InvalidArgument("data: \"shifts\" must be an array");
      for (const json& e : *s) {
        detail::require_known_keys(e, {"name", "shift"}, "data.shifts");
        NamedShift ns;
        read_key(e, "name", ns.name, "data.shifts");
        if (ns.name.empty()) throw InvalidArgument("data.shifts: every shift needs a name");
        if (auto sh = e.find("shift"); sh != e.end()) ns.shift = sh->get<DomainShift>();
        p.data.shifts.push_back(ns);
      }
    }
  }
  if (auto it = j.find("captions"); it != j.end()) {
    detail::require_known_keys(*it, {"provider", "refine_attempts", "workers"}, "captions");
    std::string provider = to_string(p.captions.provider);
    read_key(*it, "provider", provider, "captions");
    p.captions.provider = caption_provider_from_string(provider);
    read_key(*it, "refine_attempts", p.captions.refine_attempts, "captions");
    read_key(*it, "workers", p.captions.workers, "captions");
  }
  if (auto it = j.find("embedding"); it != j.end()) {
    detail::require_known_keys(*it, {"backend", "dim"}, "embedding");
    read_key(*it, "backend", p.embedding.backend, "embedding");
    read_key(*it, "dim", p.embedding.dim, "embedding");
  }
  if (auto it = j.find("network"); it != j.end()) p.network = it->get<NetworkConfig>();
  if (auto it = j.find("train"); it != j.end()) p.train = it->get<TrainConfig>();
  read_key(j, "variants", p.variants, "preset");
  read_key(j, "baseline", p.baseline, "preset");
  read_key(j, "seeds", p.seeds, "preset");
  p.validate();
}

ExperimentPreset load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(detail::read_file(path.string()));
  } catch (const json::parse_error& e) {
    throw FormatError("config '" + path.string() + "': " + e.what());
  }
  try {
    return j.get<ExperimentPreset>();
  } catch (const json::exception& e) {
    throw InvalidArgument("config '" + path.string() + "': " + e.what());
  }
}

void save_config(const std::filesystem::path& path, const ExperimentPreset& preset) {
  detail::write_file(path.string(), json(preset).dump(2) + "\n");
}

std::vector<std::string> builtin_preset_names() { return {"default", "smoke", "lambda-sweep"}; }

ExperimentPreset builtin_preset(const std::string& name) {
  ExperimentPreset p;
  p.name = name;
  p.data.seed = 7;
  p.data.shifts = {{"shifted", DomainShift{60.0, 0.65, 0.08, 0.5, 0.2}}};
  p.train.lr_encoder = 6e-4;
  p.train.lr_decoder = 6e-3;
  p.train.warmup_steps = 100;
  p.train.alpha = 0.99;
  if (name == "default") {
    p.variants = {"no-lang", "langda", "class-prompt", "pixel-align"};
    p.seeds = {0, 1, 2, 3, 4};
    p.train.total_steps = 2000;
  } else if (name == "lambda-sweep") {
    p.variants = {"lambda-sweep"};
    p.baseline = "lambda=0";
    p.seeds = {0, 1, 2};
    p.train.total_steps = 2000;
  } else if (name == "smoke") {
    p.data.n_source = 16;
    p.data.n_target = 16;
    p.train.total_steps = 20;
    p.train.warmup_steps = 5;
    p.train.checkpoint_every = 10;
    p.train.eval_every = 10;
    p.seeds = {0};
  } else {
    throw InvalidArgument("unknown preset '" + name + "'");
  }
  p.validate();
  return p;
}

ExperimentPreset resolve_preset(const std::string& name_or_path) {
  if (std::filesystem::exists(name_or_path)) return load_config(name_or_path);
  const auto names = builtin_preset_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end())
    return builtin_preset(name_or_path);
  throw InvalidArgument("preset '" + name_or_path + "' is neither a file nor a built-in preset");
}

ExperimentError::ExperimentError(std::string stage, std::optional<std::uint64_t> seed,
                                 const std::string& what)
    : Error("[" + stage + (seed ? " seed=" + std::to_string(*seed) : std::string()) + "] " + what),
      stage_(std::move(stage)),
      seed_(seed) {}

std::string class_prompt(const std::string& class_name) { return "a photo of a " + class_name; }

std::string class_prompt_caption(const std::vector<std::string>& class_names) {
  std::string out;
  for (const auto& n : class_names) {
    if (!out.empty()) out += ' ';
    out += class_prompt(n) + '.';
  }
  return out;
}

namespace {

std::vector<CaptionRecord> caption_split(const ExperimentPreset& preset, const Dataset& d,
                                         const std::vector<SegSample>& samples, bool target,
                                         std::shared_ptr<const Tokenizer> tokenizer,
                                         const ExperimentOptions& options,
                                         CaptionPipelineStats& stats) {
  std::shared_ptr<VlmClient> vlm;
  std::shared_ptr<LlmClient> llm;
  if (preset.captions.provider == CaptionProvider::kVlmLlm) {
    vlm = std::make_shared<HttpChatClient>(EndpointConfig::from_env("LANGDA_VLM"));
    llm = std::make_shared<HttpChatClient>(EndpointConfig::from_env("LANGDA_LLM"));
  } else {
    if (target) {
      vlm = std::make_shared<PaletteMockVlm>(d.class_set);
    } else {
      std::map<std::string, LabelMap> masks;
      for (const auto& s : samples) masks.emplace(s.id, *s.mask);
      vlm = std::make_shared<TemplateMockVlm>(d.class_set, std::move(masks));
    }
    llm = std::make_shared<GroundedMockLlm>(d.class_set);
  }
  CaptionPipelineOptions o;
  o.refine_attempts = preset.captions.refine_attempts;
  o.workers = preset.captions.workers;
  o.target_mode = target;
  o.provider = preset.captions.provider;
  o.clock = options.clock;
  CaptionPipeline pipeline(vlm, llm, std::move(tokenizer), o);
  std::vector<CaptionRecord> records = pipeline.generate_all(samples, d.class_set);
  pipeline.refine_all(records);
  const CaptionPipelineStats s = pipeline.stats();
  stats.vlm_calls += s.vlm_calls;
  stats.llm_calls += s.llm_calls;
  stats.cache_hits += s.cache_hits;
  stats.truncations += s.truncations;
  return records;
}

}  // namespace

PreparedData prepare_data(const ExperimentPreset& preset, const ExperimentOptions& options) {
  PreparedData out;
  const auto& dir = options.out_dir;
  const auto variants = expand_variants(preset.variants, preset.train.lambda_p);
  const bool need_target = preset.train.caption_mode != CaptionMode::kSourceOnly &&
                           std::any_of(variants.begin(), variants.end(),
                                       [](const Variant& v) { return v.lambda_p > 0; });
  try {
    std::filesystem::create_directories(dir);
    if (preset.data.manifest.empty()) {
      out.dataset = preset.data.shifts.empty()
                        ? build_dataset(preset.data.scene, preset.data.n_source, preset.data.n_target,
                                        DomainShift{}, preset.data.seed)
                        : build_dataset(preset.data.scene, preset.data.n_source, preset.data.n_target,
                                        preset.data.shifts, preset.data.seed);
      export_dataset(out.dataset, dir / "data");
    } else {
      out.dataset = load_dataset(preset.data.manifest);
    }
    log_line(options.log, "data: " + std::to_string(out.dataset.source.size()) + " source, " +
                              std::to_string(out.dataset.target.size()) + " target");
  } catch (const std::exception& e) {
    throw ExperimentError("data", std::nullopt, e.what());
  }

  try {
    auto tok = BpeTokenizer::builtin();
    out.source_captions = caption_split(preset, out.dataset, out.dataset.source, false, tok, options, out.caption_stats);
    caption_bank_store(dir / "captions_source.jsonl", out.source_captions);
    if (need_target) {
      out.target_captions = caption_split(preset, out.dataset, out.dataset.target, true, tok, options, out.caption_stats);
      caption_bank_store(dir / "captions_target.jsonl", out.target_captions);
    }
    log_line(options.log, "captions: " + std::to_string(out.source_captions.size()) + " source, " +
                              std::to_string(out.target_captions.size()) + " target, " +
                              std::to_string(out.caption_stats.truncations) + " truncated");
  } catch (const std::exception& e) {
    throw ExperimentError("captions", std::nullopt, e.what());
  }

  try {
    auto encoder = make_text_encoder(preset.embedding.backend, preset.embedding.dim);
    if (encoder->dimension() != preset.network.embed_dim)
      throw InvalidArgument("encoder dimension " + std::to_string(encoder->dimension()) +
                            " differs from network.embed_dim");
    out.source_bank = embed_captions(out.source_captions, *encoder);
    bank_store(dir / "embeddings_source.ldeb", out.source_bank);
    if (need_target) {
      out.target_bank = embed_captions(out.target_captions, *encoder);
      bank_store(dir / "embeddings_target.ldeb", out.target_bank);
    }
    out.class_prompt_bank = EmbeddingBank(encoder->id(), encoder->dimension());
    for (const SegSample& s : out.dataset.source)
      out.class_prompt_bank.insert(
          s.id, encoder->encode(class_prompt_caption(class_names_from_mask(*s.mask, out.dataset.class_set))));
    bank_store(dir / "embeddings_class_prompt.ldeb", out.class_prompt_bank);
    out.class_bank = EmbeddingBank(encoder->id(), encoder->dimension());
    for (const std::string& c : out.dataset.class_set) out.class_bank.insert(c, encoder->encode(class_prompt(c)));
    bank_store(dir / "embeddings_classes.ldeb", out.class_bank);
    log_line(options.log, "embed: backend " + encoder->id());
  } catch (const std::exception& e) {
    throw ExperimentError("embed", std::nullopt, e.what());
  }
  return out;
}

GroupedReport evaluate_model(const SegNetwork<float>& net, const Vector<float>& params,
                             const Dataset& dataset) {
  const int k = net.config().num_classes;
  const int ignore = static_cast<int>(dataset.class_set.size());
  std::vector<ConfusionMatrix> cms;
  std::vector<std::string> groups, order;
  for (const SegSample& t : dataset.target) {
    auto it = dataset.eval.masks.find(t.id);
    if (it == dataset.eval.masks.end()) throw InvalidArgument("evaluate: no ground truth for '" + t.id + "'");
    LabelMap pred = predict_labels(net.forward(params, t.image).logits);
    if (pred.height != it->second.height || pred.width != it->second.width)
      pred = resize_nearest(pred, it->second.height, it->second.width);
    ConfusionMatrix cm(k);
    cm.accumulate(pred, it->second, ignore);
    cms.push_back(std::move(cm));
    const std::string g = t.group.empty() ? "target" : t.group;
    groups.push_back(g);
    if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
  }
  return grouped_report(cms, groups, order);
}

std::pair<double, double> lp_window_means(const std::vector<MetricRow>& rows, double fraction) {
  if (rows.empty()) throw InvalidArgument("lp_window_means: empty history");
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(rows.size() * fraction)));
  double first = 0, last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    first += rows[i].l_p;
    last += rows[rows.size() - n + i].l_p;
  }
  return {first / n, last / n};
}

SeedResult run_variant(const ExperimentPreset& preset, const Variant& variant, std::uint64_t seed,
                       const PreparedData& data, const std::filesystem::path& run_dir,
                       std::ostream* log) {
  TrainConfig cfg = preset.train;
  cfg.seed = seed;
  cfg.lambda_p = variant.lambda_p;
  cfg.alignment = variant.alignment;
  std::filesystem::create_directories(run_dir);
  const json snapshot = {{"preset", preset}, {"variant", variant.name}, {"seed", seed}, {"train", cfg}, {"network", preset.network}};
  detail::write_file((run_dir / "config.json").string(), snapshot.dump(2) + "\n");

  TrainData td;
  td.dataset = &data.dataset;
  td.source_bank = variant.class_prompt_captions ? &data.class_prompt_bank : &data.source_bank;
  td.target_bank = &data.target_bank;
  if (variant.alignment == Alignment::kPixel)
    for (const std::string& c : data.dataset.class_set) td.class_embeddings.push_back(data.class_bank.at(c).values);

  Trainer<float> trainer(cfg, preset.network, td);
  std::string miou_csv = "step,miou\n";
  const int log_every = std::max(1, cfg.total_steps / 10);
  trainer.run([&](const Trainer<float>& t) {
    const int s = t.steps_done();
    if (cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0 && s != cfg.total_steps) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.ldck", s);
      save_checkpoint((run_dir / name).string(), make_checkpoint(t.network(), t.models(), {{"step", s}}));
    }
    if (cfg.eval_every > 0 && s % cfg.eval_every == 0) {
      char row[64];
      std::snprintf(row, sizeof row, "%d,%.17g\n", s, evaluate_model(t.network(), t.models().student, data.dataset).all.miou);
      miou_csv += row;
    }
    if (log && s % log_every == 0) {
      const MetricRow& r = t.history().back();
      char line[160];
      std::snprintf(line, sizeof line, "  %s seed %llu step %d: L_S %.4f L_T %.4f L_p %.4f q %.3f",
                    variant.name.c_str(), static_cast<unsigned long long>(seed), s, r.l_s, r.l_t, r.l_p, r.q_mean);
      log_line(log, line);
    }
  });
  detail::write_file((run_dir / "metrics.csv").string(), metrics_csv(trainer.history()));
  if (cfg.eval_every > 0) detail::write_file((run_dir / "miou_history.csv").string(), miou_csv);
  save_checkpoint((run_dir / "checkpoint.ldck").string(),
                  make_checkpoint(trainer.network(), trainer.models(), {{"step", trainer.steps_done()}}));

  const GroupedReport report = evaluate_model(trainer.network(), trainer.models().student, data.dataset);
  detail::write_file((run_dir / "eval.json").string(), report_json(report, data.dataset.class_set).dump(2) + "\n");
  detail::write_file((run_dir / "eval.txt").string(), report_table(report, data.dataset.class_set));

  SeedResult r;
  r.seed = seed;
  r.miou = report.all.miou;
  r.run_dir = run_dir;
  if (!trainer.history().empty()) std::tie(r.lp_first, r.lp_last) = lp_window_means(trainer.history());
  return r;
}

json ExperimentSummary::to_json() const {
  json vs = json::array();
  for (const auto& v : variants) {
    json runs = json::array();
    for (const auto& r : v.runs)
      runs.push_back({{"seed", r.seed}, {"miou", r.miou}, {"lp_first", r.lp_first}, {"lp_last", r.lp_last}});
    vs.push_back({{"name", v.variant.name},
                  {"label", v.variant.label},
                  {"lambda_p", v.variant.lambda_p},
                  {"alignment", langda::to_string(v.variant.alignment)},
                  {"captions", v.variant.class_prompt_captions ? "class_prompts" : "context"},
                  {"runs", runs},
                  {"miou_mean", v.mean},
                  {"miou_std", v.stddev}});
  }
  json cs = json::array();
  for (const auto& c : comparisons)
    cs.push_back({{"baseline", c.baseline}, {"treatment", c.treatment}, {"deltas", c.deltas}, {"mean_delta", c.mean_delta}});
  return {{"preset", preset}, {"variants", vs}, {"comparisons", cs}};
}

std::string ExperimentSummary::table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-34s %-10s %-10s %17s %10s\n", "Method", "Alignment", "Captions",
                "mIoU (mean+-std)", "delta");
  out += buf;
  for (const auto& v : variants) {
    std::string delta = "-";
    for (const auto& c : comparisons)
      if (c.treatment == v.variant.name) {
        std::snprintf(buf, sizeof buf, "%+.1f", c.mean_delta);
        delta = buf;
      }
    const char* align = v.variant.lambda_p > 0 ? langda::to_string(v.variant.alignment) : "-";
    const char* caps = v.variant.lambda_p > 0 ? (v.variant.class_prompt_captions ? "class" : "context") : "-";
    std::snprintf(buf, sizeof buf, "%-34s %-10s %-10s %10.1f +- %4.1f %10s\n", v.variant.label.c_str(),
                  align, caps, v.mean, v.stddev, delta.c_str());
    out += buf;
  }
  return out;
}

ExperimentSummary run_experiment(const ExperimentPreset& preset, const ExperimentOptions& options) {
  try {
    preset.validate();
  } catch (const std::exception& e) {
    throw ExperimentError("config", std::nullopt, e.what());
  }
  const auto variants = expand_variants(preset.variants, preset.train.lambda_p);
  std::filesystem::create_directories(options.out_dir);
  save_config(options.out_dir / "preset.json", preset);
  const PreparedData data = prepare_data(preset, options);

  ExperimentSummary summary;
  summary.preset = preset.name;
  for (const Variant& v : variants) {
    VariantSummary vs;
    vs.variant = v;
    for (std::uint64_t seed : preset.seeds) {
      const auto run_dir = options.out_dir / v.name / ("seed" + std::to_string(seed));
      try {
        vs.runs.push_back(run_variant(preset, v, seed, data, run_dir, options.log));
      } catch (const ExperimentError&) {
        throw;
      } catch (const std::exception& e) {
        throw ExperimentError("train", seed, v.name + ": " + e.what());
      }
      log_line(options.log, v.name + " seed " + std::to_string(seed) + ": mIoU " +
                                format_double(vs.runs.back().miou));
    }
    double sum = 0;
    for (const auto& r : vs.runs) sum += r.miou;
    vs.mean = sum / static_cast<double>(vs.runs.size());
    double ss = 0;
    for (const auto& r : vs.runs) ss += (r.miou - vs.mean) * (r.miou - vs.mean);
    vs.stddev = vs.runs.size() > 1 ? std::sqrt(ss / static_cast<double>(vs.runs.size() - 1)) : 0.0;
    summary.variants.push_back(std::move(vs));
  }

  const VariantSummary* base = nullptr;
  for (const auto& v : summary.variants)
    if (v.variant.name == preset.baseline) base = &v;
  if (base) {
    for (const auto& v : summary.variants) {
      if (&v == base) continue;
      PairedComparison c{base->variant.name, v.variant.name, {}, 0};
      for (std::size_t i = 0; i < v.runs.size(); ++i) c.deltas.push_back(v.runs[i].miou - base->runs[i].miou);
      c.mean_delta = std::accumulate(c.deltas.begin(), c.deltas.end(), 0.0) / static_cast<double>(c.deltas.size());
      summary.comparisons.push_back(std::move(c));
    }
  }
  try {
    detail::write_file((options.out_dir / "summary.json").string(), summary.to_json().dump(2) + "\n");
    detail::write_file((options.out_dir / "summary.txt").string(), summary.table());
  } catch (const std::exception& e) {
    throw ExperimentError("report", std::nullopt, e.what());
  }
  return summary;
}

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& run_dir,
                                              const std::filesystem::path& caption_bank) {
  const auto metrics_path = run_dir / "metrics.csv";
  if (!std::filesystem::exists(metrics_path))
    throw InvalidArgument("plot: no metric history at '" + metrics_path.string() + "'");
  const std::vector<MetricRow> rows = parse_metrics_csv(detail::read_file(metrics_path.string()));
  if (rows.empty()) throw InvalidArgument("plot: metric history is empty");
  const auto dir = run_dir / "plots";
  std::vector<std::filesystem::path> files;

  Series ls{"L_S", {}, {}}, lt{"L_T", {}, {}}, lp{"L_p", {}, {}}, q{"q_T_mean", {}, {}};
  for (const MetricRow& r : rows) {
    for (Series* s : {&ls, &lt, &lp, &q}) s->x.push_back(r.step);
    ls.y.push_back(r.l_s);
    lt.y.push_back(r.l_t);
    lp.y.push_back(r.l_p);
    q.y.push_back(r.q_mean);
  }
  auto f = write_line_chart(dir / "loss_curves", "loss components per step", {ls, lt, lp});
  files.insert(files.end(), {f.image, f.sidecar});
  f = write_line_chart(dir / "quality", "mean pseudo-label quality per step", {q});
  files.insert(files.end(), {f.image, f.sidecar});

  const auto miou_path = run_dir / "miou_history.csv";
  if (std::filesystem::exists(miou_path)) {
    std::istringstream in(detail::read_file(miou_path.string()));
    std::string line;
    Series m{"target mIoU", {}, {}};
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      int step;
      double v;
      if (std::sscanf(line.c_str(), "%d,%lf", &step, &v) != 2) throw FormatError("plot: malformed mIoU row '" + line + "'");
      m.x.push_back(step);
      m.y.push_back(v);
    }
    if (!m.x.empty()) {
      f = write_line_chart(dir / "miou_curve", "target mIoU per step", {m});
      files.insert(files.end(), {f.image, f.sidecar});
    }
  }

  if (!caption_bank.empty()) {
    const auto bank = caption_bank_load(caption_bank);
    if (bank.empty()) throw InvalidArgument("plot: caption bank '" + caption_bank.string() + "' is empty");
    const CaptionStats st = caption_stats(bank);
    f = write_histogram(dir / "token_histogram", "caption token counts, raw vs refined", kHistogramBinWidth,
                        {{"raw", {st.histogram_raw.begin(), st.histogram_raw.end()}},
                         {"refined", {st.histogram_refined.begin(), st.histogram_refined.end()}}},
                        static_cast<double>(kCaptionTokenBudget));
    files.insert(files.end(), {f.image, f.sidecar});
  }
  return files;
}

}  // namespace langda
