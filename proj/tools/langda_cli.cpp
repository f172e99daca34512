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

// Command-line front end: scene, captions, embed, train, eval, plot and
// experiment subcommands.

#include <filesystem>
#include <iostream>
#include <fstream>
#include <memory>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "langda/caption_pipeline.hpp"
#include "langda/dataset_io.hpp"
#include "langda/eval_metrics.hpp"
#include "langda/experiment.hpp"
#include "langda/plotting.hpp"
#include "langda/seg_network.hpp"
#include "langda/text_embedding.hpp"
#include "langda/uda_engine.hpp"

namespace fs = std::filesystem;
using namespace langda;

namespace {

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
void stage(const std::string& name, F&& f) {
  try {
    f();
  } catch (const ExperimentError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

ExperimentPreset preset_or_default(const std::string& spec) {
  return spec.empty() ? builtin_preset("default") : resolve_preset(spec);
}

std::unique_ptr<CaptionPipeline> make_pipeline(const Dataset& d, const std::string& provider,
                                               bool target, int workers, int refine_attempts) {
  std::shared_ptr<VlmClient> vlm;
  std::shared_ptr<LlmClient> llm;
  const CaptionProvider p = caption_provider_from_string(provider);
  if (p == CaptionProvider::kVlmLlm) {
    vlm = std::make_shared<HttpChatClient>(EndpointConfig::from_env("LANGDA_VLM"));
    llm = std::make_shared<HttpChatClient>(EndpointConfig::from_env("LANGDA_LLM"));
  } else {
    if (target) {
      vlm = std::make_shared<PaletteMockVlm>(d.class_set);
    } else {
      std::map<std::string, LabelMap> masks;
      for (const auto& s : d.source)
        if (s.mask) masks.emplace(s.id, *s.mask);
      vlm = std::make_shared<TemplateMockVlm>(d.class_set, std::move(masks));
    }
    llm = std::make_shared<GroundedMockLlm>(d.class_set);
  }
  CaptionPipelineOptions o;
  o.workers = workers;
  o.refine_attempts = refine_attempts;
  o.target_mode = target;
  o.provider = p;
  return std::make_unique<CaptionPipeline>(vlm, llm, BpeTokenizer::builtin(), o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LangDA desk-scale toolkit"};
  app.require_subcommand(1);

  // scene build
  auto* scene = app.add_subcommand("scene", "synthetic scene datasets");
  scene->require_subcommand(1);
  auto* scene_build = scene->add_subcommand("build", "generate and export a dataset");
  std::string scene_preset, scene_out;
  scene_build->add_option("--preset", scene_preset, "preset name or JSON file (default: default)");
  scene_build->add_option("--out", scene_out, "output directory")->required();

  // captions generate|refine|stats
  auto* captions = app.add_subcommand("captions", "caption banks");
  captions->require_subcommand(1);
  auto* cap_gen = captions->add_subcommand("generate", "raw captions for one split");
  std::string cap_data, cap_out, cap_split = "source", cap_provider = "template-mock";
  int cap_workers = 1, cap_attempts = 3;
  cap_gen->add_option("--data", cap_data, "dataset manifest")->required();
  cap_gen->add_option("--out", cap_out, "caption bank (JSONL)")->required();
  cap_gen->add_option("--split", cap_split, "source or target")->check(CLI::IsMember({"source", "target"}));
  cap_gen->add_option("--provider", cap_provider, "template-mock or vlm+llm");
  cap_gen->add_option("--workers", cap_workers, "parallel requests");
  auto* cap_ref = captions->add_subcommand("refine", "condense raw captions to the token budget");
  std::string ref_in, ref_out, ref_data;
  cap_ref->add_option("--data", ref_data, "dataset manifest (class vocabulary)")->required();
  cap_ref->add_option("--captions", ref_in, "caption bank to refine")->required();
  cap_ref->add_option("--out", ref_out, "refined bank (default: overwrite)");
  cap_ref->add_option("--provider", cap_provider, "template-mock or vlm+llm");
  cap_ref->add_option("--attempts", cap_attempts, "refinement attempts");
  cap_ref->add_option("--workers", cap_workers, "parallel requests");
  bool ref_target = false;
  cap_ref->add_flag("--target", ref_target, "captions describe target images (no class names)");
  auto* cap_stats = captions->add_subcommand("stats", "token statistics of a bank");
  std::string stats_in;
  cap_stats->add_option("--captions", stats_in, "caption bank")->required();

  // embed
  auto* embed = app.add_subcommand("embed", "encode refined captions");
  std::string emb_in, emb_out, emb_backend = "hash";
  int emb_dim = kDefaultEmbeddingDim;
  embed->add_option("--captions", emb_in, "caption bank")->required();
  embed->add_option("--out", emb_out, "embedding bank (.ldeb)")->required();
  embed->add_option("--backend", emb_backend, "hash | file:<path> | remote");
  embed->add_option("--dim", emb_dim, "embedding dimension");

  // train
  auto* train = app.add_subcommand("train", "train one run");
  std::string tr_config, tr_data, tr_captions, tr_embeddings, tr_out, tr_ablation = "none";
  std::uint64_t tr_seed = 0;
  bool tr_seed_set = false;
  train->add_option("--config", tr_config, "preset/config JSON (default: built-in default)");
  train->add_option("--data", tr_data, "dataset manifest")->required();
  train->add_option("--captions", tr_captions, "source caption bank")->required();
  train->add_option("--embeddings", tr_embeddings, "source embedding bank")->required();
  train->add_option("--out", tr_out, "run directory")->required();
  train->add_option("--ablation", tr_ablation, "none | no-lang | pixel-align | class-prompt | lambda-sweep")
      ->check(CLI::IsMember({"none", "no-lang", "pixel-align", "class-prompt", "lambda-sweep"}));
  train->add_option("--seed", tr_seed, "training seed (default: from config)")->each([&](const std::string&) { tr_seed_set = true; });

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the target split");
  std::string ev_ckpt, ev_data, ev_out;
  bool ev_teacher = false;
  eval->add_option("--checkpoint", ev_ckpt, "checkpoint (.ldck)")->required();
  eval->add_option("--data", ev_data, "dataset manifest")->required();
  eval->add_option("--out", ev_out, "report JSON");
  eval->add_flag("--teacher", ev_teacher, "evaluate the teacher instead of the student");

  // plot
  auto* plot = app.add_subcommand("plot", "charts for a run directory");
  std::string pl_run, pl_captions;
  plot->add_option("--run", pl_run, "run directory");
  plot->add_option("--captions", pl_captions, "caption bank for token histograms");

  // experiment run
  auto* experiment = app.add_subcommand("experiment", "multi-seed experiments");
  experiment->require_subcommand(1);
  auto* exp_run = experiment->add_subcommand("run", "run a preset end to end");
  std::string ex_preset, ex_out;
  bool ex_quiet = false;
  exp_run->add_option("preset", ex_preset, "preset name or JSON file")->required();
  exp_run->add_option("--out", ex_out, "output directory (default: runs/<preset>)");
  exp_run->add_flag("--quiet", ex_quiet, "no progress output");
  auto* exp_show = experiment->add_subcommand("show", "print a resolved preset as JSON");
  std::string ex_show;
  exp_show->add_option("preset", ex_show, "preset name or JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*scene_build) {
      stage("scene", [&] {
        const ExperimentPreset p = preset_or_default(scene_preset);
        const Dataset d = p.data.shifts.empty()
                              ? build_dataset(p.data.scene, p.data.n_source, p.data.n_target, DomainShift{}, p.data.seed)
                              : build_dataset(p.data.scene, p.data.n_source, p.data.n_target, p.data.shifts, p.data.seed);
        export_dataset(d, scene_out);
        std::cout << "wrote " << d.source.size() << " source and " << d.target.size() << " target scenes to "
                  << (fs::path(scene_out) / "manifest.json").string() << "\n";
      });
    } else if (*cap_gen) {
      stage("captions", [&] {
        const Dataset d = load_dataset(cap_data);
        const bool target = cap_split == "target";
        auto pipeline = make_pipeline(d, cap_provider, target, cap_workers, cap_attempts);
        auto records = pipeline->generate_all(target ? d.target : d.source, d.class_set);
        caption_bank_store(cap_out, records);
        const auto s = pipeline->stats();
        std::cout << "captioned " << records.size() << " images (" << s.vlm_calls << " calls, "
                  << s.cache_hits << " cache hits)\n";
      });
    } else if (*cap_ref) {
      stage("captions", [&] {
        const Dataset d = load_dataset(ref_data);
        auto records = caption_bank_load(ref_in);
        auto pipeline = make_pipeline(d, cap_provider, ref_target, cap_workers, cap_attempts);
        pipeline->refine_all(records);
        caption_bank_store(ref_out.empty() ? ref_in : ref_out, records);
        std::cout << "refined " << records.size() << " captions (" << pipeline->stats().truncations
                  << " truncated)\n";
      });
    } else if (*cap_stats) {
      stage("captions", [&] {
        const auto bank = caption_bank_load(stats_in);
        if (bank.empty()) throw InvalidArgument("caption bank is empty");
        const CaptionStats s = caption_stats(bank);
        nlohmann::json j = {{"records", s.records},
                            {"mean_raw_tokens", s.mean_raw_tokens},
                            {"mean_refined_tokens", s.mean_refined_tokens},
                            {"bin_width", kHistogramBinWidth},
                            {"histogram_raw", s.histogram_raw},
                            {"histogram_refined", s.histogram_refined}};
        std::cout << j.dump(2) << "\n";
      });
    } else if (*embed) {
      stage("embed", [&] {
        auto encoder = make_text_encoder(emb_backend, emb_dim);
        const auto records = caption_bank_load(emb_in);
        const EmbeddingBank bank = embed_captions(records, *encoder);
        bank_store(emb_out, bank);
        std::cout << "embedded " << bank.size() << " captions with " << encoder->id() << " ("
                  << bank_file_size(bank) << " bytes)\n";
      });
    } else if (*train) {
      stage("train", [&] {
        ExperimentPreset p = preset_or_default(tr_config);
        if (tr_seed_set) p.train.seed = tr_seed;
        PreparedData data;
        data.dataset = load_dataset(tr_data);
        const auto records = caption_bank_load(tr_captions);
        std::set<std::string> captioned;
        for (const auto& r : records) captioned.insert(r.image_id);
        for (const auto& s : data.dataset.source)
          if (!captioned.count(s.id)) throw InvalidArgument("no caption for source image '" + s.id + "'");
        data.source_bank = bank_load(tr_embeddings);
        auto encoder = make_text_encoder(p.embedding.backend, p.embedding.dim);
        if (encoder->id() != data.source_bank.backend_id())
          throw InvalidArgument("embedding bank backend '" + data.source_bank.backend_id() +
                                "' differs from the configured encoder '" + encoder->id() + "'");
        data.class_prompt_bank = EmbeddingBank(encoder->id(), encoder->dimension());
        data.class_bank = EmbeddingBank(encoder->id(), encoder->dimension());
        if (tr_ablation == "class-prompt")
          for (const auto& s : data.dataset.source)
            data.class_prompt_bank.insert(s.id, encoder->encode(class_prompt_caption(class_names_from_mask(*s.mask, data.dataset.class_set))));
        if (tr_ablation == "pixel-align")
          for (const auto& c : data.dataset.class_set) data.class_bank.insert(c, encoder->encode(class_prompt(c)));
        std::vector<std::string> names = {tr_ablation == "none" ? "langda" : tr_ablation};
        const auto variants = expand_variants(names, p.train.lambda_p);
        for (const Variant& v : variants) {
          const fs::path dir = variants.size() == 1 ? fs::path(tr_out) : fs::path(tr_out) / v.name;
          const SeedResult r = run_variant(p, v, p.train.seed, data, dir, &std::cout);
          std::cout << v.name << ": target mIoU " << r.miou << " (" << dir.string() << ")\n";
        }
      });
    } else if (*eval) {
      stage("eval", [&] {
        const Checkpoint ck = load_checkpoint(ev_ckpt);
        const Dataset d = load_dataset(ev_data);
        SegNetwork<float> net(ck.config);
        const GroupedReport r = evaluate_model(net, ev_teacher ? ck.teacher : ck.student, d);
        if (!ev_out.empty()) write_text(ev_out, report_json(r, d.class_set).dump(2) + "\n");
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << report_table(r, d.class_set);
      });
    } else if (*plot) {
      stage("plot", [&] {
        if (pl_run.empty() && pl_captions.empty()) throw InvalidArgument("give --run and/or --captions");
        std::vector<fs::path> files;
        if (!pl_run.empty()) {
          files = emit_plots(pl_run, pl_captions);
        } else {
          const auto bank = caption_bank_load(pl_captions);
          if (bank.empty()) throw InvalidArgument("caption bank '" + pl_captions + "' is empty");
          const CaptionStats st = caption_stats(bank);
          const fs::path stem = fs::path(pl_captions).parent_path() / "plots" / "token_histogram";
          const auto f = write_histogram(stem, "caption token counts, raw vs refined", kHistogramBinWidth,
                                         {{"raw", {st.histogram_raw.begin(), st.histogram_raw.end()}},
                                          {"refined", {st.histogram_refined.begin(), st.histogram_refined.end()}}},
                                         static_cast<double>(kCaptionTokenBudget));
          files = {f.image, f.sidecar};
        }
        for (const auto& f : files) std::cout << f.string() << "\n";
      });
    } else if (*exp_show) {
      stage("config", [&] {
        const nlohmann::json j = resolve_preset(ex_show);
        std::cout << j.dump(2) << "\n";
      });
    } else if (*exp_run) {
      ExperimentPreset p;
      stage("config", [&] { p = resolve_preset(ex_preset); });
      ExperimentOptions o;
      o.out_dir = ex_out.empty() ? fs::path("runs") / p.name : fs::path(ex_out);
      o.log = ex_quiet ? nullptr : &std::cerr;
      const ExperimentSummary s = run_experiment(p, o);
      std::cout << s.table();
      std::cout << "summary: " << (o.out_dir / "summary.json").string() << "\n";
    }
  } catch (const ExperimentError& e) {
    std::cerr << "error " << e.what() << "\n";
    return 1;
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "] " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [internal] " << e.what() << "\n";
    return 1;
  }
  return 0;
}
