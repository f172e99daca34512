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

#ifndef LANGDA_CAPTION_PIPELINE_HPP_
#define LANGDA_CAPTION_PIPELINE_HPP_

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "langda/core.hpp"
#include "langda/scene_synth.hpp"
#include "langda/tokenizer.hpp"

namespace langda {

inline constexpr std::size_t kCaptionTokenBudget = 77;

enum class CaptionProvider { kVlmLlm, kTemplateMock };
std::string to_string(CaptionProvider p);
CaptionProvider caption_provider_from_string(const std::string& s);

struct CaptionRecord {
  std::string image_id;
  std::vector<std::string> class_names;
  std::string raw_caption;
  std::size_t raw_tokens = 0;
  std::string refined_caption;
  std::size_t refined_tokens = 0;
  CaptionProvider provider = CaptionProvider::kTemplateMock;
  std::string created_at;  // ISO-8601 UTC
  bool truncated = false;

  bool operator==(const CaptionRecord&) const = default;
};

// A prompt with `{CLASS_NAMES}` / `{VLM_CAPTION}` placeholders.
struct PromptTemplate {
  std::string system_text;
  std::string user_text;

  // Substitutes in a single pass; throws if a placeholder is left unbound.
  std::string render(const std::map<std::string, std::string>& bindings) const;
};

PromptTemplate vlm_prompt_template();
PromptTemplate vlm_target_prompt_template();
PromptTemplate llm_prompt_template();
PromptTemplate llm_target_prompt_template();

inline constexpr const char* kBrevityReminder =
    "Your previous answer was too long; use fewer than 70 tokens.";

// ['road', 'car']
std::string format_class_list(const std::vector<std::string>& class_names);

std::string make_vlm_prompt(const std::vector<std::string>& class_names);
// Target-caption mode: the query carries no class names.
std::string make_vlm_target_prompt();
// An empty class list selects the target-mode template without the class sentence.
std::pair<std::string, std::string> make_llm_prompt(const std::vector<std::string>& class_names,
                                                    const std::string& vlm_caption);

class TransportError : public Error {
 public:
  using Error::Error;
};

class CaptionError : public Error {
 public:
  CaptionError(const std::string& image_id, const std::string& what)
      : Error("caption for '" + image_id + "': " + what), image_id_(image_id) {}
  const std::string& image_id() const { return image_id_; }

 private:
  std::string image_id_;
};

class VlmClient {
 public:
  virtual ~VlmClient() = default;
  virtual std::string provider_id() const = 0;
  // Throws TransportError on a retryable failure.
  virtual std::string describe(const std::string& image_id, const Image& image,
                               const std::string& prompt) = 0;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string provider_id() const = 0;
  virtual std::string complete(const std::string& system, const std::string& user) = 0;
};

// Chat-completion endpoint settings, usually read from the environment.
struct EndpointConfig {
  std::string url;  // http://host:port/path
  std::string model;
  std::string token;
  std::uint64_t seed = 0;
  int timeout_seconds = 120;

  // <PREFIX>_ENDPOINT, <PREFIX>_MODEL, <PREFIX>_TOKEN, <PREFIX>_SEED.
  static EndpointConfig from_env(const std::string& prefix);
};

// POST {model, messages:[{role, content}], temperature: 0, seed[, images]} -> {text}.
class HttpChatClient final : public VlmClient, public LlmClient {
 public:
  explicit HttpChatClient(EndpointConfig config);
  std::string provider_id() const override;
  std::string describe(const std::string& image_id, const Image& image,
                       const std::string& prompt) override;
  std::string complete(const std::string& system, const std::string& user) override;

 private:
  std::string post(const std::string& body);
  EndpointConfig config_;
};

// Captions source scenes from their ground-truth masks via template_caption.
class TemplateMockVlm final : public VlmClient {
 public:
  TemplateMockVlm(std::vector<std::string> class_set, std::map<std::string, LabelMap> masks);
  std::string provider_id() const override { return "template-mock-vlm"; }
  std::string describe(const std::string& image_id, const Image& image,
                       const std::string& prompt) override;

 private:
  std::vector<std::string> class_set_;
  std::map<std::string, LabelMap> masks_;
};

// Looks only at pixels: labels each pixel with the nearest class base color
// and captions the estimate. Used for target captions, where no mask exists.
class PaletteMockVlm final : public VlmClient {
 public:
  explicit PaletteMockVlm(std::vector<std::string> class_set);
  std::string provider_id() const override { return "palette-mock-vlm"; }
  std::string describe(const std::string& image_id, const Image& image,
                       const std::string& prompt) override;
  LabelMap estimate_mask(const Image& image) const;

 private:
  std::vector<std::string> class_set_;
};

// Condenses a caption using only class names from the prompt's class list
// (or, when the prompt has none, from its own class vocabulary). Obeys the
// "less than N" / "fewer than N" word budget stated in the prompt.
class GroundedMockLlm final : public LlmClient {
 public:
  explicit GroundedMockLlm(std::vector<std::string> vocabulary);
  std::string provider_id() const override { return "grounded-mock-llm"; }
  std::string complete(const std::string& system, const std::string& user) override;

 private:
  std::vector<std::string> vocabulary_;
};

// Response cache keyed by SHA-256 of (image_id, rendered prompt, provider id).
class CaptionCache {
 public:
  struct Entry {
    std::string text;
    std::string created_at;
  };

  static std::string key(const std::string& image_id, const std::string& prompt,
                         const std::string& provider_id);
  std::optional<Entry> find(const std::string& key);
  void insert(const std::string& key, Entry entry);
  std::size_t hits() const { return hits_; }
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
  std::size_t hits_ = 0;
};

struct CaptionPipelineOptions {
  int transport_attempts = 3;  // per client call, including the first
  int refine_attempts = 3;     // R
  std::size_t token_budget = kCaptionTokenBudget;
  int workers = 1;
  bool target_mode = false;  // omit class names from both prompts
  CaptionProvider provider = CaptionProvider::kTemplateMock;
  std::function<std::string()> clock;  // defaults to the system clock
};

struct CaptionPipelineStats {
  std::size_t vlm_calls = 0;      // client invocations, retries included
  std::size_t llm_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t truncations = 0;
};

// Clients must tolerate concurrent calls when workers > 1.
class CaptionPipeline {
 public:
  CaptionPipeline(std::shared_ptr<VlmClient> vlm, std::shared_ptr<LlmClient> llm,
                  std::shared_ptr<const Tokenizer> tokenizer, CaptionPipelineOptions options = {});

  std::string generate_caption(const std::string& image_id, const Image& image,
                               const std::vector<std::string>& class_names);
  // Fills refined_caption / refined_tokens / truncated.
  std::string refine_caption(CaptionRecord& record);
  CaptionRecord caption(const std::string& image_id, const Image& image,
                        const std::vector<std::string>& class_names);

  // Raw captions for every sample with bounded parallelism; output order
  // follows the input. Class names come from each sample's mask unless
  // target mode is on.
  std::vector<CaptionRecord> generate_all(const std::vector<SegSample>& samples,
                                          const std::vector<std::string>& class_set);
  void refine_all(std::vector<CaptionRecord>& records);

  CaptionPipelineStats stats() const;
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  const CaptionCache& cache() const { return cache_; }

 private:
  std::string now() const;

  std::shared_ptr<VlmClient> vlm_;
  std::shared_ptr<LlmClient> llm_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  CaptionPipelineOptions options_;
  CaptionCache cache_;
  std::atomic<std::size_t> vlm_calls_{0};
  std::atomic<std::size_t> llm_calls_{0};
  std::atomic<std::size_t> truncations_{0};
};

// Class names of the mask's unique ids, sorted by id.
std::vector<std::string> class_names_from_mask(const LabelMap& mask,
                                               const std::vector<std::string>& class_set);

// JSONL caption bank, one record per line, sorted by image_id.
void caption_bank_store(const std::filesystem::path& path, std::vector<CaptionRecord> records);
std::vector<CaptionRecord> caption_bank_load(const std::filesystem::path& path);

inline constexpr int kHistogramBinWidth = 10;
inline constexpr int kHistogramBins = 30;  // 0..300; larger counts land in the last bin

struct CaptionStats {
  double mean_raw_tokens = 0.0;
  double mean_refined_tokens = 0.0;
  std::array<std::size_t, kHistogramBins> histogram_raw{};
  std::array<std::size_t, kHistogramBins> histogram_refined{};
  std::size_t records = 0;
};

CaptionStats caption_stats(const std::vector<CaptionRecord>& bank);

std::string iso8601_now();

}  // namespace langda

#endif  // LANGDA_CAPTION_PIPELINE_HPP_
