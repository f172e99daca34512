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

#include "langda/caption_pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "json_util.hpp"
#include "langda/dataset_io.hpp"
#include "langda/hashing.hpp"

namespace langda {
namespace {

constexpr const char* kVlmQuery =
    "Describe the image in detail for semantic segmentation tasks. Be sure to include the class "
    "names {CLASS_NAMES} and their pixel locations.";
constexpr const char* kVlmTargetQuery =
    "Describe the image in detail for semantic segmentation tasks.";
constexpr const char* kLlmSystem =
    "You are a helpful assistant for refining and condensing detailed image caption descriptions "
    "for semantic segmentation.";
constexpr const char* kLlmQuery =
    "Shorten the description to less than 77 tokens. Do not use quotation marks or parentheses. "
    "Be sure to include the class name {CLASS_NAMES} and their pixel locations. The description "
    "is {VLM_CAPTION}";
constexpr const char* kLlmTargetQuery =
    "Shorten the description to less than 77 tokens. Do not use quotation marks or parentheses. "
    "The description is {VLM_CAPTION}";

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

// Words plus punctuation marks plus start/end markers; a rough token estimate.
std::size_t rough_tokens(const std::string& s) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : s) {
    if (std::isalnum(c)) {
      if (!in_word) ++n;
      in_word = true;
    } else {
      in_word = false;
      if (!std::isspace(c)) ++n;
    }
  }
  return n + 2;
}

}  // namespace

std::string to_string(CaptionProvider p) {
  return p == CaptionProvider::kVlmLlm ? "vlm+llm" : "template-mock";
}

CaptionProvider caption_provider_from_string(const std::string& s) {
  if (s == "vlm+llm") return CaptionProvider::kVlmLlm;
  if (s == "template-mock") return CaptionProvider::kTemplateMock;
  throw InvalidArgument("unknown caption provider '" + s + "'");
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
  std::string out;
  std::size_t i = 0;
  while (i < user_text.size()) {
    if (user_text[i] == '{') {
      const std::size_t close = user_text.find('}', i);
      if (close != std::string::npos) {
        const std::string name = user_text.substr(i + 1, close - i - 1);
        if (!name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
              return std::isupper(c) || c == '_';
            })) {
          auto it = bindings.find(name);
          if (it == bindings.end())
            throw InvalidArgument("prompt placeholder {" + name + "} is unbound");
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(user_text[i++]);
  }
  return out;
}

PromptTemplate vlm_prompt_template() { return {"", kVlmQuery}; }
PromptTemplate vlm_target_prompt_template() { return {"", kVlmTargetQuery}; }
PromptTemplate llm_prompt_template() { return {kLlmSystem, kLlmQuery}; }
PromptTemplate llm_target_prompt_template() { return {kLlmSystem, kLlmTargetQuery}; }

std::string format_class_list(const std::vector<std::string>& class_names) {
  std::string out = "[";
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (i) out += ", ";
    out += "'" + class_names[i] + "'";
  }
  return out + "]";
}

std::string make_vlm_prompt(const std::vector<std::string>& class_names) {
  if (class_names.empty()) throw InvalidArgument("make_vlm_prompt: class list is empty");
  return vlm_prompt_template().render({{"CLASS_NAMES", format_class_list(class_names)}});
}

std::string make_vlm_target_prompt() { return vlm_target_prompt_template().render({}); }

std::pair<std::string, std::string> make_llm_prompt(const std::vector<std::string>& class_names,
                                                    const std::string& vlm_caption) {
  if (is_blank(vlm_caption)) throw InvalidArgument("make_llm_prompt: caption is empty");
  if (class_names.empty()) {
    const PromptTemplate t = llm_target_prompt_template();
    return {t.system_text, t.render({{"VLM_CAPTION", vlm_caption}})};
  }
  const PromptTemplate t = llm_prompt_template();
  return {t.system_text, t.render({{"CLASS_NAMES", format_class_list(class_names)},
                                   {"VLM_CAPTION", vlm_caption}})};
}

EndpointConfig EndpointConfig::from_env(const std::string& prefix) {
  auto get = [&](const char* suffix) {
    const char* v = std::getenv((prefix + suffix).c_str());
    return v ? std::string(v) : std::string();
  };
  EndpointConfig c;
  c.url = get("_ENDPOINT");
  c.model = get("_MODEL");
  c.token = get("_TOKEN");
  if (const std::string seed = get("_SEED"); !seed.empty()) c.seed = std::stoull(seed);
  if (c.url.empty()) throw InvalidArgument(prefix + "_ENDPOINT is not set");
  return c;
}

HttpChatClient::HttpChatClient(EndpointConfig config) : config_(std::move(config)) {
  if (config_.url.rfind("http://", 0) != 0)
    throw InvalidArgument("chat endpoint must start with http://: " + config_.url);
}

std::string HttpChatClient::provider_id() const { return "http:" + config_.model; }

std::string HttpChatClient::post(const std::string& body) {
  const std::size_t path_at = config_.url.find('/', 7);
  const std::string base = config_.url.substr(0, path_at);
  const std::string path = path_at == std::string::npos ? "/" : config_.url.substr(path_at);
  httplib::Client client(base);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);
  auto res = client.Post(path, headers, body, "application/json");
  if (!res) throw TransportError("POST " + config_.url + ": " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw TransportError("POST " + config_.url + ": HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body).at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError("POST " + config_.url + ": malformed response: " + e.what());
  }
}

std::string HttpChatClient::describe(const std::string& image_id, const Image& image,
                                     const std::string& prompt) {
  (void)image_id;
  std::ostringstream ppm;
  ppm << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (Eigen::Index p = 0; p < image.pixels(); ++p)
    for (int c = 0; c < 3; ++c)
      ppm.put(static_cast<char>(static_cast<unsigned char>(
          std::lround(std::clamp(image.data(c, p), 0.0f, 1.0f) * 255.0f))));
  nlohmann::json req{{"model", config_.model},
                     {"messages", {{{"role", "user"}, {"content", prompt}}}},
                     {"temperature", 0},
                     {"seed", config_.seed},
                     {"images", {base64_encode(ppm.str())}}};
  return post(req.dump());
}

std::string HttpChatClient::complete(const std::string& system, const std::string& user) {
  nlohmann::json req{{"model", config_.model},
                     {"messages",
                      {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}}},
                     {"temperature", 0},
                     {"seed", config_.seed}};
  return post(req.dump());
}

TemplateMockVlm::TemplateMockVlm(std::vector<std::string> class_set,
                                 std::map<std::string, LabelMap> masks)
    : class_set_(std::move(class_set)), masks_(std::move(masks)) {}

std::string TemplateMockVlm::describe(const std::string& image_id, const Image& image,
                                      const std::string& prompt) {
  (void)image;
  (void)prompt;
  auto it = masks_.find(image_id);
  if (it == masks_.end()) throw CaptionError(image_id, "template mock has no mask for this image");
  return template_caption(it->second, class_set_);
}

PaletteMockVlm::PaletteMockVlm(std::vector<std::string> class_set)
    : class_set_(std::move(class_set)) {}

LabelMap PaletteMockVlm::estimate_mask(const Image& image) const {
  LabelMap mask(image.height, image.width);
  for (Eigen::Index p = 0; p < image.pixels(); ++p) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < static_cast<int>(class_set_.size()); ++c) {
      const auto col = class_color(c);
      double d = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double diff = image.data(ch, p) - col[static_cast<std::size_t>(ch)];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        mask.labels[p] = c;
      }
    }
  }
  return mask;
}

std::string PaletteMockVlm::describe(const std::string& image_id, const Image& image,
                                     const std::string& prompt) {
  (void)image_id;
  (void)prompt;
  return template_caption(estimate_mask(image), class_set_);
}

GroundedMockLlm::GroundedMockLlm(std::vector<std::string> vocabulary)
    : vocabulary_(std::move(vocabulary)) {}

std::string GroundedMockLlm::complete(const std::string& system, const std::string& user) {
  (void)system;
  std::size_t budget = std::numeric_limits<std::size_t>::max();
  static const std::regex kLimit(R"((?:less|fewer) than (\d+) tokens)");
  for (std::sregex_iterator it(user.begin(), user.end(), kLimit), end; it != end; ++it)
    budget = std::min<std::size_t>(budget, std::stoul((*it)[1].str()) - 1);

  std::vector<std::string> allowed = vocabulary_;
  static const std::regex kClassList(R"(class names? \[([^\]]*)\])");
  std::smatch m;
  if (std::regex_search(user, m, kClassList)) {
    allowed.clear();
    static const std::regex kQuoted(R"('([^']*)')");
    const std::string list = m[1].str();
    for (std::sregex_iterator it(list.begin(), list.end(), kQuoted), end; it != end; ++it)
      allowed.push_back((*it)[1].str());
  }
  const std::string marker = "The description is ";
  const std::size_t at = user.find(marker);
  const std::string caption = at == std::string::npos ? user : user.substr(at + marker.size());

  const std::vector<std::string> named = mentioned_classes(caption, allowed);
  std::vector<std::string> sentences;
  if (named.empty()) {
    sentences.push_back("The image shows a scene.");
  } else {
    std::string intro = "The image shows ";
    for (std::size_t i = 0; i < named.size(); ++i) {
      if (i) intro += i + 1 == named.size() ? " and " : ", ";
      intro += named[i];
    }
    sentences.push_back(intro + ".");
    for (const auto& name : named) {
      const std::regex loc("The " + name + R"( covers \d+ percent of the image and is located in the (\w+ \w+) part)");
      if (std::smatch lm; std::regex_search(caption, lm, loc))
        sentences.push_back(capitalize(name) + " is at the " + lm[1].str() + ".");
    }
    static const std::regex kAdj(R"(A ([\w ]+?) is next to ([\w ]+?)\.)");
    for (std::sregex_iterator it(caption.begin(), caption.end(), kAdj), end; it != end; ++it) {
      const std::string a = (*it)[1].str(), b = (*it)[2].str();
      if (std::find(allowed.begin(), allowed.end(), a) != allowed.end() &&
          std::find(allowed.begin(), allowed.end(), b) != allowed.end())
        sentences.push_back(capitalize(a) + " is next to " + b + ".");
    }
  }
  std::string out;
  for (const auto& s : sentences) {
    const std::string cand = out.empty() ? s : out + " " + s;
    if (rough_tokens(cand) > budget && !out.empty()) break;
    out = cand;
  }
  return out;
}

std::string CaptionCache::key(const std::string& image_id, const std::string& prompt,
                              const std::string& provider_id) {
  std::string material = image_id;
  material.push_back('\0');
  material += prompt;
  material.push_back('\0');
  material += provider_id;
  return sha256_hex(material);
}

std::optional<CaptionCache::Entry> CaptionCache::find(const std::string& key) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  ++hits_;
  return it->second;
}

void CaptionCache::insert(const std::string& key, Entry entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.emplace(key, std::move(entry));
}

std::size_t CaptionCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return entries_.size();
}

CaptionPipeline::CaptionPipeline(std::shared_ptr<VlmClient> vlm, std::shared_ptr<LlmClient> llm,
                                 std::shared_ptr<const Tokenizer> tokenizer,
                                 CaptionPipelineOptions options)
    : vlm_(std::move(vlm)),
      llm_(std::move(llm)),
      tokenizer_(std::move(tokenizer)),
      options_(std::move(options)) {
  if (!tokenizer_) throw InvalidArgument("caption pipeline: tokenizer required");
  if (options_.transport_attempts < 1 || options_.refine_attempts < 1)
    throw InvalidArgument("caption pipeline: attempt budgets must be >= 1");
  if (options_.workers < 1) throw InvalidArgument("caption pipeline: workers must be >= 1");
}

std::string CaptionPipeline::now() const {
  return options_.clock ? options_.clock() : iso8601_now();
}

std::string CaptionPipeline::generate_caption(const std::string& image_id, const Image& image,
                                              const std::vector<std::string>& class_names) {
  if (!vlm_) throw CaptionError(image_id, "no VLM client configured");
  const std::string prompt =
      options_.target_mode ? make_vlm_target_prompt() : make_vlm_prompt(class_names);
  const std::string key = CaptionCache::key(image_id, prompt, vlm_->provider_id());
  if (auto hit = cache_.find(key)) return hit->text;

  std::string text;
  std::string last_error;
  bool ok = false;
  for (int attempt = 0; attempt < options_.transport_attempts && !ok; ++attempt) {
    ++vlm_calls_;
    try {
      text = vlm_->describe(image_id, image, prompt);
      ok = true;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  if (!ok)
    throw CaptionError(image_id, "VLM transport failed after " +
                                     std::to_string(options_.transport_attempts) +
                                     " attempts: " + last_error);
  if (is_blank(text)) throw CaptionError(image_id, "VLM returned an empty caption");
  cache_.insert(key, {text, now()});
  return text;
}

std::string CaptionPipeline::refine_caption(CaptionRecord& record) {
  if (!llm_) throw CaptionError(record.image_id, "no LLM client configured");
  if (is_blank(record.raw_caption)) throw CaptionError(record.image_id, "raw caption is empty");
  const std::vector<std::string> names =
      options_.target_mode ? std::vector<std::string>{} : record.class_names;
  const auto [system, user] = make_llm_prompt(names, record.raw_caption);

  std::string text;
  bool fits = false;
  for (int attempt = 0; attempt < options_.refine_attempts && !fits; ++attempt) {
    const std::string query = attempt == 0 ? user : user + " " + kBrevityReminder;
    const std::string key =
        CaptionCache::key(record.image_id, system + "\n" + query, llm_->provider_id());
    if (auto hit = cache_.find(key)) {
      text = hit->text;
    } else {
      std::string last_error;
      bool ok = false;
      for (int t = 0; t < options_.transport_attempts && !ok; ++t) {
        ++llm_calls_;
        try {
          text = llm_->complete(system, query);
          ok = true;
        } catch (const TransportError& e) {
          last_error = e.what();
        }
      }
      if (!ok) throw CaptionError(record.image_id, "LLM transport failed: " + last_error);
      if (is_blank(text)) throw CaptionError(record.image_id, "LLM returned an empty caption");
      cache_.insert(key, {text, now()});
    }
    fits = tokenizer_->count(text) <= options_.token_budget;
  }
  record.truncated = !fits;
  if (!fits) {
    text = tokenizer_->truncate(text, options_.token_budget);
    ++truncations_;
  }
  record.refined_caption = text;
  record.refined_tokens = tokenizer_->count(text);
  return text;
}

CaptionRecord CaptionPipeline::caption(const std::string& image_id, const Image& image,
                                       const std::vector<std::string>& class_names) {
  CaptionRecord r;
  r.image_id = image_id;
  r.class_names = class_names;
  r.provider = options_.provider;
  r.raw_caption = generate_caption(image_id, image, class_names);
  r.raw_tokens = tokenizer_->count(r.raw_caption);
  const std::string prompt =
      options_.target_mode ? make_vlm_target_prompt() : make_vlm_prompt(class_names);
  if (auto hit = cache_.find(CaptionCache::key(image_id, prompt, vlm_->provider_id())))
    r.created_at = hit->created_at;
  return r;
}

std::vector<CaptionRecord> CaptionPipeline::generate_all(const std::vector<SegSample>& samples,
                                                         const std::vector<std::string>& class_set) {
  std::vector<CaptionRecord> out(samples.size());
  std::vector<std::exception_ptr> errors(samples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        const SegSample& s = samples[i];
        std::vector<std::string> names;
        if (!options_.target_mode) {
          if (!s.mask) throw CaptionError(s.id, "source captions need a ground-truth mask");
          names = class_names_from_mask(*s.mask, class_set);
        }
        out[i] = caption(s.id, s.image, names);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(options_.workers, static_cast<int>(samples.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void CaptionPipeline::refine_all(std::vector<CaptionRecord>& records) {
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        refine_caption(records[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_workers =
      std::max(1, std::min<int>(options_.workers, static_cast<int>(records.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

CaptionPipelineStats CaptionPipeline::stats() const {
  return {vlm_calls_.load(), llm_calls_.load(), cache_.hits(), truncations_.load()};
}

std::vector<std::string> class_names_from_mask(const LabelMap& mask,
                                               const std::vector<std::string>& class_set) {
  std::vector<std::string> names;
  for (int id : present_classes(mask, static_cast<int>(class_set.size())))
    names.push_back(class_set.at(static_cast<std::size_t>(id)));
  return names;
}

void caption_bank_store(const std::filesystem::path& path, std::vector<CaptionRecord> records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    nlohmann::json j{{"image_id", r.image_id},
                     {"class_names", r.class_names},
                     {"raw_caption", r.raw_caption},
                     {"raw_tokens", r.raw_tokens},
                     {"refined_caption", r.refined_caption},
                     {"refined_tokens", r.refined_tokens},
                     {"provider", to_string(r.provider)},
                     {"created_at", r.created_at},
                     {"truncated", r.truncated}};
    out << j.dump() << '\n';
  }
}

std::vector<CaptionRecord> caption_bank_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open caption bank " + path.string());
  std::vector<CaptionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      detail::require_known_keys(j,
                                 {"image_id", "class_names", "raw_caption", "raw_tokens",
                                  "refined_caption", "refined_tokens", "provider", "created_at",
                                  "truncated"},
                                 "caption record");
      CaptionRecord r;
      r.image_id = j.at("image_id").get<std::string>();
      r.class_names = j.at("class_names").get<std::vector<std::string>>();
      r.raw_caption = j.at("raw_caption").get<std::string>();
      r.raw_tokens = j.at("raw_tokens").get<std::size_t>();
      r.refined_caption = j.at("refined_caption").get<std::string>();
      r.refined_tokens = j.at("refined_tokens").get<std::size_t>();
      r.provider = caption_provider_from_string(j.at("provider").get<std::string>());
      r.created_at = j.at("created_at").get<std::string>();
      r.truncated = j.value("truncated", false);
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": " + e.what(), lineno);
    } catch (const InvalidArgument& e) {
      throw FormatError(path.string() + ": " + e.what(), lineno);
    }
  }
  return records;
}

CaptionStats caption_stats(const std::vector<CaptionRecord>& bank) {
  if (bank.empty()) throw InvalidArgument("caption_stats: bank is empty");
  CaptionStats s;
  s.records = bank.size();
  auto bin = [](std::size_t tokens) {
    return std::min<std::size_t>(tokens / kHistogramBinWidth, kHistogramBins - 1);
  };
  for (const auto& r : bank) {
    s.mean_raw_tokens += static_cast<double>(r.raw_tokens);
    s.mean_refined_tokens += static_cast<double>(r.refined_tokens);
    ++s.histogram_raw[bin(r.raw_tokens)];
    ++s.histogram_refined[bin(r.refined_tokens)];
  }
  s.mean_raw_tokens /= static_cast<double>(bank.size());
  s.mean_refined_tokens /= static_cast<double>(bank.size());
  return s;
}

std::string iso8601_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace langda
