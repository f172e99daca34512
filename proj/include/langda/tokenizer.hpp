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

#ifndef LANGDA_TOKENIZER_HPP_
#define LANGDA_TOKENIZER_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace langda {

// A token and the byte span [begin, end) of the source text it covers.
struct TokenSpan {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  virtual std::string id() const = 0;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
  // Tokens added around every non-empty text (start/end markers).
  virtual std::size_t special_tokens() const { return 0; }

  std::size_t count(std::string_view text) const;
  // Longest prefix of `text` whose count is <= max_tokens, cut at a token end.
  std::string truncate(std::string_view text, std::size_t max_tokens) const;
};

class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::string id() const override { return "whitespace"; }
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
};

// Byte-pair encoder with CLIP-style pre-tokenization (lowercase, word /
// digit / punctuation splitting, "</w>" end-of-word marker). Counts include
// the start and end markers, so the 77 budget matches a CLIP context.
class BpeTokenizer final : public Tokenizer {
 public:
  using Merge = std::pair<std::string, std::string>;

  explicit BpeTokenizer(std::vector<Merge> merges);

  // Merges learned from the built-in street-scene lexicon.
  static std::shared_ptr<const BpeTokenizer> builtin();
  // CLIP merges file: a header line followed by "left right" pairs.
  static std::shared_ptr<const BpeTokenizer> from_merges_file(const std::filesystem::path& path,
                                                              std::size_t max_merges = 0);
  // Greedy most-frequent-pair training until every corpus word is one symbol.
  static std::vector<Merge> learn_merges(const std::vector<std::string>& corpus);

  std::string id() const override { return "bpe"; }
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
  std::size_t special_tokens() const override { return 2; }
  std::size_t merge_count() const { return ranks_.size(); }

  // Subword pieces of one lowercase word, end marker included on the last piece.
  std::vector<std::string> encode_word(const std::string& word) const;

 private:
  std::map<Merge, std::size_t> ranks_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, std::vector<std::string>> cache_;
};

// CLIP-style pre-tokenization into lowercase pieces with byte spans.
std::vector<TokenSpan> pretokenize(std::string_view text);

// "whitespace" or "bpe".
std::shared_ptr<const Tokenizer> make_tokenizer(const std::string& name);

}  // namespace langda

#endif  // LANGDA_TOKENIZER_HPP_
