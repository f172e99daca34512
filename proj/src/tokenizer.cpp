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

#include "langda/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "langda/core.hpp"

namespace langda {
namespace {

constexpr const char* kEndOfWord = "</w>";

// Street-scene caption lexicon the built-in merge table is learned from.
constexpr const char* kLexicon = R"(
the a an and or of in on at to for with by from is are was were be been has have had
this that these those there their its it as into onto over under above below near next
beside behind between across along around through while some several many few other
others another each every all both most more less than also only just very quite
image images scene scenes picture photo view shows show showing depicts depict depicted
contains contain containing includes include including features visible appears appear
busy city urban street streets road roads sidewalk sidewalks building buildings wall walls
fence fences pole poles traffic light lights sign signs vegetation tree trees terrain grass
sky person people persons pedestrian pedestrians rider riders car cars truck trucks bus
buses train trains motorcycle motorcycles bicycle bicycles bike bikes unlabeled background
foreground left right center centre middle top bottom upper lower side sides edge edges
part parts area areas region regions corner corners located location locations position
positions pixel pixels covers cover covering covered percent portion fraction half
filled fill scattered walking riding parked parking standing lined line lining far close
distance atmosphere lane lanes crossing intersection vehicle vehicles car's handbags
carrying present also blue red green gray grey white black yellow dark bright large small
tall short wide narrow long describe description detail details semantic segmentation
tasks task class classes name names sure their include shorten tokens token use fewer
previous answer too quotation marks parentheses helpful assistant refining condensing
detailed caption captions photo of
)";

bool is_letter(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < word.size(); ++i) symbols.emplace_back(1, word[i]);
  if (!symbols.empty()) symbols.back() += kEndOfWord;
  return symbols;
}

std::string strip_marker(const std::string& piece) {
  const std::string marker = kEndOfWord;
  if (piece.size() >= marker.size() &&
      piece.compare(piece.size() - marker.size(), marker.size(), marker) == 0)
    return piece.substr(0, piece.size() - marker.size());
  return piece;
}

}  // namespace

std::size_t Tokenizer::count(std::string_view text) const {
  const auto tokens = tokenize(text);
  return tokens.empty() ? 0 : tokens.size() + special_tokens();
}

std::string Tokenizer::truncate(std::string_view text, std::size_t max_tokens) const {
  const auto tokens = tokenize(text);
  if (tokens.empty() || tokens.size() + special_tokens() <= max_tokens) return std::string(text);
  if (max_tokens <= special_tokens()) return std::string();
  const std::size_t keep = max_tokens - special_tokens();
  return std::string(text.substr(0, tokens[keep - 1].end));
}

std::vector<TokenSpan> WhitespaceTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    out.push_back({std::string(text.substr(start, i - start)), start, i});
  }
  return out;
}

std::vector<TokenSpan> pretokenize(std::string_view text) {
  static const char* kContractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  auto lower = [&](std::size_t a, std::size_t b) {
    std::string s(text.substr(a, b - a));
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (c == '\'') {
      bool matched = false;
      for (const char* con : kContractions) {
        const std::string_view cv(con);
        if (text.size() - i >= cv.size()) {
          std::string cand = lower(i, i + cv.size());
          if (cand == cv) {
            i += cv.size();
            matched = true;
            break;
          }
        }
      }
      if (matched) {
        out.push_back({lower(start, i), start, i});
        continue;
      }
    }
    if (is_letter(c)) {
      while (i < text.size() && is_letter(static_cast<unsigned char>(text[i]))) ++i;
    } else if (std::isdigit(c)) {
      ++i;
    } else {
      while (i < text.size()) {
        const auto d = static_cast<unsigned char>(text[i]);
        if (std::isspace(d) || is_letter(d) || std::isdigit(d)) break;
        ++i;
      }
    }
    out.push_back({lower(start, i), start, i});
  }
  return out;
}

BpeTokenizer::BpeTokenizer(std::vector<Merge> merges) {
  for (std::size_t r = 0; r < merges.size(); ++r) ranks_.emplace(std::move(merges[r]), r);
}

std::vector<BpeTokenizer::Merge> BpeTokenizer::learn_merges(
    const std::vector<std::string>& corpus) {
  std::set<std::string> unique(corpus.begin(), corpus.end());
  std::vector<std::vector<std::string>> words;
  for (const auto& w : unique)
    if (!w.empty()) words.push_back(word_symbols(w));
  std::vector<Merge> merges;
  for (;;) {
    std::map<Merge, int> counts;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    if (counts.empty()) break;
    // Highest count wins; ties go to the lexicographically smallest pair.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    const Merge pick = best->first;
    merges.push_back(pick);
    for (auto& w : words) {
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == pick.first && w[i + 1] == pick.second) {
          merged.push_back(w[i] + w[i + 1]);
          ++i;
        } else {
          merged.push_back(w[i]);
        }
      }
      w = std::move(merged);
    }
  }
  return merges;
}

std::shared_ptr<const BpeTokenizer> BpeTokenizer::builtin() {
  static const std::shared_ptr<const BpeTokenizer> instance = [] {
    std::vector<std::string> corpus;
    for (const auto& span : pretokenize(kLexicon)) corpus.push_back(span.text);
    return std::make_shared<const BpeTokenizer>(learn_merges(corpus));
  }();
  return instance;
}

std::shared_ptr<const BpeTokenizer> BpeTokenizer::from_merges_file(
    const std::filesystem::path& path, std::size_t max_merges) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open merges file " + path.string());
  std::vector<Merge> merges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("#", 0) == 0) continue;
    if (line.empty()) continue;
    std::istringstream is(line);
    Merge m;
    if (!(is >> m.first >> m.second)) throw FormatError("malformed merge", lineno);
    merges.push_back(std::move(m));
    if (max_merges && merges.size() >= max_merges) break;
  }
  return std::make_shared<const BpeTokenizer>(std::move(merges));
}

std::vector<std::string> BpeTokenizer::encode_word(const std::string& word) const {
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (auto it = cache_.find(word); it != cache_.end()) return it->second;
  }
  std::vector<std::string> symbols = word_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = ranks_.size();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = ranks_.find({symbols[i], symbols[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank == ranks_.size()) break;
    const Merge m{symbols[best_pos], symbols[best_pos + 1]};
    std::vector<std::string> merged;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size() && symbols[i] == m.first && symbols[i + 1] == m.second) {
        merged.push_back(symbols[i] + symbols[i + 1]);
        ++i;
      } else {
        merged.push_back(symbols[i]);
      }
    }
    symbols = std::move(merged);
  }
  std::lock_guard<std::mutex> lock(cache_mutex_);
  cache_.emplace(word, symbols);
  return symbols;
}

std::vector<TokenSpan> BpeTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out;
  for (const auto& piece : pretokenize(text)) {
    std::size_t pos = piece.begin;
    for (const auto& sub : encode_word(piece.text)) {
      const std::size_t len = strip_marker(sub).size();
      out.push_back({sub, pos, pos + len});
      pos += len;
    }
  }
  return out;
}

std::shared_ptr<const Tokenizer> make_tokenizer(const std::string& name) {
  if (name == "whitespace") return std::make_shared<const WhitespaceTokenizer>();
  if (name == "bpe") return BpeTokenizer::builtin();
  throw InvalidArgument("unknown tokenizer '" + name + "' (expected whitespace|bpe)");
}

}  // namespace langda
