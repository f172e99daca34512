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

#ifndef LANGDA_TEXT_EMBEDDING_HPP_
#define LANGDA_TEXT_EMBEDDING_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "langda/caption_pipeline.hpp"
#include "langda/core.hpp"
#include "langda/tokenizer.hpp"

namespace langda {

inline constexpr int kDefaultEmbeddingDim = 512;

struct EmbeddingVector {
  Eigen::VectorXf values;
  std::string backend_id;
  std::string caption_hash;  // SHA-256 of the encoded caption; not persisted in banks
};

class EmbeddingBank {
 public:
  EmbeddingBank() = default;
  EmbeddingBank(std::string backend_id, int dimension);

  const std::string& backend_id() const { return backend_id_; }
  int dimension() const { return dimension_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, EmbeddingVector>& entries() const { return entries_; }

  // Throws on dimension/backend mismatch or a duplicate id.
  void insert(const std::string& image_id, EmbeddingVector vector);
  const EmbeddingVector* find(const std::string& image_id) const;
  const EmbeddingVector& at(const std::string& image_id) const;

 private:
  std::string backend_id_;
  int dimension_ = 0;
  std::map<std::string, EmbeddingVector> entries_;
};

inline constexpr std::size_t kBankHeaderBytes = 64;
inline constexpr std::uint32_t kBankVersion = 1;

// Layout: "LDEB", version u32, C u32, count u64, backend id (40 bytes, NUL
// padded), 4 reserved bytes; then per row: id length u16, id bytes, C float32.
// All integers and floats little-endian.
void bank_store(const std::filesystem::path& path, const EmbeddingBank& bank);
EmbeddingBank bank_load(const std::filesystem::path& path);
std::uintmax_t bank_file_size(const EmbeddingBank& bank);

// A frozen text encoder. Nothing here exposes parameter mutation.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string id() const = 0;
  virtual int dimension() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual std::size_t token_limit() const { return kCaptionTokenBudget; }

  virtual EmbeddingVector encode(const std::string& caption) = 0;
  virtual std::vector<EmbeddingVector> encode_batch(const std::vector<std::string>& captions);

 protected:
  void check_limit(const std::string& caption) const;
};

// Sum of per-token seeded Gaussian vectors, L2-normalized. Tokens are the
// whitespace pieces, lowercased, with surrounding punctuation stripped.
class HashTextEncoder final : public TextEncoder {
 public:
  explicit HashTextEncoder(int dimension = kDefaultEmbeddingDim, std::uint64_t seed = 0);
  std::string id() const override;
  int dimension() const override { return dimension_; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  EmbeddingVector encode(const std::string& caption) override;

  static std::string normalize_token(const std::string& piece);
  Eigen::VectorXd token_vector(const std::string& token) const;

 private:
  int dimension_;
  std::uint64_t seed_;
  WhitespaceTokenizer tokenizer_;
};

// Serves vectors exported from an external encoder.
class FileTextEncoder final : public TextEncoder {
 public:
  explicit FileTextEncoder(EmbeddingBank bank);
  std::string id() const override { return bank_.backend_id(); }
  int dimension() const override { return bank_.dimension(); }
  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  // Looks the caption up by hash among entries that carry one.
  EmbeddingVector encode(const std::string& caption) override;
  EmbeddingVector encode_by_id(const std::string& image_id) const;
  const EmbeddingBank& bank() const { return bank_; }

 private:
  EmbeddingBank bank_;
  std::shared_ptr<const Tokenizer> tokenizer_;
};

// POST {texts: [...]} -> {vectors: [[...]]}; results are cached per caption.
class RemoteTextEncoder final : public TextEncoder {
 public:
  RemoteTextEncoder(std::string url, int dimension, std::string backend_id = "remote",
                    int batch_size = 16, int workers = 2);
  // LANGDA_EMBED_ENDPOINT, LANGDA_EMBED_DIM (default 512).
  static std::unique_ptr<RemoteTextEncoder> from_env();

  std::string id() const override { return backend_id_; }
  int dimension() const override { return dimension_; }
  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  EmbeddingVector encode(const std::string& caption) override;
  std::vector<EmbeddingVector> encode_batch(const std::vector<std::string>& captions) override;
  std::size_t requests() const { return requests_; }

 private:
  std::vector<Eigen::VectorXf> request(const std::vector<std::string>& texts);

  std::string url_;
  int dimension_;
  std::string backend_id_;
  int batch_size_;
  int workers_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::mutex mutex_;
  std::map<std::string, Eigen::VectorXf> cache_;
  std::size_t requests_ = 0;
};

// Encodes the refined caption of every record.
EmbeddingBank embed_captions(const std::vector<CaptionRecord>& records, TextEncoder& encoder);

// "hash" | "file:<path>" | "remote".
std::unique_ptr<TextEncoder> make_text_encoder(const std::string& spec,
                                               int dimension = kDefaultEmbeddingDim);

}  // namespace langda

#endif  // LANGDA_TEXT_EMBEDDING_HPP_
