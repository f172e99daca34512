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

#include "langda/text_embedding.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "langda/hashing.hpp"
#include "binary_io.hpp"

namespace langda {
namespace {

using detail::get_le;
using detail::put_le;

constexpr char kMagic[4] = {'L', 'D', 'E', 'B'};
constexpr std::size_t kBackendIdBytes = 40;

}  // namespace

EmbeddingBank::EmbeddingBank(std::string backend_id, int dimension)
    : backend_id_(std::move(backend_id)), dimension_(dimension) {
  if (dimension_ < 1) throw InvalidArgument("embedding bank: dimension must be >= 1");
  if (backend_id_.size() > kBackendIdBytes)
    throw InvalidArgument("embedding bank: backend id longer than 40 bytes");
}

void EmbeddingBank::insert(const std::string& image_id, EmbeddingVector vector) {
  if (vector.values.size() != dimension_)
    throw InvalidArgument("embedding bank: dimension mismatch for '" + image_id + "' (" +
                          std::to_string(vector.values.size()) + " != " +
                          std::to_string(dimension_) + ")");
  if (vector.backend_id != backend_id_)
    throw InvalidArgument("embedding bank: backend mismatch for '" + image_id + "'");
  if (image_id.size() > 0xffff) throw InvalidArgument("embedding bank: id too long");
  if (!entries_.emplace(image_id, std::move(vector)).second)
    throw InvalidArgument("embedding bank: duplicate id '" + image_id + "'");
}

const EmbeddingVector* EmbeddingBank::find(const std::string& image_id) const {
  auto it = entries_.find(image_id);
  return it == entries_.end() ? nullptr : &it->second;
}

const EmbeddingVector& EmbeddingBank::at(const std::string& image_id) const {
  if (const EmbeddingVector* v = find(image_id)) return *v;
  throw InvalidArgument("embedding bank: no embedding for image '" + image_id + "'");
}

void bank_store(const std::filesystem::path& path, const EmbeddingBank& bank) {
  std::string out;
  out.reserve(static_cast<std::size_t>(bank_file_size(bank)));
  out.append(kMagic, 4);
  put_le<std::uint32_t>(out, kBankVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bank.dimension()));
  put_le<std::uint64_t>(out, bank.size());
  std::string id = bank.backend_id();
  id.resize(kBackendIdBytes, '\0');
  out += id;
  put_le<std::uint32_t>(out, 0);
  for (const auto& [image_id, vec] : bank.entries()) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(image_id.size()));
    out += image_id;
    for (Eigen::Index i = 0; i < vec.values.size(); ++i) put_le<float>(out, vec.values[i]);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

EmbeddingBank bank_load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open embedding bank " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (data.size() < kBankHeaderBytes) throw FormatError("embedding bank: truncated header");
  if (std::memcmp(data.data(), kMagic, 4) != 0) throw FormatError("embedding bank: bad magic");
  const auto version = get_le<std::uint32_t>(data.data() + 4);
  if (version != kBankVersion)
    throw FormatError("embedding bank: unsupported version " + std::to_string(version));
  const auto dim = get_le<std::uint32_t>(data.data() + 8);
  const auto count = get_le<std::uint64_t>(data.data() + 12);
  std::string backend(data.data() + 20, kBackendIdBytes);
  backend.erase(std::find(backend.begin(), backend.end(), '\0'), backend.end());
  if (dim < 1) throw FormatError("embedding bank: zero dimension");

  EmbeddingBank bank(backend, static_cast<int>(dim));
  std::size_t pos = kBankHeaderBytes;
  const std::size_t row_floats = static_cast<std::size_t>(dim) * 4;
  for (std::uint64_t r = 0; r < count; ++r) {
    if (pos + 2 > data.size())
      throw FormatError("embedding bank: truncated at row " + std::to_string(r) + " of " +
                        std::to_string(count));
    const auto len = get_le<std::uint16_t>(data.data() + pos);
    pos += 2;
    if (pos + len + row_floats > data.size())
      throw FormatError("embedding bank: truncated at row " + std::to_string(r) + " of " +
                        std::to_string(count));
    std::string image_id(data.data() + pos, len);
    pos += len;
    EmbeddingVector v;
    v.backend_id = backend;
    v.values.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v.values[i] = get_le<float>(data.data() + pos + 4 * i);
    pos += row_floats;
    bank.insert(image_id, std::move(v));
  }
  if (pos != data.size()) throw FormatError("embedding bank: trailing bytes after last row");
  return bank;
}

std::uintmax_t bank_file_size(const EmbeddingBank& bank) {
  std::uintmax_t size = kBankHeaderBytes;
  for (const auto& [id, vec] : bank.entries())
    size += 2 + id.size() + static_cast<std::uintmax_t>(bank.dimension()) * 4;
  return size;
}

std::vector<EmbeddingVector> TextEncoder::encode_batch(const std::vector<std::string>& captions) {
  std::vector<EmbeddingVector> out;
  out.reserve(captions.size());
  for (const auto& c : captions) out.push_back(encode(c));
  return out;
}

void TextEncoder::check_limit(const std::string& caption) const {
  const std::size_t n = tokenizer().count(caption);
  if (n > token_limit())
    throw InvalidArgument("caption has " + std::to_string(n) + " tokens, encoder '" + id() +
                          "' accepts at most " + std::to_string(token_limit()));
}

HashTextEncoder::HashTextEncoder(int dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension_ < 1) throw InvalidArgument("hash encoder: dimension must be >= 1");
}

std::string HashTextEncoder::id() const {
  return "hash-" + std::to_string(dimension_) + "-" + std::to_string(seed_);
}

std::string HashTextEncoder::normalize_token(const std::string& piece) {
  std::size_t b = 0, e = piece.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(piece[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(piece[e - 1]))) --e;
  std::string out = piece.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Eigen::VectorXd HashTextEncoder::token_vector(const std::string& token) const {
  Rng rng(mix_seed(fnv1a64(token), seed_));
  Eigen::VectorXd v(dimension_);
  for (int i = 0; i < dimension_; ++i) v[i] = rng.normal();
  return v;
}

EmbeddingVector HashTextEncoder::encode(const std::string& caption) {
  check_limit(caption);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dimension_);
  bool any = false;
  for (const auto& span : tokenizer_.tokenize(caption)) {
    const std::string tok = normalize_token(span.text);
    if (tok.empty()) continue;
    sum += token_vector(tok);
    any = true;
  }
  const double norm = sum.norm();
  if (!any || !(norm > 0.0)) throw InvalidArgument("hash encoder: caption has no tokens");
  return {(sum / norm).cast<float>(), id(), sha256_hex(caption)};
}

FileTextEncoder::FileTextEncoder(EmbeddingBank bank)
    : bank_(std::move(bank)), tokenizer_(BpeTokenizer::builtin()) {}

EmbeddingVector FileTextEncoder::encode(const std::string& caption) {
  check_limit(caption);
  const std::string hash = sha256_hex(caption);
  for (const auto& [id, vec] : bank_.entries())
    if (vec.caption_hash == hash) return vec;
  throw InvalidArgument("file encoder: caption not present in bank '" + bank_.backend_id() +
                        "' (look up by image id instead)");
}

EmbeddingVector FileTextEncoder::encode_by_id(const std::string& image_id) const {
  return bank_.at(image_id);
}

RemoteTextEncoder::RemoteTextEncoder(std::string url, int dimension, std::string backend_id,
                                     int batch_size, int workers)
    : url_(std::move(url)),
      dimension_(dimension),
      backend_id_(std::move(backend_id)),
      batch_size_(std::max(1, batch_size)),
      workers_(std::max(1, workers)),
      tokenizer_(BpeTokenizer::builtin()) {
  if (url_.rfind("http://", 0) != 0)
    throw InvalidArgument("remote encoder endpoint must start with http://: " + url_);
}

std::unique_ptr<RemoteTextEncoder> RemoteTextEncoder::from_env() {
  const char* url = std::getenv("LANGDA_EMBED_ENDPOINT");
  if (!url) throw InvalidArgument("LANGDA_EMBED_ENDPOINT is not set");
  int dim = kDefaultEmbeddingDim;
  if (const char* d = std::getenv("LANGDA_EMBED_DIM")) dim = std::atoi(d);
  return std::make_unique<RemoteTextEncoder>(url, dim);
}

std::vector<Eigen::VectorXf> RemoteTextEncoder::request(const std::vector<std::string>& texts) {
  const std::size_t path_at = url_.find('/', 7);
  httplib::Client client(url_.substr(0, path_at));
  const std::string path = path_at == std::string::npos ? "/" : url_.substr(path_at);
  nlohmann::json body{{"texts", texts}};
  auto res = client.Post(path, body.dump(), "application/json");
  {
    std::lock_guard<std::mutex> lock(mutex_);
    ++requests_;
  }
  if (!res) throw InvalidArgument("remote encoder unavailable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw InvalidArgument("remote encoder: HTTP " + std::to_string(res->status));
  std::vector<Eigen::VectorXf> out;
  try {
    const auto j = nlohmann::json::parse(res->body);
    for (const auto& row : j.at("vectors")) {
      const auto vals = row.get<std::vector<float>>();
      if (static_cast<int>(vals.size()) != dimension_)
        throw InvalidArgument("remote encoder: returned dimension " + std::to_string(vals.size()) +
                              ", expected " + std::to_string(dimension_));
      out.emplace_back(Eigen::Map<const Eigen::VectorXf>(vals.data(), dimension_));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("remote encoder: malformed response: ") + e.what());
  }
  if (out.size() != texts.size()) throw InvalidArgument("remote encoder: vector count mismatch");
  return out;
}

EmbeddingVector RemoteTextEncoder::encode(const std::string& caption) {
  return encode_batch({caption}).front();
}

std::vector<EmbeddingVector> RemoteTextEncoder::encode_batch(
    const std::vector<std::string>& captions) {
  std::vector<std::string> missing;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& c : captions) {
      check_limit(c);
      if (!cache_.count(c) && std::find(missing.begin(), missing.end(), c) == missing.end())
        missing.push_back(c);
    }
  }
  std::vector<std::vector<std::string>> batches;
  for (std::size_t i = 0; i < missing.size(); i += static_cast<std::size_t>(batch_size_))
    batches.emplace_back(missing.begin() + static_cast<std::ptrdiff_t>(i),
                         missing.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(missing.size(), i + batch_size_)));
  std::vector<std::exception_ptr> errors(batches.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t b = next++; b < batches.size(); b = next++) {
      try {
        auto vecs = request(batches[b]);
        std::lock_guard<std::mutex> lock(mutex_);
        for (std::size_t i = 0; i < vecs.size(); ++i) cache_.emplace(batches[b][i], vecs[i]);
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(workers_, static_cast<int>(batches.size()));
  for (int w = 0; w < n; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<EmbeddingVector> out;
  std::lock_guard<std::mutex> lock(mutex_);
  for (const auto& c : captions) out.push_back({cache_.at(c), backend_id_, sha256_hex(c)});
  return out;
}

EmbeddingBank embed_captions(const std::vector<CaptionRecord>& records, TextEncoder& encoder) {
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) {
    if (r.refined_caption.empty())
      throw InvalidArgument("embed: record '" + r.image_id + "' has no refined caption");
    texts.push_back(r.refined_caption);
  }
  auto vectors = encoder.encode_batch(texts);
  EmbeddingBank bank(encoder.id(), encoder.dimension());
  for (std::size_t i = 0; i < records.size(); ++i)
    bank.insert(records[i].image_id, std::move(vectors[i]));
  return bank;
}

std::unique_ptr<TextEncoder> make_text_encoder(const std::string& spec, int dimension) {
  if (spec == "hash") return std::make_unique<HashTextEncoder>(dimension);
  if (spec.rfind("file:", 0) == 0)
    return std::make_unique<FileTextEncoder>(bank_load(spec.substr(5)));
  if (spec == "remote") return RemoteTextEncoder::from_env();
  throw InvalidArgument("unknown text encoder backend '" + spec + "' (expected hash|file:<path>|remote)");
}

}  // namespace langda
