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

#include <cmath>
#include <cstring>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "langda/text_embedding.hpp"
#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

namespace langda {
namespace {

// Independent statement of the hash rule: a token seeds a 64-bit Mersenne
// Twister through FNV-1a and a SplitMix finalizer; coordinates are
// Box-Muller draws; the caption vector is the L2-normalized sum.
Eigen::VectorXd oracle_token_vector(const std::string& token, std::uint64_t seed, int dim) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = h + 0x9e3779b97f4a7c15ULL * (seed + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::mt19937_64 gen(z);
  auto unif = [&] { return std::ldexp(static_cast<double>(gen() >> 11), -53); };
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) {
    double u1 = unif();
    while (u1 <= 0.0) u1 = unif();
    const double u2 = unif();
    v[i] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  return v;
}

Eigen::VectorXf oracle_encode(const std::vector<std::string>& tokens, int dim) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  for (const auto& t : tokens) sum += oracle_token_vector(t, 0, dim);
  return (sum / sum.norm()).cast<float>();
}

EmbeddingBank sample_bank(int n, int dim, std::uint64_t seed = 1) {
  EmbeddingBank bank("test-backend", dim);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    EmbeddingVector v;
    v.backend_id = "test-backend";
    v.values.resize(dim);
    for (int k = 0; k < dim; ++k) v.values[k] = static_cast<float>(rng.normal());
    bank.insert("s" + std::to_string(1000 + i), std::move(v));
  }
  return bank;
}

TEST(HashEncoder, SingleTokenIsNormalizedDraw) {
  HashTextEncoder enc(512);
  const EmbeddingVector a = enc.encode("road");
  const EmbeddingVector b = enc.encode("road");
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.values, oracle_encode({"road"}, 512));
  EXPECT_NEAR(a.values.norm(), 1.0f, 1e-6f);
  EXPECT_EQ(a.values.size(), 512);
}

TEST(HashEncoder, SumRuleMatchesOracle) {
  HashTextEncoder enc(512);
  EXPECT_EQ(enc.encode("road sidewalk").values, oracle_encode({"road", "sidewalk"}, 512));
  // Case and edge punctuation fold into the same token.
  EXPECT_EQ(enc.encode("Road, sidewalk.").values, oracle_encode({"road", "sidewalk"}, 512));
}

TEST(HashEncoder, RejectsOverlongAndEmpty) {
  HashTextEncoder enc(16);
  std::string long_caption;
  for (int i = 0; i < 78; ++i) long_caption += "road ";
  EXPECT_THROW(enc.encode(long_caption), InvalidArgument);
  EXPECT_THROW(enc.encode(" ... "), InvalidArgument);
}

TEST(HashEncoder, DisjointSetsNearlyOrthogonal) {
  HashTextEncoder enc(512);
  Rng rng(9);
  double total = 0.0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    std::string a, b;
    const int na = static_cast<int>(rng.uniform_int(1, 8));
    const int nb = static_cast<int>(rng.uniform_int(1, 8));
    for (int i = 0; i < na; ++i) a += "a" + std::to_string(rng.uniform_int(0, 99999)) + " ";
    for (int i = 0; i < nb; ++i) b += "b" + std::to_string(rng.uniform_int(0, 99999)) + " ";
    total += std::abs(enc.encode(a).values.dot(enc.encode(b).values));
  }
  EXPECT_LT(total / trials, 0.2);
}

TEST(FileEncoder, ReturnsStoredVector) {
  EmbeddingBank bank = sample_bank(3, 8);
  const Eigen::VectorXf expected = bank.at("s1001").values;
  FileTextEncoder enc(std::move(bank));
  EXPECT_EQ(enc.encode_by_id("s1001").values, expected);
  EXPECT_THROW(enc.encode_by_id("s9999"), InvalidArgument);
}

TEST(EmbeddingBank, InsertChecksConsistency) {
  EmbeddingBank bank("b", 4);
  EmbeddingVector wrong_dim{Eigen::VectorXf::Ones(3), "b", ""};
  EXPECT_THROW(bank.insert("x", wrong_dim), InvalidArgument);
  EmbeddingVector wrong_backend{Eigen::VectorXf::Ones(4), "c", ""};
  EXPECT_THROW(bank.insert("x", wrong_backend), InvalidArgument);
  EmbeddingVector ok{Eigen::VectorXf::Ones(4), "b", ""};
  bank.insert("x", ok);
  EXPECT_THROW(bank.insert("x", ok), InvalidArgument);
}

TEST(EmbeddingBank, RoundTripExact) {
  testing::TempDir dir;
  const EmbeddingBank bank = sample_bank(3, 16);
  bank_store(dir / "b.ldeb", bank);
  const EmbeddingBank back = bank_load(dir / "b.ldeb");
  EXPECT_EQ(back.backend_id(), bank.backend_id());
  EXPECT_EQ(back.dimension(), 16);
  ASSERT_EQ(back.size(), 3u);
  for (const auto& [id, v] : bank.entries()) {
    const Eigen::VectorXf& w = back.at(id).values;
    for (int k = 0; k < 16; ++k)
      EXPECT_EQ(std::memcmp(&v.values[k], &w[k], sizeof(float)), 0) << id << "[" << k << "]";
  }
}

TEST(EmbeddingBank, HeaderLayout) {
  testing::TempDir dir;
  bank_store(dir / "b.ldeb", sample_bank(2, 4));
  const std::string bytes = testing::slurp(dir / "b.ldeb");
  ASSERT_GE(bytes.size(), 64u);
  EXPECT_EQ(bytes.substr(0, 4), "LDEB");
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + 3])) << 24;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 4u);
  EXPECT_EQ(u32(12), 2u);
  EXPECT_EQ(u32(16), 0u);
  EXPECT_EQ(bytes.substr(20, 12), "test-backend");
  EXPECT_EQ(bytes[32], '\0');
}

TEST(EmbeddingBank, SizeLaw) {
  testing::TempDir dir;
  const EmbeddingBank bank = sample_bank(512, 512);
  bank_store(dir / "b.ldeb", bank);
  // 64-byte header, then per row a u16 id length, the id, and C floats.
  std::uintmax_t ids = 0;
  for (const auto& [id, v] : bank.entries()) ids += 2 + id.size();
  const std::uintmax_t expected = 64 + ids + 512ull * 512ull * 4ull;
  EXPECT_EQ(std::filesystem::file_size(dir / "b.ldeb"), expected);
  EXPECT_EQ(bank_file_size(bank), expected);
}

TEST(EmbeddingBank, CorruptFilesRejected) {
  testing::TempDir dir;
  bank_store(dir / "b.ldeb", sample_bank(4, 8));
  std::string bytes = testing::slurp(dir / "b.ldeb");
  // Header claims five rows while four are present.
  std::string five = bytes;
  five[12] = 5;
  testing::spit(dir / "five.ldeb", five);
  EXPECT_THROW(bank_load(dir / "five.ldeb"), FormatError);
  testing::spit(dir / "short.ldeb", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(bank_load(dir / "short.ldeb"), FormatError);
  testing::spit(dir / "trail.ldeb", bytes + "x");
  EXPECT_THROW(bank_load(dir / "trail.ldeb"), FormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  testing::spit(dir / "magic.ldeb", magic);
  EXPECT_THROW(bank_load(dir / "magic.ldeb"), FormatError);
  testing::spit(dir / "tiny.ldeb", bytes.substr(0, 10));
  EXPECT_THROW(bank_load(dir / "tiny.ldeb"), FormatError);
}

TEST(EmbedCaptions, BuildsBankKeyedById) {
  std::vector<CaptionRecord> records(2);
  records[0].image_id = "s0";
  records[0].refined_caption = "road";
  records[1].image_id = "s1";
  records[1].refined_caption = "road sidewalk";
  HashTextEncoder enc(32);
  const EmbeddingBank bank = embed_captions(records, enc);
  EXPECT_EQ(bank.size(), 2u);
  EXPECT_EQ(bank.at("s1").values, enc.encode("road sidewalk").values);
  records[1].refined_caption.clear();
  EXPECT_THROW(embed_captions(records, enc), InvalidArgument);
}

TEST(RemoteEncoder, BatchesAndCaches) {
  httplib::Server server;
  int posts = 0;
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++posts;
    const auto body = nlohmann::json::parse(req.body);
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : body.at("texts")) {
      const std::string s = t.get<std::string>();
      vectors.push_back({static_cast<double>(s.size()), 1.0, 0.0});
    }
    res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteTextEncoder enc("http://127.0.0.1:" + std::to_string(port) + "/embed", 3, "remote", 2, 1);
  const auto vs = enc.encode_batch({"a", "bb", "ccc", "a"});
  ASSERT_EQ(vs.size(), 4u);
  EXPECT_FLOAT_EQ(vs[1].values[0], 2.0f);
  EXPECT_EQ(vs[0].values, vs[3].values);
  EXPECT_EQ(enc.requests(), 2u);
  enc.encode("bb");
  EXPECT_EQ(enc.requests(), 2u);

  RemoteTextEncoder wrong("http://127.0.0.1:" + std::to_string(port) + "/embed", 4);
  EXPECT_THROW(wrong.encode("a"), InvalidArgument);
  server.stop();
  th.join();
  EXPECT_EQ(posts, 3);
  EXPECT_THROW(wrong.encode("zzz"), InvalidArgument);
}

}  // namespace
}  // namespace langda
