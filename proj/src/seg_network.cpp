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

#include "langda/seg_network.hpp"

#include "binary_io.hpp"
#include "json_util.hpp"

namespace langda {
namespace {

using detail::get_le;
using detail::put_le;

constexpr char kMagic[4] = {'L', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

ParamGroup group_from_string(const std::string& s) {
  if (s == "encoder") return ParamGroup::kEncoder;
  if (s == "decoder") return ParamGroup::kDecoder;
  if (s == "language") return ParamGroup::kLanguage;
  throw FormatError("checkpoint: unknown parameter group '" + s + "'");
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = get_le<T>(bytes_.data() + pos_);
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kDecoder: return "decoder";
    case ParamGroup::kLanguage: return "language";
  }
  return "?";
}

int ParamLayout::add(std::string name, int rows, int cols, ParamGroup group) {
  if (rows < 1 || cols < 1) throw InvalidArgument("parameter '" + name + "' has an empty shape");
  if (index_of(name) >= 0) throw InvalidArgument("duplicate parameter '" + name + "'");
  params_.push_back(ParamInfo{std::move(name), rows, cols, group, total_});
  total_ += params_.back().size();
  return static_cast<int>(params_.size()) - 1;
}

int ParamLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

void NetworkConfig::validate() const {
  if (in_channels < 1) throw InvalidArgument("network: in_channels must be >= 1");
  if (num_classes < 2) throw InvalidArgument("network: num_classes must be >= 2");
  if (widths.empty() || widths.size() > 6) throw InvalidArgument("network: widths needs 1..6 stages");
  for (int w : widths)
    if (w < 1) throw InvalidArgument("network: stage widths must be >= 1");
  if (decoder_dim < 1) throw InvalidArgument("network: decoder_dim must be >= 1");
  if (embed_dim < 1) throw InvalidArgument("network: embed_dim must be >= 1");
  if (pool_heads < 1 || feature_dim() % pool_heads != 0)
    throw InvalidArgument("network: pool_heads must divide the feature width");
  if (max_tokens < 1) throw InvalidArgument("network: max_tokens must be >= 1");
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"in_channels", c.in_channels}, {"num_classes", c.num_classes},
       {"widths", c.widths},           {"decoder_dim", c.decoder_dim},
       {"embed_dim", c.embed_dim},     {"pool_heads", c.pool_heads},
       {"max_tokens", c.max_tokens},   {"adapter_on_text", c.adapter_on_text}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  detail::require_known_keys(j,
                             {"in_channels", "num_classes", "widths", "decoder_dim", "embed_dim",
                              "pool_heads", "max_tokens", "adapter_on_text"},
                             "network");
  c = NetworkConfig{};
  detail::read_opt(j, "in_channels", c.in_channels);
  detail::read_opt(j, "num_classes", c.num_classes);
  detail::read_opt(j, "widths", c.widths);
  detail::read_opt(j, "decoder_dim", c.decoder_dim);
  detail::read_opt(j, "embed_dim", c.embed_dim);
  detail::read_opt(j, "pool_heads", c.pool_heads);
  detail::read_opt(j, "max_tokens", c.max_tokens);
  detail::read_opt(j, "adapter_on_text", c.adapter_on_text);
  c.validate();
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const ParamLayout& layout = ckpt.layout;
  if (ckpt.student.size() != layout.total() || ckpt.teacher.size() != layout.total())
    throw InvalidArgument("save_checkpoint: parameter vectors do not match the layout");
  nlohmann::json params = nlohmann::json::array();
  for (const ParamInfo& p : layout.params())
    params.push_back({{"name", p.name}, {"shape", {p.rows, p.cols}}, {"group", to_string(p.group)}});
  const std::string header =
      nlohmann::json{{"network", ckpt.config}, {"metadata", ckpt.metadata}, {"params", params}}.dump();

  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const Vector<float>* set : {&ckpt.student, &ckpt.teacher}) {
    for (const ParamInfo& p : layout.params()) {
      put_le<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
      out += p.name;
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.rows));
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.cols));
      for (Eigen::Index i = 0; i < p.size(); ++i) put_le<float>(out, (*set)[p.offset + i]);
    }
  }
  detail::write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  Reader r(bytes);
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw FormatError("checkpoint: bad magic");
  if (const auto v = r.get<std::uint32_t>("version"); v != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  const auto header_len = r.get<std::uint32_t>("header length");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(header_len, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = header.at("network").get<NetworkConfig>();
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& p : header.at("params"))
      ckpt.layout.add(p.at("name").get<std::string>(), p.at("shape").at(0).get<int>(),
                      p.at("shape").at(1).get<int>(),
                      group_from_string(p.at("group").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  if (!(SegNetwork<float>(ckpt.config).layout() == ckpt.layout))
    throw FormatError("checkpoint: parameter table does not match the network config");

  for (Vector<float>* set : {&ckpt.student, &ckpt.teacher}) {
    set->resize(ckpt.layout.total());
    for (const ParamInfo& p : ckpt.layout.params()) {
      const auto len = r.get<std::uint16_t>("parameter name");
      const std::string name = r.str(len, "parameter name");
      const auto rows = r.get<std::uint32_t>("shape");
      const auto cols = r.get<std::uint32_t>("shape");
      if (name != p.name || rows != static_cast<std::uint32_t>(p.rows) ||
          cols != static_cast<std::uint32_t>(p.cols))
        throw FormatError("checkpoint: unexpected parameter record '" + name + "'");
      for (Eigen::Index i = 0; i < p.size(); ++i) (*set)[p.offset + i] = r.get<float>("payload");
    }
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

}  // namespace langda
