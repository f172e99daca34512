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

// Student/teacher segmentation network with a bottleneck feature tap,
// attention pooling and the trainable adapter. All parameters of one model
// live in a single flat vector described by a ParamLayout, so the EMA
// update, the optimizer and checkpointing are plain vector operations.

#ifndef LANGDA_SEG_NETWORK_HPP_
#define LANGDA_SEG_NETWORK_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "langda/core.hpp"

namespace langda {

enum class ParamGroup { kEncoder, kDecoder, kLanguage };
const char* to_string(ParamGroup g);

struct ParamInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  ParamGroup group = ParamGroup::kEncoder;
  Eigen::Index offset = 0;
  Eigen::Index size() const { return static_cast<Eigen::Index>(rows) * cols; }
  bool operator==(const ParamInfo&) const = default;
};

class ParamLayout {
 public:
  int add(std::string name, int rows, int cols, ParamGroup group);
  const std::vector<ParamInfo>& params() const { return params_; }
  const ParamInfo& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  Eigen::Index total() const { return total_; }
  int index_of(const std::string& name) const;  // -1 when absent
  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamInfo> params_;
  Eigen::Index total_ = 0;
};

template <typename Scalar>
Eigen::Map<Matrix<Scalar>> param_view(Vector<Scalar>& flat, const ParamInfo& p) {
  return {flat.data() + p.offset, p.rows, p.cols};
}
template <typename Scalar>
Eigen::Map<const Matrix<Scalar>> param_view(const Vector<Scalar>& flat, const ParamInfo& p) {
  return {flat.data() + p.offset, p.rows, p.cols};
}

struct NetworkConfig {
  int in_channels = 3;
  int num_classes = 6;
  std::vector<int> widths = {16, 32, 48, 64};  // first stage keeps full resolution
  int decoder_dim = 16;
  int embed_dim = 512;  // C, must match the text encoder
  int pool_heads = 4;
  int max_tokens = 16;  // positional table size for attention pooling
  bool adapter_on_text = false;

  int feature_dim() const { return widths.back(); }
  int downsample() const { return 1 << (static_cast<int>(widths.size()) - 1); }
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

template <typename Scalar>
inline Scalar gelu(Scalar x) {
  constexpr Scalar k = static_cast<Scalar>(0.7978845608028654);  // sqrt(2/pi)
  const Scalar u = k * (x + static_cast<Scalar>(0.044715) * x * x * x);
  return static_cast<Scalar>(0.5) * x * (1 + std::tanh(u));
}

template <typename Scalar>
inline Scalar gelu_grad(Scalar x) {
  constexpr Scalar k = static_cast<Scalar>(0.7978845608028654);
  const Scalar u = k * (x + static_cast<Scalar>(0.044715) * x * x * x);
  const Scalar t = std::tanh(u);
  const Scalar du = k * (1 + static_cast<Scalar>(3 * 0.044715) * x * x);
  return static_cast<Scalar>(0.5) * (1 + t) + static_cast<Scalar>(0.5) * x * (1 - t * t) * du;
}

// Bilinear interpolation weights (half-pixel centers, edge clamped) as a dense
// [out x in] matrix.
template <typename Scalar>
Matrix<Scalar> bilinear_matrix(int out, int in) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(out, in);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * in / static_cast<double>(out) - 0.5;
    if (src < 0) src = 0;
    const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    const double w1 = src - i0;
    m(o, i0) += static_cast<Scalar>(1.0 - w1);
    m(o, i1) += static_cast<Scalar>(w1);
  }
  return m;
}

// [C x (h*w)] -> [C x (H*W)] via Uh * X_c * Uw^T per channel.
template <typename Scalar>
Matrix<Scalar> resample(const Matrix<Scalar>& x, int h, int w, const Matrix<Scalar>& uh,
                        const Matrix<Scalar>& uw) {
  const int out_h = static_cast<int>(uh.rows()), out_w = static_cast<int>(uw.rows());
  Matrix<Scalar> y(x.rows(), static_cast<Eigen::Index>(out_h) * out_w);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    Eigen::Map<const Matrix<Scalar>> xc(x.row(c).data(), h, w);
    Eigen::Map<Matrix<Scalar>> yc(y.row(c).data(), out_h, out_w);
    yc.noalias() = uh * xc * uw.transpose();
  }
  return y;
}

// Adjoint of resample: [C x (H*W)] -> [C x (h*w)].
template <typename Scalar>
Matrix<Scalar> resample_adjoint(const Matrix<Scalar>& dy, int out_h, int out_w,
                                const Matrix<Scalar>& uh, const Matrix<Scalar>& uw) {
  const int h = static_cast<int>(uh.cols()), w = static_cast<int>(uw.cols());
  Matrix<Scalar> dx(dy.rows(), static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < dy.rows(); ++c) {
    Eigen::Map<const Matrix<Scalar>> dyc(dy.row(c).data(), out_h, out_w);
    Eigen::Map<Matrix<Scalar>> dxc(dx.row(c).data(), h, w);
    dxc.noalias() = uh.transpose() * dyc * uw;
  }
  return dx;
}

// 3x3 patches, zero padding 1: [C x (H*W)] -> [(C*9) x (Ho*Wo)].
template <typename Scalar>
Matrix<Scalar> im2col3x3(const Matrix<Scalar>& x, int h, int w, int stride, int out_h, int out_w) {
  const int channels = static_cast<int>(x.rows());
  Matrix<Scalar> col = Matrix<Scalar>::Zero(channels * 9, static_cast<Eigen::Index>(out_h) * out_w);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - 1 + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - 1 + kx;
            if (ix < 0 || ix >= w) continue;
            col(row, oy * out_w + ox) = x(c, iy * w + ix);
          }
        }
      }
  return col;
}

template <typename Scalar>
Matrix<Scalar> col2im3x3(const Matrix<Scalar>& col, int channels, int h, int w, int stride,
                         int out_h, int out_w) {
  Matrix<Scalar> x = Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - 1 + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - 1 + kx;
            if (ix < 0 || ix >= w) continue;
            x(c, iy * w + ix) += col(row, oy * out_w + ox);
          }
        }
      }
  return x;
}

template <typename Scalar>
struct NetworkCache {
  int height = 0;
  int width = 0;
  std::vector<std::pair<int, int>> stage_hw;
  std::vector<Matrix<Scalar>> cols;      // conv inputs as patches
  std::vector<Matrix<Scalar>> pre;       // conv pre-activations
  std::vector<Matrix<Scalar>> stage_out; // activations per stage
  Matrix<Scalar> fused;                  // decoder sum before activation
  Matrix<Scalar> fused_act;
};

template <typename Scalar>
struct PoolCache {
  Matrix<Scalar> tokens;  // [C_f x N] features + positional
  Vector<Scalar> query_token;
  Vector<Scalar> q;
  Matrix<Scalar> k;
  Matrix<Scalar> v;
  Matrix<Scalar> attn;  // [heads x N]
  Vector<Scalar> heads_out;
};

template <typename Scalar>
struct AdapterCache {
  Vector<Scalar> input;
  Vector<Scalar> hidden_pre;
  Vector<Scalar> hidden;
};

template <typename Scalar>
struct ForwardResult {
  Tensor3<Scalar> logits;
  Tensor3<Scalar> features;
};

template <typename Scalar>
class SegNetwork {
 public:
  explicit SegNetwork(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    const int stages = static_cast<int>(config_.widths.size());
    int in = config_.in_channels;
    for (int s = 0; s < stages; ++s) {
      const int out = config_.widths[static_cast<std::size_t>(s)];
      conv_w_.push_back(layout_.add("encoder.stage" + std::to_string(s) + ".weight", out, in * 9,
                                    ParamGroup::kEncoder));
      conv_b_.push_back(layout_.add("encoder.stage" + std::to_string(s) + ".bias", out, 1,
                                    ParamGroup::kEncoder));
      in = out;
    }
    for (int s = 0; s < stages; ++s) {
      proj_w_.push_back(layout_.add("decoder.proj" + std::to_string(s) + ".weight",
                                    config_.decoder_dim, config_.widths[static_cast<std::size_t>(s)],
                                    ParamGroup::kDecoder));
      proj_b_.push_back(layout_.add("decoder.proj" + std::to_string(s) + ".bias",
                                    config_.decoder_dim, 1, ParamGroup::kDecoder));
    }
    head_w_ = layout_.add("decoder.head.weight", config_.num_classes, config_.decoder_dim,
                          ParamGroup::kDecoder);
    head_b_ = layout_.add("decoder.head.bias", config_.num_classes, 1, ParamGroup::kDecoder);
    const int cf = config_.feature_dim();
    pos_ = layout_.add("pool.positional", cf, config_.max_tokens + 1, ParamGroup::kLanguage);
    for (const char* n : {"q", "k", "v", "o"}) {
      pool_w_.push_back(layout_.add(std::string("pool.") + n + ".weight", cf, cf,
                                    ParamGroup::kLanguage));
      pool_b_.push_back(layout_.add(std::string("pool.") + n + ".bias", cf, 1,
                                    ParamGroup::kLanguage));
    }
    const int c = config_.embed_dim;
    ad_w1_ = layout_.add("adapter.fc1.weight", c, cf, ParamGroup::kLanguage);
    ad_b1_ = layout_.add("adapter.fc1.bias", c, 1, ParamGroup::kLanguage);
    ad_w2_ = layout_.add("adapter.fc2.weight", c, c, ParamGroup::kLanguage);
    ad_b2_ = layout_.add("adapter.fc2.bias", c, 1, ParamGroup::kLanguage);
    if (config_.adapter_on_text) {
      tx_w1_ = layout_.add("text_adapter.fc1.weight", c, c, ParamGroup::kLanguage);
      tx_b1_ = layout_.add("text_adapter.fc1.bias", c, 1, ParamGroup::kLanguage);
      tx_w2_ = layout_.add("text_adapter.fc2.weight", c, c, ParamGroup::kLanguage);
      tx_b2_ = layout_.add("text_adapter.fc2.bias", c, 1, ParamGroup::kLanguage);
    }
  }

  const NetworkConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::Index num_params() const { return layout_.total(); }

  // Fan-in scaled Gaussian weights, zero biases. The text adapter, when
  // present, starts as the identity map on its linear path.
  Vector<Scalar> init_params(std::uint64_t seed) const {
    Vector<Scalar> flat = Vector<Scalar>::Zero(layout_.total());
    Rng rng(seed);
    for (const ParamInfo& p : layout_.params()) {
      auto m = param_view(flat, p);
      if (p.name.ends_with(".bias")) continue;
      double sigma;
      if (p.name == "pool.positional") {
        sigma = 1.0 / std::sqrt(static_cast<double>(p.rows));
      } else if (p.name.starts_with("pool.") || p.name.starts_with("decoder.head") ||
                 p.name.ends_with("fc2.weight")) {
        sigma = 1.0 / std::sqrt(static_cast<double>(p.cols));
      } else {
        sigma = std::sqrt(2.0 / static_cast<double>(p.cols));
      }
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.normal(0.0, sigma));
    }
    if (config_.adapter_on_text) {
      param_view(flat, layout_[tx_w1_]).setIdentity();
      param_view(flat, layout_[tx_w2_]).setIdentity();
    }
    return flat;
  }

  void check_params(const Vector<Scalar>& params) const {
    if (params.size() != layout_.total())
      throw InvalidArgument("parameter vector has " + std::to_string(params.size()) +
                            " entries, network expects " + std::to_string(layout_.total()));
  }

  ForwardResult<Scalar> forward(const Vector<Scalar>& params, const Tensor3<Scalar>& image,
                                NetworkCache<Scalar>* cache = nullptr) const {
    check_params(params);
    if (image.channels() != config_.in_channels)
      throw InvalidArgument("forward: expected " + std::to_string(config_.in_channels) +
                            " input channels, got " + std::to_string(image.channels()));
    const int d = config_.downsample();
    if (image.height < d || image.width < d || image.height % d || image.width % d)
      throw InvalidArgument("forward: image size " + std::to_string(image.height) + "x" +
                            std::to_string(image.width) + " must be a positive multiple of " +
                            std::to_string(d));
    NetworkCache<Scalar> local;
    NetworkCache<Scalar>& c = cache ? *cache : local;
    c = NetworkCache<Scalar>{};
    c.height = image.height;
    c.width = image.width;

    const int stages = static_cast<int>(config_.widths.size());
    Matrix<Scalar> x = image.data;
    int h = image.height, w = image.width;
    for (int s = 0; s < stages; ++s) {
      const int stride = s == 0 ? 1 : 2;
      const int oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
      Matrix<Scalar> col = im2col3x3<Scalar>(x, h, w, stride, oh, ow);
      Matrix<Scalar> pre = param_view(params, layout_[conv_w_[s]]) * col;
      pre.colwise() += param_view(params, layout_[conv_b_[s]]).col(0);
      x = pre.unaryExpr([](Scalar v) { return gelu(v); });
      h = oh;
      w = ow;
      c.stage_hw.emplace_back(h, w);
      c.cols.push_back(std::move(col));
      c.pre.push_back(std::move(pre));
      c.stage_out.push_back(x);
    }

    const Eigen::Index full = static_cast<Eigen::Index>(image.height) * image.width;
    c.fused = Matrix<Scalar>::Zero(config_.decoder_dim, full);
    for (int s = 0; s < stages; ++s) {
      Matrix<Scalar> p = param_view(params, layout_[proj_w_[s]]) * c.stage_out[s];
      p.colwise() += param_view(params, layout_[proj_b_[s]]).col(0);
      const auto [sh, sw] = c.stage_hw[s];
      if (sh == image.height && sw == image.width) {
        c.fused += p;
      } else {
        c.fused += resample<Scalar>(p, sh, sw, bilinear_matrix<Scalar>(image.height, sh),
                                    bilinear_matrix<Scalar>(image.width, sw));
      }
    }
    c.fused_act = c.fused.unaryExpr([](Scalar v) { return gelu(v); });

    ForwardResult<Scalar> out;
    out.logits.height = image.height;
    out.logits.width = image.width;
    out.logits.data = param_view(params, layout_[head_w_]) * c.fused_act;
    out.logits.data.colwise() += param_view(params, layout_[head_b_]).col(0);
    out.features.data = c.stage_out.back();
    out.features.height = h;
    out.features.width = w;
    return out;
  }

  // Accumulates into `grad`. `dfeatures` is the gradient w.r.t. the
  // bottleneck features, when a language loss is attached.
  void backward(const Vector<Scalar>& params, const NetworkCache<Scalar>& c,
                const Matrix<Scalar>& dlogits, const Matrix<Scalar>* dfeatures,
                Vector<Scalar>& grad) const {
    check_params(params);
    if (grad.size() != params.size()) grad = Vector<Scalar>::Zero(params.size());
    const int stages = static_cast<int>(config_.widths.size());

    param_view(grad, layout_[head_w_]).noalias() += dlogits * c.fused_act.transpose();
    param_view(grad, layout_[head_b_]).col(0) += dlogits.rowwise().sum();
    Matrix<Scalar> dfused = param_view(params, layout_[head_w_]).transpose() * dlogits;
    dfused.array() *= c.fused.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();

    std::vector<Matrix<Scalar>> dstage(static_cast<std::size_t>(stages));
    for (int s = 0; s < stages; ++s) {
      const auto [sh, sw] = c.stage_hw[s];
      Matrix<Scalar> dp;
      if (sh == c.height && sw == c.width) {
        dp = dfused;
      } else {
        dp = resample_adjoint<Scalar>(dfused, c.height, c.width,
                                      bilinear_matrix<Scalar>(c.height, sh),
                                      bilinear_matrix<Scalar>(c.width, sw));
      }
      param_view(grad, layout_[proj_w_[s]]).noalias() += dp * c.stage_out[s].transpose();
      param_view(grad, layout_[proj_b_[s]]).col(0) += dp.rowwise().sum();
      dstage[s] = param_view(params, layout_[proj_w_[s]]).transpose() * dp;
    }
    if (dfeatures) dstage.back() += *dfeatures;

    for (int s = stages - 1; s >= 0; --s) {
      Matrix<Scalar> dpre = dstage[s];
      dpre.array() *= c.pre[s].unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
      param_view(grad, layout_[conv_w_[s]]).noalias() += dpre * c.cols[s].transpose();
      param_view(grad, layout_[conv_b_[s]]).col(0) += dpre.rowwise().sum();
      if (s == 0) break;
      const Matrix<Scalar> dcol = param_view(params, layout_[conv_w_[s]]).transpose() * dpre;
      const auto [ih, iw] = c.stage_hw[s - 1];
      const auto [oh, ow] = c.stage_hw[s];
      dstage[s - 1] += col2im3x3<Scalar>(dcol, static_cast<int>(c.stage_out[s - 1].rows()), ih,
                                         iw, 2, oh, ow);
    }
  }

  // Single-query multi-head attention: query from the spatial mean token,
  // keys/values from spatial tokens, each offset by a learned position.
  Vector<Scalar> attention_pool(const Vector<Scalar>& params, const Tensor3<Scalar>& features,
                                PoolCache<Scalar>* cache = nullptr) const {
    check_params(params);
    const int cf = config_.feature_dim();
    const int n = static_cast<int>(features.pixels());
    if (features.channels() != cf)
      throw InvalidArgument("attention_pool: expected " + std::to_string(cf) + " channels");
    if (n < 1) throw InvalidArgument("attention_pool: empty feature map");
    if (n > config_.max_tokens)
      throw InvalidArgument("attention_pool: " + std::to_string(n) +
                            " spatial tokens exceed the positional table (" +
                            std::to_string(config_.max_tokens) + ")");
    PoolCache<Scalar> local;
    PoolCache<Scalar>& c = cache ? *cache : local;
    const auto pos = param_view(params, layout_[pos_]);
    c.tokens = features.data + pos.middleCols(1, n);
    c.query_token = features.data.rowwise().mean() + pos.col(0);
    c.q = param_view(params, layout_[pool_w_[0]]) * c.query_token +
          param_view(params, layout_[pool_b_[0]]).col(0);
    c.k = param_view(params, layout_[pool_w_[1]]) * c.tokens;
    c.k.colwise() += param_view(params, layout_[pool_b_[1]]).col(0);
    c.v = param_view(params, layout_[pool_w_[2]]) * c.tokens;
    c.v.colwise() += param_view(params, layout_[pool_b_[2]]).col(0);

    const int heads = config_.pool_heads, dh = cf / heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));
    c.attn.resize(heads, n);
    c.heads_out.resize(cf);
    for (int hd = 0; hd < heads; ++hd) {
      Vector<Scalar> s = (c.k.middleRows(hd * dh, dh).transpose() * c.q.segment(hd * dh, dh)) * scale;
      s.array() -= s.maxCoeff();
      s = s.array().exp();
      s /= s.sum();
      c.attn.row(hd) = s.transpose();
      c.heads_out.segment(hd * dh, dh) = c.v.middleRows(hd * dh, dh) * s;
    }
    return param_view(params, layout_[pool_w_[3]]) * c.heads_out +
           param_view(params, layout_[pool_b_[3]]).col(0);
  }

  // Returns d(loss)/d(features) and accumulates parameter gradients.
  Matrix<Scalar> attention_pool_backward(const Vector<Scalar>& params, const PoolCache<Scalar>& c,
                                         const Vector<Scalar>& dout, Vector<Scalar>& grad) const {
    const int cf = config_.feature_dim();
    const int n = static_cast<int>(c.tokens.cols());
    const int heads = config_.pool_heads, dh = cf / heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dh)));

    param_view(grad, layout_[pool_w_[3]]).noalias() += dout * c.heads_out.transpose();
    param_view(grad, layout_[pool_b_[3]]).col(0) += dout;
    const Vector<Scalar> dheads = param_view(params, layout_[pool_w_[3]]).transpose() * dout;

    Vector<Scalar> dq(cf);
    Matrix<Scalar> dk(cf, n), dv(cf, n);
    for (int hd = 0; hd < heads; ++hd) {
      const Vector<Scalar> a = c.attn.row(hd).transpose();
      const auto dho = dheads.segment(hd * dh, dh);
      dv.middleRows(hd * dh, dh) = dho * a.transpose();
      const Vector<Scalar> da = c.v.middleRows(hd * dh, dh).transpose() * dho;
      const Vector<Scalar> ds = (a.array() * (da.array() - a.dot(da))).matrix() * scale;
      dq.segment(hd * dh, dh) = c.k.middleRows(hd * dh, dh) * ds;
      dk.middleRows(hd * dh, dh) = c.q.segment(hd * dh, dh) * ds.transpose();
    }
    param_view(grad, layout_[pool_w_[0]]).noalias() += dq * c.query_token.transpose();
    param_view(grad, layout_[pool_b_[0]]).col(0) += dq;
    param_view(grad, layout_[pool_w_[1]]).noalias() += dk * c.tokens.transpose();
    param_view(grad, layout_[pool_b_[1]]).col(0) += dk.rowwise().sum();
    param_view(grad, layout_[pool_w_[2]]).noalias() += dv * c.tokens.transpose();
    param_view(grad, layout_[pool_b_[2]]).col(0) += dv.rowwise().sum();

    const Vector<Scalar> dquery = param_view(params, layout_[pool_w_[0]]).transpose() * dq;
    Matrix<Scalar> dtokens = param_view(params, layout_[pool_w_[1]]).transpose() * dk;
    dtokens.noalias() += param_view(params, layout_[pool_w_[2]]).transpose() * dv;

    auto dpos = param_view(grad, layout_[pos_]);
    dpos.col(0) += dquery;
    dpos.middleCols(1, n) += dtokens;
    Matrix<Scalar> dfeat = dtokens;
    dfeat.colwise() += dquery / static_cast<Scalar>(n);
    return dfeat;
  }

  // fc2(gelu(fc1(x))); `linear` skips the activation (identity checks only).
  Vector<Scalar> adapter_project(const Vector<Scalar>& params, const Vector<Scalar>& pooled,
                                 AdapterCache<Scalar>* cache = nullptr, bool linear = false) const {
    return mlp_forward(params, ad_w1_, ad_b1_, ad_w2_, ad_b2_, pooled, cache, linear);
  }
  Vector<Scalar> adapter_backward(const Vector<Scalar>& params, const AdapterCache<Scalar>& c,
                                  const Vector<Scalar>& dout, Vector<Scalar>& grad,
                                  bool linear = false) const {
    return mlp_backward(params, ad_w1_, ad_b1_, ad_w2_, ad_b2_, c, dout, grad, linear);
  }

  bool has_text_adapter() const { return config_.adapter_on_text; }
  Vector<Scalar> text_adapter_project(const Vector<Scalar>& params, const Vector<Scalar>& text,
                                      AdapterCache<Scalar>* cache = nullptr) const {
    if (!config_.adapter_on_text) return text;
    return mlp_forward(params, tx_w1_, tx_b1_, tx_w2_, tx_b2_, text, cache, false);
  }
  void text_adapter_backward(const Vector<Scalar>& params, const AdapterCache<Scalar>& c,
                             const Vector<Scalar>& dout, Vector<Scalar>& grad) const {
    if (config_.adapter_on_text) mlp_backward(params, tx_w1_, tx_b1_, tx_w2_, tx_b2_, c, dout, grad, false);
  }

 private:
  Vector<Scalar> mlp_forward(const Vector<Scalar>& params, int w1, int b1, int w2, int b2,
                             const Vector<Scalar>& x, AdapterCache<Scalar>* cache,
                             bool linear) const {
    check_params(params);
    const auto& l = layout_;
    if (x.size() != l[w1].cols)
      throw InvalidArgument("adapter: expected input of size " + std::to_string(l[w1].cols));
    AdapterCache<Scalar> local;
    AdapterCache<Scalar>& c = cache ? *cache : local;
    c.input = x;
    c.hidden_pre = param_view(params, l[w1]) * x + param_view(params, l[b1]).col(0);
    c.hidden = linear ? c.hidden_pre : c.hidden_pre.unaryExpr([](Scalar v) { return gelu(v); });
    return param_view(params, l[w2]) * c.hidden + param_view(params, l[b2]).col(0);
  }

  Vector<Scalar> mlp_backward(const Vector<Scalar>& params, int w1, int b1, int w2, int b2,
                              const AdapterCache<Scalar>& c, const Vector<Scalar>& dout,
                              Vector<Scalar>& grad, bool linear) const {
    const auto& l = layout_;
    param_view(grad, l[w2]).noalias() += dout * c.hidden.transpose();
    param_view(grad, l[b2]).col(0) += dout;
    Vector<Scalar> dh = param_view(params, l[w2]).transpose() * dout;
    if (!linear) dh.array() *= c.hidden_pre.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
    param_view(grad, l[w1]).noalias() += dh * c.input.transpose();
    param_view(grad, l[b1]).col(0) += dh;
    return param_view(params, l[w1]).transpose() * dh;
  }

  NetworkConfig config_;
  ParamLayout layout_;
  std::vector<int> conv_w_, conv_b_, proj_w_, proj_b_, pool_w_, pool_b_;
  int head_w_ = -1, head_b_ = -1, pos_ = -1;
  int ad_w1_ = -1, ad_b1_ = -1, ad_w2_ = -1, ad_b2_ = -1;
  int tx_w1_ = -1, tx_b1_ = -1, tx_w2_ = -1, tx_b2_ = -1;
};

// Per-pixel argmax of logits, lowest class index on ties.
template <typename Scalar>
LabelMap predict_labels(const Tensor3<Scalar>& logits) {
  LabelMap out(logits.height, logits.width);
  for (Eigen::Index p = 0; p < logits.pixels(); ++p) {
    Eigen::Index best;
    logits.data.col(p).maxCoeff(&best);
    out.labels[p] = static_cast<int>(best);
  }
  return out;
}

template <typename Scalar>
struct ModelPair {
  Vector<Scalar> student;
  Vector<Scalar> teacher;
};

// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
template <typename Scalar>
void ema_update(ModelPair<Scalar>& pair, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("ema_update: alpha must be in [0,1]");
  if (pair.student.size() != pair.teacher.size())
    throw InvalidArgument("ema_update: student and teacher shapes differ");
  const Scalar a = static_cast<Scalar>(alpha);
  const Scalar b = static_cast<Scalar>(1.0 - alpha);
  pair.teacher = a * pair.teacher + b * pair.student;
}

struct Checkpoint {
  NetworkConfig config;
  nlohmann::json metadata;
  ParamLayout layout;
  Vector<float> student;
  Vector<float> teacher;
};

// Archive: "LDCK", version u32, JSON length u32, JSON {network, metadata,
// params:[{name, shape, group}]}, then for "student" and "teacher": per
// parameter name length u16, name, rows u32, cols u32, rows*cols float32.
// Little-endian throughout.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <typename Scalar>
Checkpoint make_checkpoint(const SegNetwork<Scalar>& net, const ModelPair<Scalar>& pair,
                           nlohmann::json metadata = nlohmann::json::object()) {
  return Checkpoint{net.config(), std::move(metadata), net.layout(),
                    pair.student.template cast<float>(), pair.teacher.template cast<float>()};
}

}  // namespace langda

#endif  // LANGDA_SEG_NETWORK_HPP_
