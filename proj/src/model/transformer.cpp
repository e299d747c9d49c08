// Copyright 2026 The keen Authors
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

#include "keen/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "keen/error.hpp"
#include "keen/simd/kernels.hpp"
#include "keen/util/io.hpp"

namespace keen::model {
namespace {

constexpr char kWeightsMagic[8] = {'K', 'E', 'E', 'N', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kWeightsVersion = 1;

void expect_size(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(n) + " values, found " +
                     std::to_string(v.size()));
  }
}

void linear(const std::vector<double>& weight, const std::vector<double>& bias,
            std::size_t out, std::size_t in, const double* x, double* y) {
  simd::active().matvec(weight.data(), out, in, x, y);
  for (std::size_t i = 0; i < out; ++i) y[i] += bias[i];
}

// Causal softmax attention of one query row against keys/values rows [0, n).
void attend(const double* q, const double* keys, const double* values, std::size_t n,
            std::size_t d, std::size_t heads, double* out) {
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> scores(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    double max_score = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      scores[j] = simd::active().dot(q + off, keys + j * d + off, hd) * scale;
      max_score = std::max(max_score, scores[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      scores[j] = std::exp(scores[j] - max_score);
      denom += scores[j];
    }
    for (std::size_t k = 0; k < hd; ++k) out[off + k] = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      simd::active().axpy(scores[j] / denom, values + j * d + off, out + off, hd);
    }
  }
}

}  // namespace

double gelu(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

void TransformerWeights::validate() const {
  const auto& c = config;
  if (c.num_layers < 1 || c.hidden_dim < 1 || c.vocab_size < 1 || c.mlp_dim < 1 ||
      c.max_positions < 1 || c.num_heads < 1) {
    throw ShapeError("transformer dimensions must be strictly positive");
  }
  if (c.hidden_dim % c.num_heads != 0) throw ShapeError("hidden_dim must be divisible by num_heads");
  const auto d = static_cast<std::size_t>(c.hidden_dim);
  const auto m = static_cast<std::size_t>(c.mlp_dim);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  expect_size(token_embedding, v * d, "token_embedding");
  expect_size(position_embedding, static_cast<std::size_t>(c.max_positions) * d, "position_embedding");
  if (blocks.size() != static_cast<std::size_t>(c.num_layers)) throw ShapeError("block count != num_layers");
  for (const auto& b : blocks) {
    expect_size(b.ln1_weight, d, "ln1_weight");
    expect_size(b.ln1_bias, d, "ln1_bias");
    expect_size(b.qkv_weight, 3 * d * d, "qkv_weight");
    expect_size(b.qkv_bias, 3 * d, "qkv_bias");
    expect_size(b.attn_out_weight, d * d, "attn_out_weight");
    expect_size(b.attn_out_bias, d, "attn_out_bias");
    expect_size(b.ln2_weight, d, "ln2_weight");
    expect_size(b.ln2_bias, d, "ln2_bias");
    expect_size(b.fc_weight, m * d, "fc_weight");
    expect_size(b.fc_bias, m, "fc_bias");
    expect_size(b.fc_out_weight, d * m, "fc_out_weight");
    expect_size(b.fc_out_bias, d, "fc_out_bias");
  }
  expect_size(final_norm_weight, d, "final_norm_weight");
  expect_size(final_norm_bias, d, "final_norm_bias");
  expect_size(unembedding, v * d, "unembedding");
}

Transformer::Transformer(TransformerWeights weights) : w_(std::move(weights)) { w_.validate(); }

KvCache Transformer::make_cache() const {
  KvCache cache;
  cache.keys.resize(static_cast<std::size_t>(w_.config.num_layers));
  cache.values.resize(static_cast<std::size_t>(w_.config.num_layers));
  return cache;
}

void Transformer::norm(std::span<const double> x, const std::vector<double>& weight,
                       const std::vector<double>& bias, std::span<double> out) const {
  const std::size_t d = x.size();
  switch (w_.config.norm) {
    case NormKind::kIdentity:
      std::copy(x.begin(), x.end(), out.begin());
      return;
    case NormKind::kRmsNorm: {
      double ss = 0.0;
      for (double v : x) ss += v * v;
      const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + w_.config.norm_eps);
      for (std::size_t i = 0; i < d; ++i) out[i] = x[i] * inv * weight[i];
      return;
    }
    case NormKind::kLayerNorm: {
      double mean = 0.0;
      for (double v : x) mean += v;
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (double v : x) var += (v - mean) * (v - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + w_.config.norm_eps);
      for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mean) * inv * weight[i] + bias[i];
      return;
    }
  }
}

std::vector<double> Transformer::embed(std::span<const int> ids, std::size_t first_position) const {
  const auto d = static_cast<std::size_t>(w_.config.hidden_dim);
  std::vector<double> h(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    const std::size_t pos = first_position + t;
    if (id < 0 || id >= w_.config.vocab_size) throw RangeError("token id " + std::to_string(id) + " out of range");
    if (pos >= static_cast<std::size_t>(w_.config.max_positions)) {
      throw BoundsError("sequence exceeds the model's " + std::to_string(w_.config.max_positions) + " positions");
    }
    const double* te = w_.token_embedding.data() + static_cast<std::size_t>(id) * d;
    const double* pe = w_.position_embedding.data() + pos * d;
    for (std::size_t i = 0; i < d; ++i) h[t * d + i] = te[i] + pe[i];
  }
  return h;
}

std::vector<double> Transformer::forward(std::span<const int> ids, KvCache& cache,
                                         BlockObserver* observer) const {
  const auto d = static_cast<std::size_t>(w_.config.hidden_dim);
  const auto m = static_cast<std::size_t>(w_.config.mlp_dim);
  const auto heads = static_cast<std::size_t>(w_.config.num_heads);
  const std::size_t n = ids.size();
  const std::size_t start = cache.length;

  std::vector<double> h = embed(ids, start);
  if (observer != nullptr) {
    for (std::size_t t = 0; t < n; ++t) observer->on_embedding(start + t, {h.data() + t * d, d});
  }

  std::vector<double> normed(d), qkv(3 * d), ctx(d), attn(d), resid(d), fc(m), mlp(d);
  for (int layer = 0; layer < w_.config.num_layers; ++layer) {
    const BlockWeights& b = w_.blocks[static_cast<std::size_t>(layer)];
    auto& keys = cache.keys[static_cast<std::size_t>(layer)];
    auto& values = cache.values[static_cast<std::size_t>(layer)];
    keys.resize((start + n) * d);
    values.resize((start + n) * d);

    // Keys/values for all new positions first; each query sees only <= itself.
    std::vector<double> queries(n * d);
    for (std::size_t t = 0; t < n; ++t) {
      norm({h.data() + t * d, d}, b.ln1_weight, b.ln1_bias, normed);
      linear(b.qkv_weight, b.qkv_bias, 3 * d, d, normed.data(), qkv.data());
      std::copy_n(qkv.data(), d, queries.data() + t * d);
      std::copy_n(qkv.data() + d, d, keys.data() + (start + t) * d);
      std::copy_n(qkv.data() + 2 * d, d, values.data() + (start + t) * d);
    }
    for (std::size_t t = 0; t < n; ++t) {
      attend(queries.data() + t * d, keys.data(), values.data(), start + t + 1, d, heads, ctx.data());
      linear(b.attn_out_weight, b.attn_out_bias, d, d, ctx.data(), attn.data());
      double* ht = h.data() + t * d;
      for (std::size_t i = 0; i < d; ++i) resid[i] = ht[i] + attn[i];
      norm(resid, b.ln2_weight, b.ln2_bias, normed);
      linear(b.fc_weight, b.fc_bias, m, d, normed.data(), fc.data());
      for (auto& v : fc) v = gelu(v);
      linear(b.fc_out_weight, b.fc_out_bias, d, m, fc.data(), mlp.data());
      for (std::size_t i = 0; i < d; ++i) ht[i] = ht[i] + attn[i] + mlp[i];
      if (observer != nullptr) observer->on_block(layer + 1, start + t, attn, mlp, {ht, d});
    }
  }
  cache.length = start + n;
  return h;
}

std::vector<double> Transformer::block(int layer, std::span<const double> hidden, std::size_t rows,
                                       std::vector<double>* attn_out,
                                       std::vector<double>* mlp_out) const {
  const auto d = static_cast<std::size_t>(w_.config.hidden_dim);
  const auto m = static_cast<std::size_t>(w_.config.mlp_dim);
  const auto heads = static_cast<std::size_t>(w_.config.num_heads);
  if (layer < 1 || layer > w_.config.num_layers) throw BoundsError("layer out of range");
  if (hidden.size() != rows * d) throw ShapeError("hidden rows do not match hidden_dim");
  const BlockWeights& b = w_.blocks[static_cast<std::size_t>(layer - 1)];

  std::vector<double> q(rows * d), k(rows * d), v(rows * d);
  std::vector<double> normed(d), qkv(3 * d);
  for (std::size_t t = 0; t < rows; ++t) {
    norm(hidden.subspan(t * d, d), b.ln1_weight, b.ln1_bias, normed);
    linear(b.qkv_weight, b.qkv_bias, 3 * d, d, normed.data(), qkv.data());
    std::copy_n(qkv.data(), d, q.data() + t * d);
    std::copy_n(qkv.data() + d, d, k.data() + t * d);
    std::copy_n(qkv.data() + 2 * d, d, v.data() + t * d);
  }
  std::vector<double> out(rows * d), ctx(d), attn(d), resid(d), fc(m), mlp(d);
  if (attn_out != nullptr) attn_out->assign(rows * d, 0.0);
  if (mlp_out != nullptr) mlp_out->assign(rows * d, 0.0);
  for (std::size_t t = 0; t < rows; ++t) {
    attend(q.data() + t * d, k.data(), v.data(), t + 1, d, heads, ctx.data());
    linear(b.attn_out_weight, b.attn_out_bias, d, d, ctx.data(), attn.data());
    for (std::size_t i = 0; i < d; ++i) resid[i] = hidden[t * d + i] + attn[i];
    norm(resid, b.ln2_weight, b.ln2_bias, normed);
    linear(b.fc_weight, b.fc_bias, m, d, normed.data(), fc.data());
    for (auto& x : fc) x = gelu(x);
    linear(b.fc_out_weight, b.fc_out_bias, d, m, fc.data(), mlp.data());
    for (std::size_t i = 0; i < d; ++i) out[t * d + i] = hidden[t * d + i] + attn[i] + mlp[i];
    if (attn_out != nullptr) std::copy(attn.begin(), attn.end(), attn_out->begin() + static_cast<std::ptrdiff_t>(t * d));
    if (mlp_out != nullptr) std::copy(mlp.begin(), mlp.end(), mlp_out->begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  return out;
}

void Transformer::final_norm(std::span<const double> h, std::span<double> out) const {
  if (h.size() != static_cast<std::size_t>(w_.config.hidden_dim) || out.size() != h.size()) {
    throw ShapeError("final norm input has length " + std::to_string(h.size()) + ", expected " +
                     std::to_string(w_.config.hidden_dim));
  }
  norm(h, w_.final_norm_weight, w_.final_norm_bias, out);
}

std::vector<double> Transformer::logits(std::span<const double> h) const {
  std::vector<double> normed(h.size());
  final_norm(h, normed);
  std::vector<double> out(static_cast<std::size_t>(w_.config.vocab_size));
  simd::active().matvec(w_.unembedding.data(), out.size(), normed.size(), normed.data(), out.data());
  return out;
}

void save_weights(const TransformerWeights& w, const std::filesystem::path& path) {
  w.validate();
  util::BinaryWriter out;
  out.bytes(kWeightsMagic, sizeof kWeightsMagic);
  out.u32(kWeightsVersion);
  const auto& c = w.config;
  out.str(c.model_id);
  out.i32(c.num_layers);
  out.i32(c.hidden_dim);
  out.i32(c.num_heads);
  out.i32(c.mlp_dim);
  out.i32(c.vocab_size);
  out.i32(c.max_positions);
  out.u32(static_cast<std::uint32_t>(c.norm));
  out.f64(c.norm_eps);
  auto put = [&](const std::vector<double>& v) { out.f64s(v.data(), v.size()); };
  put(w.token_embedding);
  put(w.position_embedding);
  for (const auto& b : w.blocks) {
    for (const auto* v : {&b.ln1_weight, &b.ln1_bias, &b.qkv_weight, &b.qkv_bias, &b.attn_out_weight,
                          &b.attn_out_bias, &b.ln2_weight, &b.ln2_bias, &b.fc_weight, &b.fc_bias,
                          &b.fc_out_weight, &b.fc_out_bias}) {
      put(*v);
    }
  }
  put(w.final_norm_weight);
  put(w.final_norm_bias);
  put(w.unembedding);
  util::write_file_atomic(path, out.buffer());
}

TransformerWeights load_weights(const std::filesystem::path& path) {
  util::BinaryReader in(util::read_file(path));
  char magic[8];
  in.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kWeightsMagic, sizeof magic) != 0) {
    throw VersionError("'" + path.string() + "' is not a KEENMDL1 weight file");
  }
  if (const auto v = in.u32(); v != kWeightsVersion) {
    throw VersionError("unsupported weight file version " + std::to_string(v));
  }
  TransformerWeights w;
  auto& c = w.config;
  c.model_id = in.str();
  c.num_layers = in.i32();
  c.hidden_dim = in.i32();
  c.num_heads = in.i32();
  c.mlp_dim = in.i32();
  c.vocab_size = in.i32();
  c.max_positions = in.i32();
  c.norm = static_cast<NormKind>(in.u32());
  c.norm_eps = in.f64();
  if (c.num_layers < 1 || c.hidden_dim < 1 || c.mlp_dim < 1 || c.vocab_size < 1 || c.max_positions < 1) {
    throw ShapeError("weight file has non-positive dimensions");
  }
  const auto d = static_cast<std::size_t>(c.hidden_dim);
  const auto m = static_cast<std::size_t>(c.mlp_dim);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  auto get = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    in.f64s(v.data(), n);
  };
  get(w.token_embedding, V * d);
  get(w.position_embedding, static_cast<std::size_t>(c.max_positions) * d);
  w.blocks.resize(static_cast<std::size_t>(c.num_layers));
  for (auto& b : w.blocks) {
    get(b.ln1_weight, d);
    get(b.ln1_bias, d);
    get(b.qkv_weight, 3 * d * d);
    get(b.qkv_bias, 3 * d);
    get(b.attn_out_weight, d * d);
    get(b.attn_out_bias, d);
    get(b.ln2_weight, d);
    get(b.ln2_bias, d);
    get(b.fc_weight, m * d);
    get(b.fc_bias, m);
    get(b.fc_out_weight, d * m);
    get(b.fc_out_bias, d);
  }
  get(w.final_norm_weight, d);
  get(w.final_norm_bias, d);
  get(w.unembedding, V * d);
  if (!in.at_end()) throw ShapeError("trailing bytes in weight file");
  w.validate();
  return w;
}

TransformerWeights load_llmc_checkpoint(const std::filesystem::path& path, const std::string& model_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::int32_t header[256];
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] != 20240326) throw VersionError("'" + path.string() + "' is not an llm.c checkpoint");
  if (header[1] != 1 && header[1] != 3) {
    throw VersionError("llm.c checkpoint version " + std::to_string(header[1]) + " (only float32 v1/v3)");
  }
  TransformerWeights w;
  auto& c = w.config;
  c.model_id = model_id;
  c.max_positions = header[2];
  c.vocab_size = header[3];
  c.num_layers = header[4];
  c.num_heads = header[5];
  c.hidden_dim = header[6];
  c.mlp_dim = 4 * c.hidden_dim;
  c.norm = NormKind::kLayerNorm;
  c.norm_eps = 1e-5;
  const std::size_t padded_vocab = header[1] == 3 ? static_cast<std::size_t>(header[7])
                                                  : static_cast<std::size_t>(c.vocab_size);
  const auto L = static_cast<std::size_t>(c.num_layers);
  const auto C = static_cast<std::size_t>(c.hidden_dim);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const auto T = static_cast<std::size_t>(c.max_positions);

  auto read = [&](std::size_t n) {
    std::vector<float> f(n);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("checkpoint '" + path.string() + "' is truncated");
    return std::vector<double>(f.begin(), f.end());
  };
  auto slice = [](const std::vector<double>& all, std::size_t layer, std::size_t n) {
    return std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(layer * n),
                               all.begin() + static_cast<std::ptrdiff_t>((layer + 1) * n));
  };

  auto wte = read(padded_vocab * C);
  w.position_embedding = read(T * C);
  const auto ln1w = read(L * C), ln1b = read(L * C);
  const auto qkvw = read(L * 3 * C * C), qkvb = read(L * 3 * C);
  const auto projw = read(L * C * C), projb = read(L * C);
  const auto ln2w = read(L * C), ln2b = read(L * C);
  const auto fcw = read(L * 4 * C * C), fcb = read(L * 4 * C);
  const auto fcpw = read(L * C * 4 * C), fcpb = read(L * C);
  w.final_norm_weight = read(C);
  w.final_norm_bias = read(C);

  wte.resize(V * C);
  w.token_embedding = wte;
  w.unembedding = std::move(wte);
  w.blocks.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    auto& b = w.blocks[l];
    b.ln1_weight = slice(ln1w, l, C);
    b.ln1_bias = slice(ln1b, l, C);
    b.qkv_weight = slice(qkvw, l, 3 * C * C);
    b.qkv_bias = slice(qkvb, l, 3 * C);
    b.attn_out_weight = slice(projw, l, C * C);
    b.attn_out_bias = slice(projb, l, C);
    b.ln2_weight = slice(ln2w, l, C);
    b.ln2_bias = slice(ln2b, l, C);
    b.fc_weight = slice(fcw, l, 4 * C * C);
    b.fc_bias = slice(fcb, l, 4 * C);
    b.fc_out_weight = slice(fcpw, l, C * 4 * C);
    b.fc_out_bias = slice(fcpb, l, C);
  }
  w.validate();
  return w;
}

}  // namespace keen::model
