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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace keen::model {

enum class NormKind : std::uint32_t { kLayerNorm = 0, kRmsNorm = 1, kIdentity = 2 };

struct TransformerConfig {
  std::string model_id;
  int num_layers = 0;
  int hidden_dim = 0;
  int num_heads = 1;
  int mlp_dim = 0;
  int vocab_size = 0;
  int max_positions = 0;
  NormKind norm = NormKind::kLayerNorm;
  double norm_eps = 1e-5;
};

// Row-major weights of one pre-norm block. Linear maps are stored as
// (out, in) so y = W x + b.
struct BlockWeights {
  std::vector<double> ln1_weight, ln1_bias;        // d
  std::vector<double> qkv_weight, qkv_bias;        // 3d x d, 3d
  std::vector<double> attn_out_weight, attn_out_bias;  // d x d, d
  std::vector<double> ln2_weight, ln2_bias;        // d
  std::vector<double> fc_weight, fc_bias;          // m x d, m
  std::vector<double> fc_out_weight, fc_out_bias;  // d x m, d
};

struct TransformerWeights {
  TransformerConfig config;
  std::vector<double> token_embedding;     // V x d
  std::vector<double> position_embedding;  // max_positions x d
  std::vector<BlockWeights> blocks;        // L entries
  std::vector<double> final_norm_weight, final_norm_bias;  // d
  std::vector<double> unembedding;         // V x d

  // Throws ShapeError on any size inconsistency.
  void validate() const;
};

// Receives every block's sublayer outputs in layer-major order. The hidden
// vector is mutable: writes take effect before the next block runs.
class BlockObserver {
 public:
  virtual ~BlockObserver() = default;
  virtual void on_embedding(std::size_t /*position*/, std::span<const double> /*hidden*/) {}
  virtual void on_block(int /*layer*/, std::size_t /*position*/, std::span<const double> /*attn*/,
                        std::span<const double> /*mlp*/, std::span<double> /*hidden*/) {}
};

// Keys and values per layer for incremental decoding.
struct KvCache {
  std::vector<std::vector<double>> keys;    // per layer, T x d
  std::vector<std::vector<double>> values;  // per layer, T x d
  std::size_t length = 0;
};

// Decoder-only transformer with GPT-2 block structure:
//   a = Attn(N1(h)), m = MLP(N2(h + a)), h' = h + a + m.
// All arithmetic is in double precision.
class Transformer {
 public:
  explicit Transformer(TransformerWeights weights);

  const TransformerConfig& config() const { return w_.config; }
  const TransformerWeights& weights() const { return w_; }

  KvCache make_cache() const;

  // Runs the new tokens at positions cache.length.. through every block,
  // appending to the cache. Returns the final hidden state (after block L) of
  // each new position, row-major (n x d).
  std::vector<double> forward(std::span<const int> ids, KvCache& cache,
                              BlockObserver* observer = nullptr) const;

  // Building blocks, exposed for oracle tests that recompute a pass by hand.
  std::vector<double> embed(std::span<const int> ids, std::size_t first_position) const;
  // Full-sequence block over hidden rows (T x d) without a cache. Writes the
  // attention and MLP outputs when the pointers are non-null.
  std::vector<double> block(int layer, std::span<const double> hidden, std::size_t rows,
                            std::vector<double>* attn_out = nullptr,
                            std::vector<double>* mlp_out = nullptr) const;

  void final_norm(std::span<const double> h, std::span<double> out) const;
  // W_U f_L(h).
  std::vector<double> logits(std::span<const double> h) const;

 private:
  void norm(std::span<const double> x, const std::vector<double>& weight,
            const std::vector<double>& bias, std::span<double> out) const;

  TransformerWeights w_;
};

double gelu(double x);

// KEENMDL1 weight files (the mock fixture format).
void save_weights(const TransformerWeights& w, const std::filesystem::path& path);
TransformerWeights load_weights(const std::filesystem::path& path);

// llm.c GPT-2 checkpoints (float32, header versions 1 and 3). The
// unembedding is tied to the token embedding.
TransformerWeights load_llmc_checkpoint(const std::filesystem::path& path,
                                        const std::string& model_id);

}  // namespace keen::model
