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

#include "keen/model/registry.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

#include "keen/error.hpp"
#include "keen/util/rng.hpp"

#ifndef KEEN_SOURCE_DATA_DIR
#define KEEN_SOURCE_DATA_DIR "data"
#endif

namespace keen::model {
namespace {

std::vector<double> normal_vec(util::Rng& rng, std::size_t n, double mean, double stddev) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(mean, stddev);
  return v;
}

std::filesystem::path resolve(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  if (const char* root = std::getenv("KEEN_MODEL_PATH"); root != nullptr) return std::filesystem::path(root) / path;
  return path;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

}  // namespace

TransformerWeights make_mock_weights(std::uint64_t seed) {
  util::Rng rng(seed);
  TransformerWeights w;
  auto& c = w.config;
  c.model_id = "mock-l4-d8-v16-seed" + std::to_string(seed);
  c.num_layers = 4;
  c.hidden_dim = 8;
  c.num_heads = 2;
  c.mlp_dim = 32;
  c.vocab_size = 16;
  c.max_positions = 64;
  c.norm = NormKind::kLayerNorm;
  c.norm_eps = 1e-5;
  const auto d = static_cast<std::size_t>(c.hidden_dim);
  const auto m = static_cast<std::size_t>(c.mlp_dim);
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(d));

  w.token_embedding = normal_vec(rng, V * d, 0.0, 1.0);
  w.position_embedding = normal_vec(rng, static_cast<std::size_t>(c.max_positions) * d, 0.0, 0.3);
  w.blocks.resize(static_cast<std::size_t>(c.num_layers));
  for (auto& b : w.blocks) {
    b.ln1_weight = normal_vec(rng, d, 1.0, 0.1);
    b.ln1_bias = normal_vec(rng, d, 0.0, 0.1);
    b.qkv_weight = normal_vec(rng, 3 * d * d, 0.0, in_scale);
    b.qkv_bias = normal_vec(rng, 3 * d, 0.0, 0.02);
    b.attn_out_weight = normal_vec(rng, d * d, 0.0, 0.5 * in_scale);
    b.attn_out_bias = normal_vec(rng, d, 0.0, 0.02);
    b.ln2_weight = normal_vec(rng, d, 1.0, 0.1);
    b.ln2_bias = normal_vec(rng, d, 0.0, 0.1);
    b.fc_weight = normal_vec(rng, m * d, 0.0, in_scale);
    b.fc_bias = normal_vec(rng, m, 0.0, 0.02);
    b.fc_out_weight = normal_vec(rng, d * m, 0.0, 0.5 / std::sqrt(static_cast<double>(m)));
    b.fc_out_bias = normal_vec(rng, d, 0.0, 0.02);
  }
  w.final_norm_weight = normal_vec(rng, d, 1.0, 0.1);
  w.final_norm_bias = normal_vec(rng, d, 0.0, 0.1);
  w.unembedding = normal_vec(rng, V * d, 0.0, 1.0);
  w.validate();
  return w;
}

TransformerWeights perturb_block(const TransformerWeights& base, int layer, double scale, std::uint64_t seed) {
  if (layer < 1 || layer > base.config.num_layers) throw BoundsError("perturbed layer out of range");
  TransformerWeights w = base;
  util::Rng rng(seed);
  auto& b = w.blocks[static_cast<std::size_t>(layer - 1)];
  for (auto& x : b.fc_weight) x += rng.normal(0.0, scale);
  for (auto& x : b.fc_out_weight) x += rng.normal(0.0, scale);
  w.config.model_id += "+perturb(l" + std::to_string(layer) + ",s" + std::to_string(scale) + ",seed" +
                       std::to_string(seed) + ")";
  return w;
}

std::filesystem::path data_dir() {
  if (const char* dir = std::getenv("KEEN_DATA_DIR"); dir != nullptr) return dir;
  return KEEN_SOURCE_DATA_DIR;
}

std::filesystem::path mock_fixture_path() { return data_dir() / "mock_model.keenmdl"; }

std::shared_ptr<ModelHandle> make_model(TransformerWeights weights, CapabilitySet capabilities) {
  auto backend = std::make_shared<TransformerBackend>(std::move(weights), std::make_shared<MockTokenizer>(),
                                                      capabilities);
  return std::make_shared<ModelHandle>(std::move(backend));
}

std::shared_ptr<ModelHandle> make_mock_model(CapabilitySet capabilities) {
  const auto path = mock_fixture_path();
  TransformerWeights w = std::filesystem::exists(path) ? load_weights(path) : make_mock_weights();
  return make_model(std::move(w), capabilities);
}

std::shared_ptr<ModelHandle> load_model(const std::string& spec) {
  if (spec == "mock") return make_mock_model();
  if (spec == "mock-nohooks") {
    return make_mock_model(CapabilitySet::all().without(Capability::kAttnOutputs).without(Capability::kMlpOutputs));
  }
  if (spec.rfind("mock-perturbed:", 0) == 0) {
    const auto parts = split(spec, ':');
    if (parts.size() != 4) throw ConfigError("expected mock-perturbed:LAYER:SCALE:SEED, got '" + spec + "'");
    const TransformerWeights base =
        std::filesystem::exists(mock_fixture_path()) ? load_weights(mock_fixture_path()) : make_mock_weights();
    return make_model(perturb_block(base, std::stoi(parts[1]), std::stod(parts[2]), std::stoull(parts[3])));
  }
  if (spec.rfind("gpt2:", 0) == 0) {
    const auto dir = resolve(spec.substr(5));
    std::filesystem::path ckpt = dir / "model.bin";
    if (!std::filesystem::exists(ckpt)) {
      ckpt.clear();
      for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".bin" && (ckpt.empty() || entry.path() < ckpt)) ckpt = entry.path();
      }
      if (ckpt.empty()) throw ConfigError("no llm.c checkpoint (*.bin) in '" + dir.string() + "'");
    }
    auto tok = BpeTokenizer::from_files(dir / "encoder.json", dir / "vocab.bpe");
    auto weights = load_llmc_checkpoint(ckpt, "gpt2:" + ckpt.stem().string());
    auto backend = std::make_shared<TransformerBackend>(std::move(weights), std::move(tok));
    return std::make_shared<ModelHandle>(std::move(backend));
  }
  std::string path = spec;
  if (spec.rfind("keenmdl:", 0) == 0) path = spec.substr(8);
  const auto resolved = resolve(path);
  if (!std::filesystem::exists(resolved)) throw ConfigError("unknown model spec '" + spec + "'");
  return make_model(load_weights(resolved));
}

}  // namespace keen::model
