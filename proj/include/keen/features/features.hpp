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
#include <string_view>
#include <vector>

#include <json.hpp>

#include "keen/model/model_handle.hpp"

namespace keen::features {

inline constexpr std::string_view kFeaturePrompt = "This document describes [s]";

enum class Variant { kHS, kVP, kVPk, kATTN, kFC };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view s);
model::CapabilitySet required_capabilities(Variant v);

struct LayerSet {
  std::vector<int> layers;  // 1-indexed, sorted, distinct

  std::size_t size() const { return layers.size(); }
  bool operator==(const LayerSet&) const = default;
};

// Three consecutive layers centred on round-half-up(3L/4), kept below the
// final layer.
LayerSet select_layers(int num_layers);
LayerSet make_layer_set(std::vector<int> layers, int num_layers);
std::string layer_set_string(const LayerSet& layers);

// Layers actually read by a variant: the band for HS/VP/VP-k, {L} for ATTN/FC.
LayerSet layers_for(Variant v, int num_layers);

// Per-layer raw (pre-normalization) vectors for one subject, layer-major.
struct RawFeatures {
  std::string subject;
  std::vector<double> values;  // layers.size() * dim
};

struct TokenSelection {
  std::vector<int> token_ids;  // descending |weight|
  std::string source_probe_id;
  std::string model_id;

  std::size_t k() const { return token_ids.size(); }
};

TokenSelection select_top_k(std::span<const double> weights, std::size_t k, std::string source_probe_id = {},
                            std::string model_id = {});

struct NormalizerStats {
  Variant variant = Variant::kHS;
  LayerSet layers;
  std::size_t dim = 0;
  std::vector<double> min;  // layers.size() * dim
  std::vector<double> max;
  std::string fitted_on;  // hash of the subject list
  std::vector<int> token_ids;  // VP-k only

  std::size_t entries() const { return layers.size() * dim; }
};

std::string subject_list_hash(std::span<const std::string> subjects);

NormalizerStats fit_normalizer(std::span<const RawFeatures> train, Variant variant, const LayerSet& layers,
                               std::size_t dim);

// VP-k stats taken from the matching VP columns instead of a refit.
NormalizerStats restrict_stats(const NormalizerStats& vp_stats, const TokenSelection& selection);

// (x - min) / (max - min), 0 when max == min, clamped to [0,1].
std::vector<double> apply_normalizer(const NormalizerStats& stats, std::span<const double> raw,
                                     const LayerSet& layers);

// Elementwise mean over layers of a layer-major block.
std::vector<double> average_layers(std::span<const double> per_layer, std::size_t n_layers, std::size_t dim);

struct FeatureVector {
  std::string subject;
  Variant variant = Variant::kHS;
  std::vector<double> values;
  LayerSet layers;
  std::string model_id;
  std::string normalizer_ref;  // NormalizerStats::fitted_on
};

FeatureVector finalize(const NormalizerStats& stats, const RawFeatures& raw, std::string model_id = {});

// Raw per-layer vectors read out of a trace at position s_r.
std::vector<double> raw_hs(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r);
std::vector<double> raw_vp(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                           const model::ModelHandle& model);
std::vector<double> raw_vpk(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                            const model::ModelHandle& model, const TokenSelection& selection);
std::vector<double> raw_attn(const model::ForwardTrace& trace, std::size_t s_r);
std::vector<double> raw_fc(const model::ForwardTrace& trace, std::size_t s_r);

FeatureVector build_hs(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                       const NormalizerStats& stats);
FeatureVector build_vp(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                       const model::ModelHandle& model, const NormalizerStats& stats);
FeatureVector build_vpk(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                        const model::ModelHandle& model, const TokenSelection& selection,
                        const NormalizerStats& stats_k);
FeatureVector build_attn(const model::ForwardTrace& trace, std::size_t s_r, const NormalizerStats& stats);
FeatureVector build_fc(const model::ForwardTrace& trace, std::size_t s_r, const NormalizerStats& stats);

struct ExtractOptions {
  Variant variant = Variant::kHS;
  LayerSet layers;  // empty = layers_for(variant, L)
  const TokenSelection* selection = nullptr;  // VP-k
  std::string prompt_template{kFeaturePrompt};
  int jobs = 1;
};

std::size_t feature_dim(Variant v, const model::ModelHandle& model, const TokenSelection* selection);

// Runs the feature prompt for each subject and returns raw vectors in input order.
std::vector<RawFeatures> extract_raw(const model::ModelHandle& model, std::span<const std::string> subjects,
                                     const ExtractOptions& options);

// Feature cache files ("KEENFTR1").
struct FeatureCache {
  std::string model_id;
  Variant variant = Variant::kHS;
  LayerSet layers;
  std::size_t dim = 0;  // per layer
  std::vector<std::uint64_t> ids;
  std::vector<std::vector<double>> vectors;
  std::vector<int> token_ids;  // VP-k selection

  // Looks up the raw vector by subject; throws CoverageError when absent.
  RawFeatures raw_for(const std::string& subject) const;
};

void save_feature_cache(const std::filesystem::path& path, const FeatureCache& cache);
FeatureCache load_feature_cache(const std::filesystem::path& path);
FeatureCache make_feature_cache(const model::ModelHandle& model, const ExtractOptions& options,
                                std::span<const RawFeatures> raw);

nlohmann::json to_json(const NormalizerStats& stats);
NormalizerStats stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TokenSelection& s);
TokenSelection selection_from_json(const nlohmann::json& j);

}  // namespace keen::features
