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

#include "keen/features/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

#include "keen/error.hpp"
#include "keen/simd/kernels.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"
#include "keen/util/parallel.hpp"

namespace keen::features {
namespace {

constexpr char kCacheMagic[8] = {'K', 'E', 'E', 'N', 'F', 'T', 'R', '1'};

std::size_t layer_slot(const LayerSet& stats_layers, int layer) {
  auto it = std::find(stats_layers.layers.begin(), stats_layers.layers.end(), layer);
  if (it == stats_layers.layers.end()) {
    throw CoverageError("normalizer has no statistics for layer " + std::to_string(layer));
  }
  return static_cast<std::size_t>(it - stats_layers.layers.begin());
}

void check_position(const model::ForwardTrace& trace, std::size_t s_r) {
  if (s_r >= trace.num_positions()) {
    throw BoundsError("subject position " + std::to_string(s_r) + " outside a prompt of " +
                      std::to_string(trace.num_positions()) + " tokens");
  }
}

void check_layers_in_trace(const model::ForwardTrace& trace, const LayerSet& layers) {
  for (int l : layers.layers) {
    if (l < 1 || l > trace.num_layers()) {
      throw CoverageError("layer " + std::to_string(l) + " is not in a trace of " +
                          std::to_string(trace.num_layers()) + " layers");
    }
  }
}

void check_provenance(const model::ModelHandle& model, const TokenSelection& selection) {
  if (selection.token_ids.empty()) throw SizingError("empty token selection");
  if (!selection.model_id.empty() && selection.model_id != model.model_id()) {
    throw ProvenanceError("token selection was made for model '" + selection.model_id + "', not '" +
                          model.model_id() + "'");
  }
  for (int id : selection.token_ids) {
    if (id < 0 || id >= model.vocab_size()) {
      throw ProvenanceError("selected token id " + std::to_string(id) + " outside the model vocabulary");
    }
  }
}

FeatureVector finish(const NormalizerStats& stats, const LayerSet& layers, std::vector<double> raw,
                     std::string model_id) {
  FeatureVector out;
  out.variant = stats.variant;
  out.layers = layers;
  out.model_id = std::move(model_id);
  out.normalizer_ref = stats.fitted_on;
  out.values = average_layers(apply_normalizer(stats, raw, layers), layers.size(), stats.dim);
  return out;
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kHS:
      return "HS";
    case Variant::kVP:
      return "VP";
    case Variant::kVPk:
      return "VP-k";
    case Variant::kATTN:
      return "ATTN";
    case Variant::kFC:
      return "FC";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  for (Variant v : {Variant::kHS, Variant::kVP, Variant::kVPk, Variant::kATTN, Variant::kFC}) {
    if (s == variant_name(v)) return v;
  }
  if (s == "hs") return Variant::kHS;
  if (s == "vp") return Variant::kVP;
  if (s == "vpk" || s == "vp-k" || s == "VPk") return Variant::kVPk;
  if (s == "attn") return Variant::kATTN;
  if (s == "fc") return Variant::kFC;
  throw ConfigError("unknown feature variant '" + std::string(s) + "' (HS, VP, VP-k, ATTN, FC)");
}

model::CapabilitySet required_capabilities(Variant v) {
  using model::Capability;
  switch (v) {
    case Variant::kHS:
      return {Capability::kHiddenStates};
    case Variant::kVP:
    case Variant::kVPk:
      return {Capability::kHiddenStates, Capability::kUnembed, Capability::kFinalNorm};
    case Variant::kATTN:
      return {Capability::kAttnOutputs};
    case Variant::kFC:
      return {Capability::kMlpOutputs};
  }
  return {};
}

LayerSet select_layers(int num_layers) {
  if (num_layers < 4) throw SizingError("layer selection needs at least 4 layers, got " + std::to_string(num_layers));
  // round-half-up(3L/4) in integers
  int centre = (3 * num_layers * 2 + 4) / 8;
  centre = std::min(centre, num_layers - 2);
  return {{centre - 1, centre, centre + 1}};
}

LayerSet make_layer_set(std::vector<int> layers, int num_layers) {
  if (layers.empty()) throw SizingError("empty layer set");
  std::sort(layers.begin(), layers.end());
  if (std::adjacent_find(layers.begin(), layers.end()) != layers.end()) {
    throw ConfigError("layer set has repeated layers");
  }
  for (int l : layers) {
    if (l < 1 || l > num_layers) {
      throw BoundsError("layer " + std::to_string(l) + " outside [1, " + std::to_string(num_layers) + "]");
    }
  }
  return {std::move(layers)};
}

std::string layer_set_string(const LayerSet& layers) {
  std::string s;
  for (int l : layers.layers) s += (s.empty() ? "" : ",") + std::to_string(l);
  return s;
}

LayerSet layers_for(Variant v, int num_layers) {
  if (v == Variant::kATTN || v == Variant::kFC) return {{num_layers}};
  return select_layers(num_layers);
}

TokenSelection select_top_k(std::span<const double> weights, std::size_t k, std::string source_probe_id,
                            std::string model_id) {
  if (k < 1 || k > weights.size()) {
    throw SizingError("k = " + std::to_string(k) + " outside [1, " + std::to_string(weights.size()) + "]");
  }
  std::vector<int> ids(weights.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), [&](int a, int b) {
    const double wa = std::abs(weights[static_cast<std::size_t>(a)]);
    const double wb = std::abs(weights[static_cast<std::size_t>(b)]);
    return wa != wb ? wa > wb : a < b;
  });
  ids.resize(k);
  return {std::move(ids), std::move(source_probe_id), std::move(model_id)};
}

std::string subject_list_hash(std::span<const std::string> subjects) {
  std::vector<std::string> sorted(subjects.begin(), subjects.end());
  std::sort(sorted.begin(), sorted.end());
  std::string joined;
  for (const auto& s : sorted) {
    joined += s;
    joined.push_back('\n');
  }
  return util::sha256_hex(joined);
}

NormalizerStats fit_normalizer(std::span<const RawFeatures> train, Variant variant, const LayerSet& layers,
                               std::size_t dim) {
  if (train.size() < 2) {
    throw SizingError("normalizer needs at least 2 training subjects, got " + std::to_string(train.size()));
  }
  NormalizerStats stats;
  stats.variant = variant;
  stats.layers = layers;
  stats.dim = dim;
  const std::size_t n = layers.size() * dim;
  for (const auto& r : train) {
    if (r.values.size() != n) {
      throw ShapeError("raw features for '" + r.subject + "' have " + std::to_string(r.values.size()) +
                       " values, expected " + std::to_string(n));
    }
  }
  stats.min = train.front().values;
  stats.max = train.front().values;
  const auto& k = simd::active();
  for (std::size_t i = 1; i < train.size(); ++i) k.minmax_update(train[i].values.data(), stats.min.data(), stats.max.data(), n);
  std::vector<std::string> names;
  for (const auto& r : train) names.push_back(r.subject);
  stats.fitted_on = subject_list_hash(names);
  return stats;
}

NormalizerStats restrict_stats(const NormalizerStats& vp_stats, const TokenSelection& selection) {
  if (vp_stats.variant != Variant::kVP) throw ProvenanceError("VP-k stats can only be restricted from VP stats");
  NormalizerStats out;
  out.variant = Variant::kVPk;
  out.layers = vp_stats.layers;
  out.dim = selection.k();
  out.fitted_on = vp_stats.fitted_on;
  out.token_ids = selection.token_ids;
  for (std::size_t l = 0; l < vp_stats.layers.size(); ++l) {
    for (int id : selection.token_ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= vp_stats.dim) {
        throw CoverageError("token " + std::to_string(id) + " has no VP statistics");
      }
      out.min.push_back(vp_stats.min[l * vp_stats.dim + static_cast<std::size_t>(id)]);
      out.max.push_back(vp_stats.max[l * vp_stats.dim + static_cast<std::size_t>(id)]);
    }
  }
  return out;
}

std::vector<double> apply_normalizer(const NormalizerStats& stats, std::span<const double> raw,
                                     const LayerSet& layers) {
  if (raw.size() != layers.size() * stats.dim) {
    throw ShapeError("expected " + std::to_string(layers.size() * stats.dim) + " raw values, got " +
                     std::to_string(raw.size()));
  }
  std::vector<double> out(raw.size());
  const auto& k = simd::active();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t slot = layer_slot(stats.layers, layers.layers[l]);
    const std::size_t src = slot * stats.dim;
    const std::size_t dst = l * stats.dim;
    k.minmax_scale(raw.data() + dst, stats.min.data() + src, stats.max.data() + src, out.data() + dst, stats.dim,
                   true);
  }
  return out;
}

std::vector<double> average_layers(std::span<const double> per_layer, std::size_t n_layers, std::size_t dim) {
  if (n_layers == 0 || per_layer.size() != n_layers * dim) throw ShapeError("layer block has the wrong size");
  std::vector<double> out(per_layer.begin(), per_layer.begin() + static_cast<std::ptrdiff_t>(dim));
  for (std::size_t l = 1; l < n_layers; ++l) {
    for (std::size_t i = 0; i < dim; ++i) out[i] += per_layer[l * dim + i];
  }
  const double n = static_cast<double>(n_layers);
  for (auto& v : out) v /= n;
  return out;
}

FeatureVector finalize(const NormalizerStats& stats, const RawFeatures& raw, std::string model_id) {
  FeatureVector out = finish(stats, stats.layers, raw.values, std::move(model_id));
  out.subject = raw.subject;
  return out;
}

std::vector<double> raw_hs(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r) {
  check_position(trace, s_r);
  check_layers_in_trace(trace, layers);
  if (!trace.captured().has(model::Capability::kHiddenStates)) {
    throw CapabilityError("trace has no hidden states (hidden_states hook)");
  }
  std::vector<double> out;
  out.reserve(layers.size() * static_cast<std::size_t>(trace.hidden_dim()));
  for (int l : layers.layers) {
    auto h = trace.hidden(l, s_r);
    out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

std::vector<double> raw_vp(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                           const model::ModelHandle& model) {
  model.require(required_capabilities(Variant::kVP));
  const auto hs = raw_hs(trace, layers, s_r);
  const std::size_t d = static_cast<std::size_t>(trace.hidden_dim());
  std::vector<double> out;
  out.reserve(layers.size() * static_cast<std::size_t>(model.vocab_size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto logits = model::unembed_project(model, std::span<const double>(hs).subspan(l * d, d));
    out.insert(out.end(), logits.begin(), logits.end());
  }
  return out;
}

std::vector<double> raw_vpk(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                            const model::ModelHandle& model, const TokenSelection& selection) {
  check_provenance(model, selection);
  const auto vp = raw_vp(trace, layers, s_r, model);
  const std::size_t v = static_cast<std::size_t>(model.vocab_size());
  std::vector<double> out;
  out.reserve(layers.size() * selection.k());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (int id : selection.token_ids) out.push_back(vp[l * v + static_cast<std::size_t>(id)]);
  }
  return out;
}

namespace {
std::vector<double> raw_sublayer(const model::ForwardTrace& trace, std::size_t s_r, model::Capability cap) {
  check_position(trace, s_r);
  if (!trace.captured().has(cap)) {
    throw CapabilityError(std::string("trace has no ") + std::string(model::capability_name(cap)) + " capture");
  }
  const int last = trace.num_layers();
  auto v = cap == model::Capability::kAttnOutputs ? trace.attn(last, s_r) : trace.mlp(last, s_r);
  return {v.begin(), v.end()};
}
}  // namespace

std::vector<double> raw_attn(const model::ForwardTrace& trace, std::size_t s_r) {
  return raw_sublayer(trace, s_r, model::Capability::kAttnOutputs);
}

std::vector<double> raw_fc(const model::ForwardTrace& trace, std::size_t s_r) {
  return raw_sublayer(trace, s_r, model::Capability::kMlpOutputs);
}

FeatureVector build_hs(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                       const NormalizerStats& stats) {
  return finish(stats, layers, raw_hs(trace, layers, s_r), {});
}

FeatureVector build_vp(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                       const model::ModelHandle& model, const NormalizerStats& stats) {
  return finish(stats, layers, raw_vp(trace, layers, s_r, model), model.model_id());
}

FeatureVector build_vpk(const model::ForwardTrace& trace, const LayerSet& layers, std::size_t s_r,
                        const model::ModelHandle& model, const TokenSelection& selection,
                        const NormalizerStats& stats_k) {
  if (stats_k.token_ids != selection.token_ids) {
    throw ProvenanceError("VP-k statistics were fitted for a different token selection");
  }
  return finish(stats_k, layers, raw_vpk(trace, layers, s_r, model, selection), model.model_id());
}

FeatureVector build_attn(const model::ForwardTrace& trace, std::size_t s_r, const NormalizerStats& stats) {
  return finish(stats, {{trace.num_layers()}}, raw_attn(trace, s_r), {});
}

FeatureVector build_fc(const model::ForwardTrace& trace, std::size_t s_r, const NormalizerStats& stats) {
  return finish(stats, {{trace.num_layers()}}, raw_fc(trace, s_r), {});
}

std::size_t feature_dim(Variant v, const model::ModelHandle& model, const TokenSelection* selection) {
  switch (v) {
    case Variant::kVP:
      return static_cast<std::size_t>(model.vocab_size());
    case Variant::kVPk:
      if (selection == nullptr) throw ConfigError("VP-k extraction needs a token selection");
      return selection->k();
    default:
      return static_cast<std::size_t>(model.hidden_dim());
  }
}

std::vector<RawFeatures> extract_raw(const model::ModelHandle& model, std::span<const std::string> subjects,
                                     const ExtractOptions& options) {
  const Variant v = options.variant;
  model.require(required_capabilities(v));
  if (v == Variant::kVPk) {
    if (options.selection == nullptr) throw ConfigError("VP-k extraction needs a token selection");
    check_provenance(model, *options.selection);
  }
  const LayerSet layers = options.layers.layers.empty() ? layers_for(v, model.num_layers()) : options.layers;
  const auto capture = (v == Variant::kATTN || v == Variant::kFC) ? required_capabilities(v)
                                                                   : model::CapabilitySet{model::Capability::kHiddenStates};

  std::vector<RawFeatures> out(subjects.size());
  auto one = [&](std::size_t i) {
    const auto loc = model::locate_last_subject_token(model, options.prompt_template, subjects[i]);
    model::ForwardRequest req;
    req.capture = capture;
    const auto trace = model.forward(loc.token_ids, req).trace;
    const std::size_t s_r = loc.last_subject_index;
    out[i].subject = subjects[i];
    switch (v) {
      case Variant::kHS:
        out[i].values = raw_hs(trace, layers, s_r);
        break;
      case Variant::kVP:
        out[i].values = raw_vp(trace, layers, s_r, model);
        break;
      case Variant::kVPk:
        out[i].values = raw_vpk(trace, layers, s_r, model, *options.selection);
        break;
      case Variant::kATTN:
        out[i].values = raw_attn(trace, s_r);
        break;
      case Variant::kFC:
        out[i].values = raw_fc(trace, s_r);
        break;
    }
  };

  util::parallel_for(subjects.size(), options.jobs, one);
  return out;
}

RawFeatures FeatureCache::raw_for(const std::string& subject) const {
  const std::uint64_t id = util::stable_id(subject);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return {subject, vectors[i]};
  }
  throw CoverageError("feature cache has no entry for subject '" + subject + "'");
}

FeatureCache make_feature_cache(const model::ModelHandle& model, const ExtractOptions& options,
                                std::span<const RawFeatures> raw) {
  FeatureCache c;
  c.model_id = model.model_id();
  c.variant = options.variant;
  c.layers = options.layers.layers.empty() ? layers_for(options.variant, model.num_layers()) : options.layers;
  c.dim = feature_dim(options.variant, model, options.selection);
  if (options.selection != nullptr && options.variant == Variant::kVPk) c.token_ids = options.selection->token_ids;
  for (const auto& r : raw) {
    c.ids.push_back(util::stable_id(r.subject));
    c.vectors.push_back(r.values);
  }
  return c;
}

void save_feature_cache(const std::filesystem::path& path, const FeatureCache& cache) {
  util::BinaryWriter w;
  w.bytes(kCacheMagic, sizeof kCacheMagic);
  w.str(cache.model_id);
  w.str(std::string(variant_name(cache.variant)));
  w.u32(static_cast<std::uint32_t>(cache.layers.size()));
  for (int l : cache.layers.layers) w.i32(l);
  w.u64(cache.dim);
  w.u64(cache.ids.size());
  w.u32(static_cast<std::uint32_t>(cache.token_ids.size()));
  for (int id : cache.token_ids) w.i32(id);
  const std::size_t n = cache.layers.size() * cache.dim;
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    if (cache.vectors[i].size() != n) throw ShapeError("feature cache record has the wrong length");
    w.u64(cache.ids[i]);
    w.f64s(cache.vectors[i].data(), n);
  }
  util::write_file_atomic(path, w.buffer());
}

FeatureCache load_feature_cache(const std::filesystem::path& path) {
  util::BinaryReader r(util::read_file(path));
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kCacheMagic, sizeof magic) != 0) {
    throw VersionError("'" + path.string() + "' is not a KEENFTR1 feature cache");
  }
  FeatureCache c;
  c.model_id = r.str();
  c.variant = parse_variant(r.str());
  const std::uint32_t nl = r.u32();
  for (std::uint32_t i = 0; i < nl; ++i) c.layers.layers.push_back(r.i32());
  c.dim = r.u64();
  const std::uint64_t ns = r.u64();
  const std::uint32_t nk = r.u32();
  for (std::uint32_t i = 0; i < nk; ++i) c.token_ids.push_back(r.i32());
  const std::size_t n = c.layers.size() * c.dim;
  for (std::uint64_t i = 0; i < ns; ++i) {
    c.ids.push_back(r.u64());
    std::vector<double> v(n);
    r.f64s(v.data(), n);
    c.vectors.push_back(std::move(v));
  }
  if (!r.at_end()) throw IoError("trailing bytes in feature cache '" + path.string() + "'");
  return c;
}

nlohmann::json to_json(const NormalizerStats& s) {
  nlohmann::json j = {{"variant", variant_name(s.variant)}, {"layers", s.layers.layers}, {"dim", s.dim},
                      {"min", s.min},                       {"max", s.max},              {"fitted_on", s.fitted_on}};
  if (!s.token_ids.empty()) j["token_ids"] = s.token_ids;
  return j;
}

NormalizerStats stats_from_json(const nlohmann::json& j) {
  NormalizerStats s;
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.layers.layers = j.at("layers").get<std::vector<int>>();
  s.dim = j.at("dim").get<std::size_t>();
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  s.fitted_on = j.value("fitted_on", std::string{});
  s.token_ids = j.value("token_ids", std::vector<int>{});
  if (s.min.size() != s.entries() || s.max.size() != s.entries()) {
    throw CoverageError("normalizer statistics do not cover every (layer, index) pair");
  }
  for (std::size_t i = 0; i < s.min.size(); ++i) {
    if (!(s.min[i] <= s.max[i])) throw RangeError("normalizer entry with min > max");
  }
  return s;
}

nlohmann::json to_json(const TokenSelection& s) {
  return {{"token_ids", s.token_ids}, {"source_probe_id", s.source_probe_id}, {"model_id", s.model_id}};
}

TokenSelection selection_from_json(const nlohmann::json& j) {
  TokenSelection s{j.at("token_ids").get<std::vector<int>>(), j.value("source_probe_id", std::string{}),
                   j.value("model_id", std::string{})};
  std::vector<int> sorted = s.token_ids;
  std::sort(sorted.begin(), sorted.end());
  if (sorted.empty() || std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("token selection must be non-empty with distinct ids");
  }
  return s;
}

}  // namespace keen::features
