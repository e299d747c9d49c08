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
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "keen/model/tokenizer.hpp"
#include "keen/model/transformer.hpp"

namespace keen::model {

enum class Capability : std::uint32_t {
  kHiddenStates = 1u << 0,
  kAttnOutputs = 1u << 1,
  kMlpOutputs = 1u << 2,
  kUnembed = 1u << 3,
  kFinalNorm = 1u << 4,
  kPatching = 1u << 5,
};

class CapabilitySet {
 public:
  constexpr CapabilitySet() = default;
  constexpr CapabilitySet(std::initializer_list<Capability> caps) {
    for (auto c : caps) bits_ |= static_cast<std::uint32_t>(c);
  }
  static constexpr CapabilitySet from_bits(std::uint32_t bits) {
    CapabilitySet s;
    s.bits_ = bits;
    return s;
  }
  static constexpr CapabilitySet all() { return from_bits(0x3F); }

  constexpr bool has(Capability c) const { return (bits_ & static_cast<std::uint32_t>(c)) != 0; }
  constexpr bool contains(CapabilitySet other) const { return (bits_ & other.bits_) == other.bits_; }
  constexpr CapabilitySet without(Capability c) const {
    return from_bits(bits_ & ~static_cast<std::uint32_t>(c));
  }
  constexpr std::uint32_t bits() const { return bits_; }
  constexpr bool operator==(const CapabilitySet&) const = default;

 private:
  std::uint32_t bits_ = 0;
};

std::string_view capability_name(Capability c);

// Hidden states for layers 0..L (0 = embedding output) and sublayer outputs
// for layers 1..L, for every prompt position.
class ForwardTrace {
 public:
  ForwardTrace() = default;
  ForwardTrace(std::vector<int> token_ids, int num_layers, int hidden_dim, CapabilitySet captured);

  const std::vector<int>& token_ids() const { return token_ids_; }
  std::size_t num_positions() const { return token_ids_.size(); }
  int num_layers() const { return num_layers_; }
  int hidden_dim() const { return hidden_dim_; }
  CapabilitySet captured() const { return captured_; }

  std::span<const double> hidden(int layer, std::size_t position) const;
  std::span<const double> attn(int layer, std::size_t position) const;
  std::span<const double> mlp(int layer, std::size_t position) const;
  std::span<double> hidden_mut(int layer, std::size_t position);
  std::span<double> attn_mut(int layer, std::size_t position);
  std::span<double> mlp_mut(int layer, std::size_t position);

  // Raw storage, [layer][position][d]; hidden has L+1 layers.
  const std::vector<double>& hidden_data() const { return hidden_; }
  const std::vector<double>& attn_data() const { return attn_; }
  const std::vector<double>& mlp_data() const { return mlp_; }
  std::vector<double>& hidden_data() { return hidden_; }
  std::vector<double>& attn_data() { return attn_; }
  std::vector<double>& mlp_data() { return mlp_; }

  bool operator==(const ForwardTrace&) const = default;

 private:
  std::size_t offset(int layer, std::size_t position, int first_layer, int last_layer, Capability c) const;

  std::vector<int> token_ids_;
  int num_layers_ = 0;
  int hidden_dim_ = 0;
  CapabilitySet captured_;
  std::vector<double> hidden_;
  std::vector<double> attn_;
  std::vector<double> mlp_;
};

// Replaces hidden states after block target_layer at the chosen positions.
struct PatchDirective {
  int source_layer = 0;
  int target_layer = 0;
  // Empty optional means every prompt position.
  std::optional<std::set<std::size_t>> positions;
  std::map<std::size_t, std::vector<double>> vectors;
};

struct BackendInfo {
  std::string model_id;
  int num_layers = 0;
  int hidden_dim = 0;
  int vocab_size = 0;
  CapabilitySet capabilities;
};

struct ForwardRequest {
  CapabilitySet capture;
  const PatchDirective* patch = nullptr;
  int max_new_tokens = 0;
};

struct ForwardResult {
  ForwardTrace trace;
  std::vector<double> next_token_logits;  // at the last prompt position
  std::vector<int> generated;             // greedy continuation
};

// Backend adapter contract, version kBackendApiVersion. A backend provides
// tokenization, a forward pass with capture/patch hooks, and access to W_U
// and the final norm.
inline constexpr int kBackendApiVersion = 1;

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const BackendInfo& info() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
  virtual ForwardResult forward(std::span<const int> ids, const ForwardRequest& request) const = 0;
  virtual std::span<const double> unembedding() const = 0;  // |V| x d
  virtual void final_norm(std::span<const double> h, std::span<double> out) const = 0;
  virtual bool reentrant() const { return true; }
};

// Backend over the in-process double-precision transformer.
class TransformerBackend final : public Backend {
 public:
  TransformerBackend(TransformerWeights weights, std::shared_ptr<const Tokenizer> tokenizer,
                     CapabilitySet capabilities = CapabilitySet::all());

  const BackendInfo& info() const override { return info_; }
  const Tokenizer& tokenizer() const override { return *tokenizer_; }
  ForwardResult forward(std::span<const int> ids, const ForwardRequest& request) const override;
  std::span<const double> unembedding() const override { return model_.weights().unembedding; }
  void final_norm(std::span<const double> h, std::span<double> out) const override {
    model_.final_norm(h, out);
  }

  const Transformer& transformer() const { return model_; }
  std::shared_ptr<const Tokenizer> shared_tokenizer() const { return tokenizer_; }

 private:
  Transformer model_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  BackendInfo info_;
};

// Uniform access to one model. Owns an execution lock that serializes calls
// into backends that are not reentrant.
class ModelHandle {
 public:
  explicit ModelHandle(std::shared_ptr<const Backend> backend);

  const std::string& model_id() const { return backend_->info().model_id; }
  int num_layers() const { return backend_->info().num_layers; }
  int hidden_dim() const { return backend_->info().hidden_dim; }
  int vocab_size() const { return backend_->info().vocab_size; }
  CapabilitySet capabilities() const { return backend_->info().capabilities; }
  const Tokenizer& tokenizer() const { return backend_->tokenizer(); }
  const Backend& backend() const { return *backend_; }

  // Throws CapabilityError naming the first missing capability.
  void require(CapabilitySet caps) const;

  ForwardResult forward(std::span<const int> ids, const ForwardRequest& request) const;

 private:
  std::shared_ptr<const Backend> backend_;
  mutable std::mutex lock_;
};

// Tokenizes and runs the prompt, recording the requested tensors.
ForwardTrace run_trace(const ModelHandle& model, std::string_view prompt, CapabilitySet capture);

// W_U f_L(h).
std::vector<double> unembed_project(const ModelHandle& model, std::span<const double> h);

struct SubjectLocation {
  std::string prompt;
  std::vector<int> token_ids;
  std::size_t last_subject_index = 0;
  std::size_t first_subject_index = 0;  // first token overlapping the subject
  std::size_t subject_begin = 0;         // byte span of the subject in prompt
  std::size_t subject_end = 0;
};

// Renders a template with exactly one "[s]" or "[subj]" placeholder.
std::pair<std::string, std::size_t> render_template(std::string_view prompt_template,
                                                    std::string_view subject);

// Locates the final token whose byte span overlaps the subject in the
// rendered prompt.
SubjectLocation locate_last_subject_token(const ModelHandle& model, std::string_view prompt_template,
                                          std::string_view subject);

// Same alignment for a prompt that already contains the subject text; the
// last occurrence is used.
SubjectLocation locate_subject_in_prompt(const ModelHandle& model, std::string_view prompt,
                                         std::string_view subject);

struct PatchedRun {
  std::vector<double> next_token_logits;
  std::vector<int> continuation;
  std::string continuation_text;
};

// Forward pass with the directive's vectors written over the hidden states
// after block target_layer, followed by greedy decoding.
PatchedRun run_patched(const ModelHandle& target, std::string_view prompt, const PatchDirective& directive,
                       int max_new_tokens = 0);

// Unpatched greedy continuation.
PatchedRun run_greedy(const ModelHandle& model, std::string_view prompt, int max_new_tokens);

// Trace cache files ("KEENTRC1").
void save_trace(const ForwardTrace& trace, const std::string& model_id, std::string_view prompt,
                const std::filesystem::path& path);
struct CachedTrace {
  std::string model_id;
  std::string prompt_sha256;
  ForwardTrace trace;
};
CachedTrace load_trace(const std::filesystem::path& path);

}  // namespace keen::model
