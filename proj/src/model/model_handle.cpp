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

#include "keen/model/model_handle.hpp"

#include <algorithm>
#include <cstring>

#include "keen/error.hpp"
#include "keen/simd/kernels.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"

namespace keen::model {
namespace {

constexpr char kTraceMagic[8] = {'K', 'E', 'E', 'N', 'T', 'R', 'C', '1'};

constexpr Capability kAllCapabilities[] = {
    Capability::kHiddenStates, Capability::kAttnOutputs, Capability::kMlpOutputs,
    Capability::kUnembed,      Capability::kFinalNorm,   Capability::kPatching,
};

class TraceObserver final : public BlockObserver {
 public:
  TraceObserver(ForwardTrace* trace, const PatchDirective* patch, std::size_t prompt_len)
      : trace_(trace), patch_(patch), prompt_len_(prompt_len) {}

  void on_embedding(std::size_t position, std::span<const double> hidden) override {
    if (position >= prompt_len_) return;
    if (trace_->captured().has(Capability::kHiddenStates)) {
      auto dst = trace_->hidden_mut(0, position);
      std::copy(hidden.begin(), hidden.end(), dst.begin());
    }
  }

  void on_block(int layer, std::size_t position, std::span<const double> attn,
                std::span<const double> mlp, std::span<double> hidden) override {
    if (position >= prompt_len_) return;
    if (patch_ != nullptr && layer == patch_->target_layer) {
      auto it = patch_->vectors.find(position);
      const bool selected = !patch_->positions || patch_->positions->contains(position);
      if (selected && it != patch_->vectors.end()) {
        std::copy(it->second.begin(), it->second.end(), hidden.begin());
      }
    }
    const auto caps = trace_->captured();
    if (caps.has(Capability::kHiddenStates)) {
      auto dst = trace_->hidden_mut(layer, position);
      std::copy(hidden.begin(), hidden.end(), dst.begin());
    }
    if (caps.has(Capability::kAttnOutputs)) {
      auto dst = trace_->attn_mut(layer, position);
      std::copy(attn.begin(), attn.end(), dst.begin());
    }
    if (caps.has(Capability::kMlpOutputs)) {
      auto dst = trace_->mlp_mut(layer, position);
      std::copy(mlp.begin(), mlp.end(), dst.begin());
    }
  }

 private:
  ForwardTrace* trace_;
  const PatchDirective* patch_;
  std::size_t prompt_len_;
};

int argmax(const std::vector<double>& v) {
  // First maximum wins, so ties go to the lower token id.
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

void validate_patch(const PatchDirective& p, int num_layers, int hidden_dim, std::size_t seq_len) {
  if (p.target_layer < 1 || p.target_layer > num_layers) {
    throw BoundsError("patch target layer " + std::to_string(p.target_layer) + " outside [1, " +
                      std::to_string(num_layers) + "]");
  }
  if (p.source_layer < 1 || p.source_layer > num_layers) {
    throw BoundsError("patch source layer " + std::to_string(p.source_layer) + " outside [1, " +
                      std::to_string(num_layers) + "]");
  }
  std::vector<std::size_t> wanted;
  if (p.positions) {
    wanted.assign(p.positions->begin(), p.positions->end());
  } else {
    for (std::size_t i = 0; i < seq_len; ++i) wanted.push_back(i);
  }
  for (std::size_t pos : wanted) {
    if (pos >= seq_len) {
      throw BoundsError("patch position " + std::to_string(pos) + " outside a sequence of length " +
                        std::to_string(seq_len));
    }
    auto it = p.vectors.find(pos);
    if (it == p.vectors.end()) throw BoundsError("no patch vector for position " + std::to_string(pos));
    if (it->second.size() != static_cast<std::size_t>(hidden_dim)) {
      throw ShapeError("patch vector has dimension " + std::to_string(it->second.size()) + ", model has " +
                       std::to_string(hidden_dim));
    }
  }
  for (const auto& [pos, vec] : p.vectors) {
    if (pos >= seq_len) {
      throw BoundsError("patch position " + std::to_string(pos) + " outside a sequence of length " +
                        std::to_string(seq_len));
    }
  }
}

std::vector<int> ids_of(const std::vector<TokenSpan>& spans) {
  std::vector<int> ids;
  ids.reserve(spans.size());
  for (const auto& s : spans) ids.push_back(s.id);
  return ids;
}

SubjectLocation align(const ModelHandle& model, std::string prompt, std::size_t begin, std::size_t len) {
  if (len == 0) throw AlignmentError("subject is empty", begin, begin);
  const auto spans = model.tokenizer().encode(prompt);
  SubjectLocation loc;
  loc.subject_begin = begin;
  loc.subject_end = begin + len;
  bool found = false;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const bool overlaps = spans[i].begin < loc.subject_end && spans[i].end > loc.subject_begin;
    if (overlaps) {
      if (!found) loc.first_subject_index = i;
      loc.last_subject_index = i;
      found = true;
    }
  }
  if (!found) {
    std::string token_spans;
    for (const auto& s : spans) token_spans += " [" + std::to_string(s.begin) + "," + std::to_string(s.end) + ")";
    throw AlignmentError("no token overlaps subject span [" + std::to_string(loc.subject_begin) + "," +
                             std::to_string(loc.subject_end) + "); token spans:" + token_spans,
                         loc.subject_begin, loc.subject_end);
  }
  loc.token_ids = ids_of(spans);
  loc.prompt = std::move(prompt);
  return loc;
}

}  // namespace

std::string_view capability_name(Capability c) {
  switch (c) {
    case Capability::kHiddenStates:
      return "hidden_states";
    case Capability::kAttnOutputs:
      return "attn_outputs";
    case Capability::kMlpOutputs:
      return "mlp_outputs";
    case Capability::kUnembed:
      return "unembed";
    case Capability::kFinalNorm:
      return "final_layernorm";
    case Capability::kPatching:
      return "patching";
  }
  return "unknown";
}

ForwardTrace::ForwardTrace(std::vector<int> token_ids, int num_layers, int hidden_dim, CapabilitySet captured)
    : token_ids_(std::move(token_ids)), num_layers_(num_layers), hidden_dim_(hidden_dim), captured_(captured) {
  const std::size_t per_layer = token_ids_.size() * static_cast<std::size_t>(hidden_dim);
  const auto L = static_cast<std::size_t>(num_layers);
  if (captured.has(Capability::kHiddenStates)) hidden_.assign((L + 1) * per_layer, 0.0);
  if (captured.has(Capability::kAttnOutputs)) attn_.assign(L * per_layer, 0.0);
  if (captured.has(Capability::kMlpOutputs)) mlp_.assign(L * per_layer, 0.0);
}

std::size_t ForwardTrace::offset(int layer, std::size_t position, int first_layer, int last_layer,
                                 Capability c) const {
  if (!captured_.has(c)) {
    throw CapabilityError("trace did not capture " + std::string(capability_name(c)));
  }
  if (layer < first_layer || layer > last_layer) {
    throw BoundsError("layer " + std::to_string(layer) + " outside [" + std::to_string(first_layer) + ", " +
                      std::to_string(last_layer) + "]");
  }
  if (position >= token_ids_.size()) {
    throw BoundsError("position " + std::to_string(position) + " outside a trace of " +
                      std::to_string(token_ids_.size()) + " tokens");
  }
  const auto d = static_cast<std::size_t>(hidden_dim_);
  return (static_cast<std::size_t>(layer - first_layer) * token_ids_.size() + position) * d;
}

std::span<const double> ForwardTrace::hidden(int layer, std::size_t position) const {
  return {hidden_.data() + offset(layer, position, 0, num_layers_, Capability::kHiddenStates),
          static_cast<std::size_t>(hidden_dim_)};
}
std::span<const double> ForwardTrace::attn(int layer, std::size_t position) const {
  return {attn_.data() + offset(layer, position, 1, num_layers_, Capability::kAttnOutputs),
          static_cast<std::size_t>(hidden_dim_)};
}
std::span<const double> ForwardTrace::mlp(int layer, std::size_t position) const {
  return {mlp_.data() + offset(layer, position, 1, num_layers_, Capability::kMlpOutputs),
          static_cast<std::size_t>(hidden_dim_)};
}
std::span<double> ForwardTrace::hidden_mut(int layer, std::size_t position) {
  return {hidden_.data() + offset(layer, position, 0, num_layers_, Capability::kHiddenStates),
          static_cast<std::size_t>(hidden_dim_)};
}
std::span<double> ForwardTrace::attn_mut(int layer, std::size_t position) {
  return {attn_.data() + offset(layer, position, 1, num_layers_, Capability::kAttnOutputs),
          static_cast<std::size_t>(hidden_dim_)};
}
std::span<double> ForwardTrace::mlp_mut(int layer, std::size_t position) {
  return {mlp_.data() + offset(layer, position, 1, num_layers_, Capability::kMlpOutputs),
          static_cast<std::size_t>(hidden_dim_)};
}

TransformerBackend::TransformerBackend(TransformerWeights weights, std::shared_ptr<const Tokenizer> tokenizer,
                                       CapabilitySet capabilities)
    : model_(std::move(weights)), tokenizer_(std::move(tokenizer)) {
  const auto& c = model_.config();
  if (tokenizer_->vocab_size() > c.vocab_size) {
    throw CompatibilityError("tokenizer vocabulary exceeds the model's unembedding rows");
  }
  info_ = {c.model_id, c.num_layers, c.hidden_dim, c.vocab_size, capabilities};
}

ForwardResult TransformerBackend::forward(std::span<const int> ids, const ForwardRequest& request) const {
  const auto& c = model_.config();
  if (ids.empty()) throw ShapeError("cannot run an empty prompt");
  if (request.patch != nullptr) validate_patch(*request.patch, c.num_layers, c.hidden_dim, ids.size());

  ForwardResult result;
  result.trace = ForwardTrace(std::vector<int>(ids.begin(), ids.end()), c.num_layers, c.hidden_dim, request.capture);
  TraceObserver observer(&result.trace, request.patch, ids.size());
  KvCache cache = model_.make_cache();
  const auto d = static_cast<std::size_t>(c.hidden_dim);
  std::vector<double> h = model_.forward(ids, cache, &observer);
  result.next_token_logits = model_.logits({h.data() + (ids.size() - 1) * d, d});

  std::vector<double> logits = result.next_token_logits;
  for (int step = 0; step < request.max_new_tokens; ++step) {
    if (cache.length >= static_cast<std::size_t>(c.max_positions)) break;
    const int next = argmax(logits);
    result.generated.push_back(next);
    if (step + 1 == request.max_new_tokens) break;
    const int one[1] = {next};
    h = model_.forward(one, cache, nullptr);
    logits = model_.logits(h);
  }
  return result;
}

ModelHandle::ModelHandle(std::shared_ptr<const Backend> backend) : backend_(std::move(backend)) {
  const auto& info = backend_->info();
  if (info.num_layers < 1 || info.hidden_dim < 1 || info.vocab_size < 1) {
    throw ShapeError("model dimensions must be strictly positive");
  }
}

void ModelHandle::require(CapabilitySet caps) const {
  for (auto c : kAllCapabilities) {
    if (caps.has(c) && !capabilities().has(c)) {
      throw CapabilityError("model '" + model_id() + "' does not expose the " + std::string(capability_name(c)) +
                            " hook");
    }
  }
}

ForwardResult ModelHandle::forward(std::span<const int> ids, const ForwardRequest& request) const {
  require(request.capture);
  if (request.patch != nullptr) require({Capability::kPatching});
  if (backend_->reentrant()) return backend_->forward(ids, request);
  std::lock_guard<std::mutex> guard(lock_);
  return backend_->forward(ids, request);
}

ForwardTrace run_trace(const ModelHandle& model, std::string_view prompt, CapabilitySet capture) {
  model.require(capture);
  const auto ids = ids_of(model.tokenizer().encode(prompt));
  ForwardRequest req;
  req.capture = capture;
  return model.forward(ids, req).trace;
}

std::vector<double> unembed_project(const ModelHandle& model, std::span<const double> h) {
  model.require({Capability::kUnembed, Capability::kFinalNorm});
  const auto d = static_cast<std::size_t>(model.hidden_dim());
  if (h.size() != d) {
    throw ShapeError("hidden vector has length " + std::to_string(h.size()) + ", model expects " + std::to_string(d));
  }
  std::vector<double> normed(d);
  model.backend().final_norm(h, normed);
  const auto wu = model.backend().unembedding();
  std::vector<double> out(static_cast<std::size_t>(model.vocab_size()));
  simd::active().matvec(wu.data(), out.size(), d, normed.data(), out.data());
  return out;
}

std::pair<std::string, std::size_t> render_template(std::string_view prompt_template, std::string_view subject) {
  std::size_t found = std::string_view::npos;
  std::size_t placeholder_len = 0;
  int count = 0;
  for (std::string_view ph : {std::string_view("[subj]"), std::string_view("[s]")}) {
    for (std::size_t p = prompt_template.find(ph); p != std::string_view::npos; p = prompt_template.find(ph, p + 1)) {
      ++count;
      found = p;
      placeholder_len = ph.size();
    }
  }
  if (count != 1) {
    throw ConfigError("prompt template must contain exactly one [s] or [subj] placeholder: '" +
                      std::string(prompt_template) + "'");
  }
  std::string rendered(prompt_template.substr(0, found));
  rendered += subject;
  rendered += prompt_template.substr(found + placeholder_len);
  return {rendered, found};
}

SubjectLocation locate_last_subject_token(const ModelHandle& model, std::string_view prompt_template,
                                          std::string_view subject) {
  auto [prompt, begin] = render_template(prompt_template, subject);
  return align(model, std::move(prompt), begin, subject.size());
}

SubjectLocation locate_subject_in_prompt(const ModelHandle& model, std::string_view prompt,
                                         std::string_view subject) {
  if (subject.empty()) throw AlignmentError("subject is empty", 0, 0);
  const std::size_t begin = prompt.rfind(subject);
  if (begin == std::string_view::npos) {
    throw AlignmentError("subject '" + std::string(subject) + "' does not occur in '" + std::string(prompt) + "'",
                         0, 0);
  }
  return align(model, std::string(prompt), begin, subject.size());
}

PatchedRun run_patched(const ModelHandle& target, std::string_view prompt, const PatchDirective& directive,
                       int max_new_tokens) {
  const auto ids = ids_of(target.tokenizer().encode(prompt));
  ForwardRequest req;
  req.patch = &directive;
  req.max_new_tokens = max_new_tokens;
  auto res = target.forward(ids, req);
  return {std::move(res.next_token_logits), res.generated, target.tokenizer().decode(res.generated)};
}

PatchedRun run_greedy(const ModelHandle& model, std::string_view prompt, int max_new_tokens) {
  const auto ids = ids_of(model.tokenizer().encode(prompt));
  ForwardRequest req;
  req.max_new_tokens = max_new_tokens;
  auto res = model.forward(ids, req);
  return {std::move(res.next_token_logits), res.generated, model.tokenizer().decode(res.generated)};
}

void save_trace(const ForwardTrace& trace, const std::string& model_id, std::string_view prompt,
                const std::filesystem::path& path) {
  util::BinaryWriter out;
  out.bytes(kTraceMagic, sizeof kTraceMagic);
  out.str(model_id);
  const std::string digest = util::sha256_hex(prompt);
  out.bytes(digest.data(), digest.size());
  out.u32(static_cast<std::uint32_t>(trace.hidden_dim()));
  out.u32(static_cast<std::uint32_t>(trace.num_layers()));
  out.u32(trace.captured().bits());
  out.u32(static_cast<std::uint32_t>(trace.num_positions()));
  for (int id : trace.token_ids()) out.i32(id);
  out.f64s(trace.hidden_data().data(), trace.hidden_data().size());
  out.f64s(trace.attn_data().data(), trace.attn_data().size());
  out.f64s(trace.mlp_data().data(), trace.mlp_data().size());
  util::write_file_atomic(path, out.buffer());
}

CachedTrace load_trace(const std::filesystem::path& path) {
  util::BinaryReader in(util::read_file(path));
  char magic[8];
  in.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kTraceMagic, sizeof magic) != 0) {
    throw VersionError("'" + path.string() + "' is not a KEENTRC1 trace cache");
  }
  CachedTrace out;
  out.model_id = in.str();
  out.prompt_sha256.resize(64);
  in.bytes(out.prompt_sha256.data(), 64);
  const auto d = static_cast<int>(in.u32());
  const auto L = static_cast<int>(in.u32());
  const auto caps = CapabilitySet::from_bits(in.u32());
  const std::size_t T = in.u32();
  std::vector<int> ids(T);
  for (auto& id : ids) id = in.i32();
  out.trace = ForwardTrace(std::move(ids), L, d, caps);
  in.f64s(out.trace.hidden_data().data(), out.trace.hidden_data().size());
  in.f64s(out.trace.attn_data().data(), out.trace.attn_data().size());
  in.f64s(out.trace.mlp_data().data(), out.trace.mlp_data().size());
  if (!in.at_end()) throw ShapeError("trailing bytes in trace cache");
  return out;
}

}  // namespace keen::model
