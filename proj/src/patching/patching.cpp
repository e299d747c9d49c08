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

#include "keen/patching/patching.hpp"

#include <algorithm>
#include <set>

#include "keen/error.hpp"
#include "keen/eval/qa_runner.hpp"

namespace keen::patching {
namespace {

int round_ratio(int num_layers, int numerator, int denominator) {
  return (2 * num_layers * numerator + denominator) / (2 * denominator);
}

}  // namespace

std::string_view mode_name(Mode m) { return m == Mode::kFtSubj ? "ft-subj" : "pt-layer"; }

Mode parse_mode(std::string_view s) {
  if (s == "ft-subj" || s == "FT_SUBJ") return Mode::kFtSubj;
  if (s == "pt-layer" || s == "PT_LAYER") return Mode::kPtLayer;
  throw ConfigError("unknown patching mode '" + std::string(s) + "' (ft-subj or pt-layer)");
}

std::vector<int> default_source_layers(int num_layers) {
  const int lo = std::max(1, round_ratio(num_layers, 60, 100));
  const int hi = std::min(num_layers - 1, round_ratio(num_layers, 72, 100));
  std::vector<int> out;
  for (int l = lo; l <= hi; ++l) out.push_back(l);
  if (out.empty()) out.push_back(std::max(1, num_layers - 1));
  return out;
}

int default_target_layer(int num_layers) { return std::max(1, num_layers - 1); }

PatchProtocol default_protocol(Mode mode, int num_layers) {
  PatchProtocol p;
  p.mode = mode;
  p.source_layers = default_source_layers(num_layers);
  p.target_layer = default_target_layer(num_layers);
  return p;
}

void validate(const PatchProtocol& p, const model::ModelHandle& source, const model::ModelHandle& target) {
  source.require({model::Capability::kHiddenStates});
  target.require({model::Capability::kPatching});
  if (p.source_layers.empty()) throw ConfigError("patching needs at least one source layer");
  if (p.max_new_tokens < 1) throw ConfigError("patched answers need at least one generated token");
  const int l_src = source.num_layers();
  const int l_tgt = target.num_layers();
  if (p.target_layer < 1 || p.target_layer > l_tgt) {
    throw BoundsError("target layer " + std::to_string(p.target_layer) + " outside [1, " + std::to_string(l_tgt) + "]");
  }
  for (int l : p.source_layers) {
    if (l < 1 || l > l_src) {
      throw BoundsError("source layer " + std::to_string(l) + " outside [1, " + std::to_string(l_src) + "]");
    }
    if (p.target_layer < l) {
      throw ConfigError("target layer " + std::to_string(p.target_layer) + " lies below source layer " +
                        std::to_string(l));
    }
  }
  if (source.hidden_dim() != target.hidden_dim()) throw CompatibilityError("source and target hidden sizes differ");
  if (source.tokenizer().kind() != target.tokenizer().kind() ||
      source.tokenizer().vocab_size() != target.tokenizer().vocab_size()) {
    throw CompatibilityError("source and target use different tokenizers");
  }
  if (p.mode == Mode::kFtSubj && source.model_id() != target.model_id()) {
    throw ConfigError("ft-subj patching runs within one model; got source '" + source.model_id() + "' and target '" +
                      target.model_id() + "'");
  }
}

std::map<int, std::string> patched_answer(const PatchProtocol& protocol, const model::ModelHandle& source,
                                          const model::ModelHandle& target, std::string_view question,
                                          std::string_view subject) {
  validate(protocol, source, target);
  const std::string prompt = eval::render_question(protocol.prompt_template, question);
  const auto loc = model::locate_subject_in_prompt(source, prompt, subject);

  model::ForwardRequest req;
  req.capture = {model::Capability::kHiddenStates};
  const auto trace = source.forward(loc.token_ids, req).trace;

  std::set<std::size_t> positions;
  if (protocol.mode == Mode::kFtSubj) {
    for (std::size_t i = loc.first_subject_index; i <= loc.last_subject_index; ++i) positions.insert(i);
  } else {
    for (std::size_t i = 0; i < loc.token_ids.size(); ++i) positions.insert(i);
  }

  std::map<int, std::string> out;
  for (int layer : protocol.source_layers) {
    model::PatchDirective d;
    d.source_layer = layer;
    d.target_layer = protocol.target_layer;
    if (protocol.mode == Mode::kFtSubj) d.positions = positions;
    for (std::size_t pos : positions) {
      auto h = trace.hidden(layer, pos);
      d.vectors.emplace(pos, std::vector<double>(h.begin(), h.end()));
    }
    out[layer] = model::run_patched(target, prompt, d, protocol.max_new_tokens).continuation_text;
  }
  return out;
}

double existential_accuracy(std::span<const std::map<int, int>> per_question_bits) {
  if (per_question_bits.empty()) throw EmptySupportError("patched accuracy needs at least one question");
  std::size_t correct = 0;
  for (const auto& bits : per_question_bits) {
    if (std::any_of(bits.begin(), bits.end(), [](const auto& kv) { return kv.second == 1; })) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(per_question_bits.size());
}

void recompute(PatchedQAResult& r) {
  std::vector<std::map<int, int>> bits;
  std::size_t unpatched = 0;
  for (const auto& q : r.questions) {
    std::map<int, int> b;
    for (const auto& [layer, o] : q.per_layer) b[layer] = o.correct;
    bits.push_back(std::move(b));
    unpatched += q.unpatched_correct == 1 ? 1 : 0;
  }
  r.patched_accuracy = existential_accuracy(bits);
  r.unpatched_accuracy = static_cast<double>(unpatched) / static_cast<double>(r.questions.size());
}

PatchedQAResult patched_qa_accuracy(const PatchProtocol& protocol, const model::ModelHandle& source,
                                    const model::ModelHandle& target, const std::string& subject,
                                    std::span<const dataset::QAItem> items) {
  validate(protocol, source, target);
  PatchedQAResult r;
  r.subject = subject;
  r.mode = protocol.mode;
  r.source_layers = protocol.source_layers;
  r.target_layer = protocol.target_layer;
  for (const auto& item : items) {
    if (item.subject != subject) continue;
    QuestionOutcome q;
    q.relation = item.relation;
    for (int l : protocol.source_layers) q.per_layer[l] = {};
    bool aligned = false;
    for (const auto& variant : item.variants) {
      std::map<int, std::string> answers;
      try {
        answers = patched_answer(protocol, source, target, variant, subject);
      } catch (const AlignmentError&) {
        r.skipped.push_back(variant);
        continue;
      }
      aligned = true;
      q.questions.push_back(variant);
      for (const auto& [layer, text] : answers) {
        auto& o = q.per_layer[layer];
        const int ok = dataset::score_answer(text, item);
        if (o.answer.empty() || (ok == 1 && o.correct == 0)) o.answer = text;
        o.correct = std::max(o.correct, ok);
      }
      const auto plain = model::run_greedy(target, eval::render_question(protocol.prompt_template, variant),
                                           protocol.max_new_tokens);
      q.unpatched_correct = std::max(q.unpatched_correct, dataset::score_answer(plain.continuation_text, item));
    }
    if (aligned) r.questions.push_back(std::move(q));
  }
  if (r.questions.empty()) throw EmptySupportError("no alignable questions for subject '" + subject + "'");
  recompute(r);
  return r;
}

nlohmann::json to_json(const PatchedQAResult& r) {
  nlohmann::json questions = nlohmann::json::array();
  for (const auto& q : r.questions) {
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [l, o] : q.per_layer) layers[std::to_string(l)] = {{"answer", o.answer}, {"correct", o.correct}};
    questions.push_back({{"relation", q.relation},
                         {"questions", q.questions},
                         {"per_layer", layers},
                         {"unpatched_correct", q.unpatched_correct}});
  }
  return {{"schema", kPatchSchema},
          {"subject", r.subject},
          {"mode", mode_name(r.mode)},
          {"source_layers", r.source_layers},
          {"target_layer", r.target_layer},
          {"questions", questions},
          {"skipped", r.skipped},
          {"patched_accuracy", r.patched_accuracy},
          {"unpatched_accuracy", r.unpatched_accuracy}};
}

PatchedQAResult patch_result_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string{}) != kPatchSchema) throw VersionError("not a keen.patch.v1 result");
  PatchedQAResult r;
  try {
    r.subject = j.at("subject").get<std::string>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.source_layers = j.at("source_layers").get<std::vector<int>>();
    r.target_layer = j.at("target_layer").get<int>();
    r.skipped = j.value("skipped", std::vector<std::string>{});
    for (const auto& qj : j.at("questions")) {
      QuestionOutcome q;
      q.relation = qj.value("relation", std::string{});
      q.questions = qj.value("questions", std::vector<std::string>{});
      q.unpatched_correct = qj.value("unpatched_correct", 0);
      for (auto it = qj.at("per_layer").begin(); it != qj.at("per_layer").end(); ++it) {
        q.per_layer[std::stoi(it.key())] = {it.value().value("answer", std::string{}), it.value().at("correct").get<int>()};
      }
      r.questions.push_back(std::move(q));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed patch result: ") + e.what());
  }
  recompute(r);
  return r;
}

}  // namespace keen::patching
