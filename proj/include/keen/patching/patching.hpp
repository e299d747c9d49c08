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

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keen/dataset/dataset.hpp"
#include "keen/model/model_handle.hpp"

namespace keen::patching {

inline constexpr std::string_view kPatchSchema = "keen.patch.v1";

enum class Mode { kFtSubj, kPtLayer };
std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view s);

struct PatchProtocol {
  Mode mode = Mode::kFtSubj;
  std::vector<int> source_layers;
  int target_layer = 0;
  int max_new_tokens = 16;
  std::string prompt_template{"Q: [q]\nA:"};
};

// round(0.6 L) .. round(0.72 L), 1-indexed.
std::vector<int> default_source_layers(int num_layers);
// Penultimate layer, L - 1.
int default_target_layer(int num_layers);
PatchProtocol default_protocol(Mode mode, int num_layers);

// Checks layer ranges, ordering, and the model pairing the mode requires.
void validate(const PatchProtocol& protocol, const model::ModelHandle& source, const model::ModelHandle& target);

// Greedy answer per source layer after writing the source model's hidden
// states at that layer over the target model's states after target_layer.
std::map<int, std::string> patched_answer(const PatchProtocol& protocol, const model::ModelHandle& source,
                                          const model::ModelHandle& target, std::string_view question,
                                          std::string_view subject);

struct LayerOutcome {
  std::string answer;
  int correct = 0;
};

struct QuestionOutcome {
  std::string relation;
  std::vector<std::string> questions;             // variants tried
  std::map<int, LayerOutcome> per_layer;           // existential over variants
  int unpatched_correct = 0;
};

struct PatchedQAResult {
  std::string subject;
  Mode mode = Mode::kFtSubj;
  std::vector<int> source_layers;
  int target_layer = 0;
  std::vector<QuestionOutcome> questions;
  std::vector<std::string> skipped;  // questions dropped after alignment errors
  double patched_accuracy = 0.0;
  double unpatched_accuracy = 0.0;
};

// Fraction of questions for which some source layer's bit is 1.
double existential_accuracy(std::span<const std::map<int, int>> per_question_bits);

// Patched accuracy for one subject over its QA items.
PatchedQAResult patched_qa_accuracy(const PatchProtocol& protocol, const model::ModelHandle& source,
                                    const model::ModelHandle& target, const std::string& subject,
                                    std::span<const dataset::QAItem> items);

// Recomputes both accuracies from the stored bits.
void recompute(PatchedQAResult& result);

nlohmann::json to_json(const PatchedQAResult& r);
PatchedQAResult patch_result_from_json(const nlohmann::json& j);

}  // namespace keen::patching
