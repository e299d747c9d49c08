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

#include <span>
#include <string>
#include <vector>

#include "keen/dataset/dataset.hpp"
#include "keen/model/model_handle.hpp"

namespace keen::eval {

inline constexpr std::string_view kQaPrompt = "Q: [q]\nA:";

struct AnswerOptions {
  int max_new_tokens = 16;
  std::string prompt_template{kQaPrompt};
  int jobs = 1;
};

std::string render_question(std::string_view prompt_template, std::string_view question);

// Greedy answers for every variant of every item, in input order.
std::vector<dataset::AnswerRecord> answer_questions(const model::ModelHandle& model,
                                                    std::span<const dataset::QAItem> items,
                                                    const AnswerOptions& options = {});

}  // namespace keen::eval
