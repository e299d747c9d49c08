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

#include "keen/eval/qa_runner.hpp"

#include "keen/error.hpp"
#include "keen/util/parallel.hpp"

namespace keen::eval {

std::string render_question(std::string_view prompt_template, std::string_view question) {
  const auto pos = prompt_template.find("[q]");
  if (pos == std::string_view::npos) throw ConfigError("QA prompt template needs a [q] placeholder");
  std::string out(prompt_template.substr(0, pos));
  out += question;
  out += prompt_template.substr(pos + 3);
  return out;
}

std::vector<dataset::AnswerRecord> answer_questions(const model::ModelHandle& model,
                                                    std::span<const dataset::QAItem> items,
                                                    const AnswerOptions& options) {
  if (options.max_new_tokens < 1) throw ConfigError("answers need at least one generated token");
  std::vector<dataset::AnswerRecord> out(items.size());
  auto one = [&](std::size_t i) {
    out[i].subject = items[i].subject;
    out[i].relation = items[i].relation;
    for (const auto& q : items[i].variants) {
      out[i].outputs.push_back(
          model::run_greedy(model, render_question(options.prompt_template, q), options.max_new_tokens)
              .continuation_text);
    }
  };
  util::parallel_for(items.size(), options.jobs, one);
  return out;
}

}  // namespace keen::eval
