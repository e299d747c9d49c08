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

#include <gtest/gtest.h>

#include <algorithm>

#include "keen/dataset/dataset.hpp"
#include "keen/error.hpp"
#include "keen/model/registry.hpp"
#include "keen/patching/patching.hpp"
#include "support/oracles.hpp"

using namespace keen::patching;
using keen::model::make_mock_model;

namespace {

const std::vector<std::string> kQuestions = {"Where was Napoleon born?", "What is Napoleon known for?",
                                             "Who married Napoleon?"};

TEST(Protocol, Defaults) {
  EXPECT_EQ(default_source_layers(32), (std::vector<int>{19, 20, 21, 22, 23}));
  EXPECT_EQ(default_target_layer(32), 31);
  EXPECT_EQ(default_source_layers(4), (std::vector<int>{2, 3}));
  EXPECT_EQ(default_target_layer(4), 3);
  EXPECT_EQ(parse_mode("pt-layer"), Mode::kPtLayer);
  EXPECT_EQ(mode_name(Mode::kFtSubj), "ft-subj");
}

TEST(Protocol, Validation) {
  auto m = make_mock_model();
  PatchProtocol p = default_protocol(Mode::kPtLayer, 4);
  EXPECT_NO_THROW(validate(p, *m, *m));
  p.source_layers = {3};
  p.target_layer = 2;
  EXPECT_THROW(validate(p, *m, *m), keen::ConfigError);
  p.source_layers = {0};
  p.target_layer = 3;
  EXPECT_THROW(validate(p, *m, *m), keen::BoundsError);
  p.source_layers = {2};
  p.target_layer = 5;
  EXPECT_THROW(validate(p, *m, *m), keen::BoundsError);

  auto other = keen::model::load_model("mock-perturbed:2:0.5:1");
  PatchProtocol ft = default_protocol(Mode::kFtSubj, 4);
  EXPECT_THROW(validate(ft, *other, *m), keen::ConfigError);
  EXPECT_NO_THROW(validate(ft, *other, *other));
  PatchProtocol pt = default_protocol(Mode::kPtLayer, 4);
  EXPECT_NO_THROW(validate(pt, *other, *m));
}

TEST(PatchedAnswer, SelfPatchAtTargetLayerIsIdentity) {
  auto m = make_mock_model();
  for (Mode mode : {Mode::kFtSubj, Mode::kPtLayer}) {
    PatchProtocol p = default_protocol(mode, 4);
    p.source_layers = {p.target_layer};
    for (const auto& q : kQuestions) {
      const auto unpatched = keen::model::run_greedy(*m, "Q: " + q + "\nA:", p.max_new_tokens).continuation_text;
      const auto got = patched_answer(p, *m, *m, q, "Napoleon");
      EXPECT_EQ(got.at(p.target_layer), unpatched) << q;
    }
  }
}

TEST(PatchedAnswer, AllPositionsMatchesLayerSkipOracle) {
  auto m = make_mock_model();
  const auto w = keen::model::make_mock_weights();
  PatchProtocol p = default_protocol(Mode::kPtLayer, 4);
  p.source_layers = {1, 2};
  p.target_layer = 3;
  p.max_new_tokens = 1;
  for (const auto& q : kQuestions) {
    const std::string prompt = "Q: " + q + "\nA:";
    std::vector<int> ids;
    for (const auto& t : m->tokenizer().encode(prompt)) ids.push_back(t.id);
    const auto got = patched_answer(p, *m, *m, q, "Napoleon");
    for (int l : p.source_layers) {
      const auto logits = keen::oracle::brute_skip_logits(w, ids, l, p.target_layer);
      const int top = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      const std::vector<int> one = {top};
      EXPECT_EQ(got.at(l), m->tokenizer().decode(one)) << q << " layer " << l;
    }
  }
}

TEST(PatchedAnswer, ModesCoincideWhenSubjectIsWholePrompt) {
  auto m = make_mock_model();
  PatchProtocol ft = default_protocol(Mode::kFtSubj, 4);
  ft.prompt_template = "[q]";
  ft.source_layers = {1, 2};
  PatchProtocol pt = ft;
  pt.mode = Mode::kPtLayer;
  for (const std::string s : {"Napoleon", "Rome", "Ada Lovelace"}) {
    EXPECT_EQ(patched_answer(ft, *m, *m, s, s), patched_answer(pt, *m, *m, s, s)) << s;
  }
}

TEST(PatchedAnswer, MissingSubjectIsAlignmentError) {
  auto m = make_mock_model();
  EXPECT_THROW(patched_answer(default_protocol(Mode::kFtSubj, 4), *m, *m, "Where was he born?", "Napoleon"),
               keen::AlignmentError);
}

TEST(Accuracy, ExistentialExamples) {
  const std::vector<std::map<int, int>> none = {{{20, 0}, {23, 0}}, {{20, 0}, {23, 0}}};
  EXPECT_EQ(existential_accuracy(none), 0.0);
  const std::vector<std::map<int, int>> split = {{{20, 1}, {23, 0}}, {{20, 0}, {23, 1}}};
  EXPECT_EQ(existential_accuracy(split), 1.0);
}

TEST(Accuracy, MonotoneInSourceLayers) {
  std::vector<std::map<int, int>> bits = {{{20, 0}}, {{20, 1}}, {{20, 0}}, {{20, 0}}};
  double prev = existential_accuracy(bits);
  const std::vector<std::vector<int>> extra = {{0, 0, 1, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}};
  for (std::size_t l = 0; l < extra.size(); ++l) {
    for (std::size_t q = 0; q < bits.size(); ++q) bits[q][21 + static_cast<int>(l)] = extra[l][q];
    const double now = existential_accuracy(bits);
    EXPECT_GE(now, prev);
    prev = now;
  }
}

// Five questions: one answered before patching, four recovered by some layer.
TEST(Accuracy, WholeNewWorldRowRecomputed) {
  PatchedQAResult r;
  r.subject = "A Whole New World";
  r.mode = Mode::kFtSubj;
  r.source_layers = {20, 21, 22, 23};
  r.target_layer = 30;
  const std::vector<std::vector<int>> bits = {{1, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}, {1, 1, 0, 0}, {0, 0, 0, 0}};
  const std::vector<int> unpatched = {1, 0, 0, 0, 0};
  for (std::size_t q = 0; q < bits.size(); ++q) {
    QuestionOutcome o;
    o.relation = "r" + std::to_string(q);
    o.questions = {"q" + std::to_string(q)};
    for (std::size_t l = 0; l < 4; ++l) o.per_layer[20 + static_cast<int>(l)] = {"a", bits[q][l]};
    o.unpatched_correct = unpatched[q];
    r.questions.push_back(o);
  }
  auto j = to_json(r);
  j["patched_accuracy"] = 0.0;
  j["unpatched_accuracy"] = 1.0;
  const auto back = patch_result_from_json(j);
  EXPECT_NEAR(back.unpatched_accuracy, 0.20, 1e-12);
  EXPECT_NEAR(back.patched_accuracy, 0.80, 1e-12);
  j["schema"] = "keen.patch.v0";
  EXPECT_THROW(patch_result_from_json(j), keen::VersionError);
}

TEST(Accuracy, SelfPatchReproducesUnpatchedAccuracy) {
  auto m = make_mock_model();
  PatchProtocol p = default_protocol(Mode::kFtSubj, 4);
  p.source_layers = {p.target_layer};
  std::vector<keen::dataset::QAItem> items;
  for (std::size_t i = 0; i < kQuestions.size(); ++i) {
    const auto a = keen::model::run_greedy(*m, "Q: " + kQuestions[i] + "\nA:", 16).continuation_text;
    // Every other item gets its own greedy answer as the gold alias.
    items.push_back({"Napoleon", "r" + std::to_string(i), {kQuestions[i]}, {i % 2 == 0 ? a : "zzzz-unreachable"}});
  }
  items.push_back({"Napoleon", "skip", {"Where was he born?"}, {"x"}});
  const auto r = patched_qa_accuracy(p, *m, *m, "Napoleon", items);
  EXPECT_EQ(r.questions.size(), 3u);
  EXPECT_EQ(r.skipped.size(), 1u);
  EXPECT_NEAR(r.unpatched_accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.patched_accuracy, r.unpatched_accuracy);

  const std::vector<keen::dataset::QAItem> unalignable = {items.back()};
  EXPECT_THROW(patched_qa_accuracy(p, *m, *m, "Napoleon", unalignable), keen::EmptySupportError);
}

}  // namespace
