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

#include <filesystem>
#include <map>
#include <set>

#include "keen/dataset/dataset.hpp"
#include "keen/dataset/text_normalize.hpp"
#include "keen/error.hpp"
#include "keen/model/registry.hpp"
#include "keen/util/io.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace keen::dataset;

namespace {

TemplateRegistry registry() {
  return TemplateRegistry({{"place of birth", "Where was [subj] born?"},
                           {"capital", "What is the capital of [subj]?"},
                           {"occupation", "What [obj_type] is [subj] known for?"}});
}

std::vector<std::string> names(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("subject-" + std::to_string(i));
  return v;
}

TEST(Normalize, CaseFoldAndWhitespace) {
  EXPECT_EQ(normalize_text("  PARIS  is\tthe capital. "), "paris is the capital");
  EXPECT_EQ(normalize_text("\"Straße!\""), "strasse");
  EXPECT_EQ(normalize_text("ｆｕｌｌ width"), "full width");
  EXPECT_TRUE(normalized_contains("Nobody knows the answer", "nobody knows"));
  EXPECT_FALSE(normalized_contains("anything", ""));
}

TEST(Generate, NapoleonBirthplace) {
  const std::vector<Triplet> t = {{"Napoleon", {}, "place of birth", {{"France", {}}}, ""}};
  const auto items = generate_questions(t, registry());
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].variants, std::vector<std::string>{"Where was Napoleon born?"});
  EXPECT_EQ(items[0].answer_aliases, std::vector<std::string>{"France"});
}

TEST(Generate, AliasExpansionMatchesManualOracle) {
  const std::vector<Triplet> t = {
      {"George Washington", {"Washington", "G. Washington"}, "place of birth",
       {{"Westmoreland County", {"Westmoreland", "Westmoreland County, Virginia"}}}, ""}};
  const auto items = generate_questions(t, registry());
  const std::vector<std::string> want_variants = {"Where was George Washington born?", "Where was Washington born?",
                                                  "Where was G. Washington born?"};
  const std::vector<std::string> want_aliases = {"Westmoreland County", "Westmoreland",
                                                 "Westmoreland County, Virginia"};
  EXPECT_EQ(items[0].variants, want_variants);
  EXPECT_EQ(items[0].answer_aliases, want_aliases);
}

TEST(Generate, VariantCapAndMerge) {
  Triplet t{"X", {}, "capital", {{"A", {}}}, ""};
  for (int i = 0; i < 20; ++i) t.subject_aliases.push_back("X" + std::to_string(i));
  const std::vector<Triplet> ts = {t, {"X", {}, "capital", {{"B", {"Bee"}}}, ""}};
  const auto items = generate_questions(ts, registry());
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].variants.size(), 8u);
  EXPECT_EQ(items[0].answer_aliases, (std::vector<std::string>{"A", "B", "Bee"}));
}

TEST(Generate, ObjectTypeSlot) {
  const std::vector<Triplet> ok = {{"Ada", {}, "occupation", {{"mathematics", {}}}, "field"}};
  EXPECT_EQ(generate_questions(ok, registry())[0].variants[0], "What field is Ada known for?");
  const std::vector<Triplet> bad = {{"Ada", {}, "occupation", {{"mathematics", {}}}, ""}};
  EXPECT_THROW(generate_questions(bad, registry()), keen::ConfigError);
}

TEST(Generate, MissingTemplateListsRelation) {
  const std::vector<Triplet> t = {{"Ada", {}, "spouse", {{"William", {}}}, ""}};
  try {
    generate_questions(t, registry());
    FAIL();
  } catch (const keen::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("spouse"), std::string::npos);
  }
}

TEST(Score, Containment) {
  const QAItem wash{"George Washington", "place of birth", {"Where was George Washington born?"},
                    {"Westmoreland County"}};
  EXPECT_EQ(score_answer("He was born in Westmoreland County, Virginia.", wash), 1);
  EXPECT_EQ(score_answer("I don't know.", wash), 0);
  const QAItem paris{"France", "capital", {"What is the capital of France?"}, {"Paris"}};
  EXPECT_EQ(score_answer("PARIS  is the capital", paris), 1);
  // Oracle: independent normalize-then-find.
  const std::string out = "PARIS  is the capital";
  EXPECT_EQ(normalize_text(out).find(normalize_text("Paris")) != std::string::npos, true);
  const std::vector<std::string> outputs = {"no idea", "Paris, of course"};
  EXPECT_EQ(score_pair(outputs, paris), 1);
}

TEST(Score, MonotoneInAliases) {
  QAItem item{"s", "r", {"q"}, {"alpha"}};
  const std::vector<std::string> outputs = {"alpha beta", "gamma", "delta"};
  for (const auto& o : outputs) {
    const int before = score_answer(o, item);
    QAItem more = item;
    more.answer_aliases.push_back("gamma");
    EXPECT_GE(score_answer(o, more), before);
  }
}

TEST(Labels, QaArithmetic) {
  std::vector<int> bits(12, 0);
  for (int i = 0; i < 8; ++i) bits[i] = 1;
  const auto l = compute_qa_label("George Washington", bits);
  EXPECT_NEAR(l.value, 0.667, 5e-4);
  EXPECT_EQ(l.support, 12);
  EXPECT_EQ(compute_qa_label("s", std::vector<int>{1, 1, 1}).value, 1.0);
  EXPECT_DOUBLE_EQ(compute_qa_label("s", std::vector<int>{1, 0, 1, 0, 0}).value, 0.4);
  EXPECT_THROW(compute_qa_label("s", std::vector<int>{}), keen::EmptySupportError);
}

TEST(Labels, OegArithmetic) {
  std::vector<ClaimRecord> claims;
  for (int i = 0; i < 35; ++i) claims.push_back({"George Washington", "c" + std::to_string(i), i < 26 ? 1 : 0});
  const auto l = compute_oeg_label(claims);
  EXPECT_NEAR(l.value, 0.743, 5e-4);
  EXPECT_EQ(l.support, 35);
  const std::vector<ClaimRecord> zeros = {{"s", "a", 0}, {"s", "b", 0}};
  EXPECT_EQ(compute_oeg_label(zeros).value, 0.0);
  const std::vector<ClaimRecord> mixed = {{"s", "a", 1}, {"s", "b", 1}, {"s", "c", 0}, {"s", "d", 1}};
  EXPECT_EQ(compute_oeg_label(mixed).value, 0.75);
  EXPECT_THROW(compute_oeg_label(std::vector<ClaimRecord>{}), keen::EmptySupportError);
}

TEST(Labels, CountRatioInvariant) {
  for (int n = 1; n <= 30; ++n) {
    for (int k = 0; k <= n; ++k) {
      std::vector<int> bits(n, 0);
      std::fill(bits.begin(), bits.begin() + k, 1);
      const auto l = compute_qa_label("s", bits);
      EXPECT_NEAR(l.value * l.support, std::round(l.value * l.support), 1e-9);
    }
  }
}

TEST(Split, SizesMatchLargestRemainderOracle) {
  for (std::size_t n : {10u, 11u, 37u, 100u, 101u, 333u, 3472u}) {
    const auto s = split_subjects(names(n), 5);
    const auto want = keen::oracle::apportion_65_15_20(n);
    EXPECT_EQ(s.count(Split::kTrain), want[0]) << n;
    EXPECT_EQ(s.count(Split::kDev), want[1]) << n;
    EXPECT_EQ(s.count(Split::kTest), want[2]) << n;
  }
  const auto s101 = split_subjects(names(101), 1);
  EXPECT_EQ(s101.count(Split::kTrain), 66u);
  const auto s100 = split_subjects(names(100), 1);
  EXPECT_EQ(s100.count(Split::kTrain), 65u);
  EXPECT_EQ(s100.count(Split::kDev), 15u);
  EXPECT_EQ(s100.count(Split::kTest), 20u);
}

TEST(Split, DeterministicTotalDisjoint) {
  const auto subjects = names(57);
  const auto a = split_subjects(subjects, 3), b = split_subjects(subjects, 3), c = split_subjects(subjects, 4);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_NE(a.assignment, c.assignment);
  EXPECT_EQ(a.assignment.size(), 57u);
  std::set<std::string> seen;
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest}) {
    for (const auto& x : a.subjects_in(s)) EXPECT_TRUE(seen.insert(x).second);
  }
  EXPECT_EQ(a.split_hash(Split::kTrain), b.split_hash(Split::kTrain));
  EXPECT_THROW(split_subjects(names(9), 1), keen::SizingError);
}

TEST(Split, JsonRoundTrip) {
  const auto a = split_subjects(names(20), 8);
  const auto b = split_from_json(to_json(a));
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(b.seed, 8u);
}

TEST(Popularity, TotalsMonthsDuplicatesMissing) {
  const std::vector<nlohmann::json> rows = {
      {{"subject", "Napoleon"}, {"views", 1000000}},
      {{"subject", "Rome"}, {"views", 5}},
      {{"subject", "Rome"}, {"views", 7}},
      {{"subject", "Paris"}, {"month", "2023-01"}, {"views", 10}},
      {{"subject", "Paris"}, {"month", "2023-02"}, {"views", 20}},
      {{"subject", "Paris"}, {"month", "2024-01"}, {"views", 40}},
  };
  const std::vector<std::string> expected = {"Napoleon", "Rome", "Paris", "Atlantis"};
  const auto t = ingest_popularity_rows(rows, expected, {"2023-01", "2023-12"});
  EXPECT_EQ(t.views.at("Napoleon"), 1000000u);
  // Oracle: group-by-sum.
  std::map<std::string, std::uint64_t> sums;
  for (const auto& r : rows) {
    if (r.contains("month") && r["month"].get<std::string>() > "2023-12") continue;
    sums[r["subject"].get<std::string>()] += r["views"].get<std::uint64_t>();
  }
  EXPECT_EQ(t.views, sums);
  EXPECT_EQ(t.duplicate_rows, 1u);
  EXPECT_EQ(t.missing, std::vector<std::string>{"Atlantis"});
  EXPECT_FALSE(t.views.contains("Atlantis"));
}

TEST(Popularity, MalformedRowReportsLine) {
  const auto p = fs::temp_directory_path() / "keen_pop_bad.jsonl";
  keen::util::write_file_atomic(p, "{\"subject\":\"a\",\"views\":1}\n{\"subject\":\"b\",\"views\":-3}\n");
  try {
    ingest_popularity(p, {});
    FAIL();
  } catch (const keen::ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Files, QaItemsRoundTripAndSchemaCheck) {
  const auto p = fs::temp_directory_path() / "keen_qa.jsonl";
  const std::vector<QAItem> items = {{"Napoleon", "place of birth", {"Where was Napoleon born?"}, {"Corsica", "France"}}};
  save_qa_items(p, items);
  const auto back = load_qa_items(p);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].answer_aliases, items[0].answer_aliases);
  keen::util::write_file_atomic(p, "{\"schema\":\"keen.qa.v0\",\"subject\":\"a\"}\n");
  EXPECT_THROW(load_qa_items(p), keen::VersionError);
}

TEST(Files, LabelQaFromAnswers) {
  const std::vector<QAItem> items = {{"A", "r1", {"q1"}, {"yes"}}, {"A", "r2", {"q2"}, {"no"}}, {"B", "r1", {"q3"}, {"x"}}};
  const std::vector<AnswerRecord> answers = {{"A", "r1", {"Yes!"}}, {"A", "r2", {"maybe"}}, {"B", "r1", {"X marks"}}};
  const auto labels = label_qa(items, answers);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0].subject, "A");
  EXPECT_EQ(labels[0].value, 0.5);
  EXPECT_EQ(labels[1].value, 1.0);
  const std::vector<AnswerRecord> partial = {answers[0]};
  EXPECT_THROW(label_qa(items, partial), keen::ConfigError);
}

TEST(Templates, ShippedRegistryLoads) {
  const auto reg = TemplateRegistry::load(keen::model::data_dir() / "templates.json");
  EXPECT_GE(reg.size(), 20u);
  EXPECT_NE(reg.at("place of birth").find("[subj]"), std::string::npos);
}

}  // namespace
