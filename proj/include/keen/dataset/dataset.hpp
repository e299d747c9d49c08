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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "keen/dataset/text_normalize.hpp"

namespace keen::dataset {

inline constexpr std::string_view kQaSchema = "keen.qa.v1";
inline constexpr std::string_view kOegSchema = "keen.oeg.v1";
inline constexpr std::string_view kPopSchema = "keen.pop.v1";
inline constexpr std::string_view kLabelSchema = "keen.label.v1";
inline constexpr std::string_view kAnswersSchema = "keen.answers.v1";
inline constexpr std::string_view kSplitSchema = "keen.split.v1";

enum class Task { kQA, kOEG };
std::string_view task_name(Task t);
Task parse_task(std::string_view s);

struct ObjectAnswer {
  std::string canonical;
  std::vector<std::string> aliases;
};

struct Triplet {
  std::string subject;
  std::vector<std::string> subject_aliases;
  std::string relation;
  std::vector<ObjectAnswer> objects;
  std::string object_type;
};

struct QAItem {
  std::string subject;
  std::string relation;
  std::vector<std::string> variants;
  std::vector<std::string> answer_aliases;
};

struct KnowledgeLabel {
  std::string subject;
  Task task = Task::kQA;
  double value = 0.0;
  int support = 0;
};

struct ClaimRecord {
  std::string subject;
  std::string claim;
  int label = 0;
};

// relation -> question template with a [subj] placeholder and an optional
// [obj_type] slot.
class TemplateRegistry {
 public:
  TemplateRegistry() = default;
  explicit TemplateRegistry(std::map<std::string, std::string> templates) : templates_(std::move(templates)) {}

  // {"relation": "template", ...} or {"templates": {...}}.
  static TemplateRegistry from_json(const nlohmann::json& j);
  static TemplateRegistry load(const std::filesystem::path& path);

  bool contains(const std::string& relation) const { return templates_.contains(relation); }
  const std::string& at(const std::string& relation) const;
  std::size_t size() const { return templates_.size(); }

 private:
  std::map<std::string, std::string> templates_;
};

struct GenerateOptions {
  std::size_t max_variants = 8;
};

// One QAItem per (subject, relation); triplets repeating a pair merge their
// objects. Variants are the template rendered with the subject and then each
// alias, capped at max_variants.
std::vector<QAItem> generate_questions(std::span<const Triplet> triplets, const TemplateRegistry& templates,
                                       const GenerateOptions& options = {});

// 1 iff the normalized output contains any normalized answer alias.
int score_answer(std::string_view model_output, const QAItem& item, const NormalizeOptions& options = {});

// A (subject, relation) pair is correct when any variant's output matches.
int score_pair(std::span<const std::string> variant_outputs, const QAItem& item,
               const NormalizeOptions& options = {});

KnowledgeLabel compute_qa_label(const std::string& subject, std::span<const int> correct_bits);
KnowledgeLabel compute_oeg_label(std::span<const ClaimRecord> claims);
// Groups claims by subject, in order of first appearance.
std::vector<KnowledgeLabel> compute_oeg_labels(std::span<const ClaimRecord> claims);

enum class Split { kTrain, kDev, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view s);

struct SplitAssignment {
  std::map<std::string, Split> assignment;
  std::uint64_t seed = 0;

  std::vector<std::string> subjects_in(Split s) const;
  std::size_t count(Split s) const;
  // Digest of the sorted subject list of one split (normalizer provenance).
  std::string split_hash(Split s) const;
};

// 65/15/20 subject-disjoint split. Sizes use largest-remainder rounding with
// ties going to train, then dev, then test.
SplitAssignment split_subjects(std::span<const std::string> subjects, std::uint64_t seed);

struct PopularityWindow {
  std::string first_month;  // inclusive "YYYY-MM"; empty = unbounded
  std::string last_month;
};

struct PopularityTable {
  std::map<std::string, std::uint64_t> views;
  std::vector<std::string> missing;  // expected subjects without any row
  std::size_t duplicate_rows = 0;    // repeated total rows that were summed
};

// keen.pop.v1 JSONL. Rows are {"subject", "views"} totals or
// {"subject", "month", "views"} monthly counts filtered by the window.
PopularityTable ingest_popularity(const std::filesystem::path& path, std::span<const std::string> expected_subjects,
                                  const PopularityWindow& window = {});
PopularityTable ingest_popularity_rows(std::span<const nlohmann::json> rows,
                                       std::span<const std::string> expected_subjects,
                                       const PopularityWindow& window = {});

// JSON (de)serialization for the JSONL schemas above.
nlohmann::json to_json(const Triplet& t);
Triplet triplet_from_json(const nlohmann::json& j);
nlohmann::json to_json(const QAItem& q);
QAItem qa_item_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KnowledgeLabel& l);
KnowledgeLabel label_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClaimRecord& c);
ClaimRecord claim_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SplitAssignment& s);
SplitAssignment split_from_json(const nlohmann::json& j);

std::vector<Triplet> load_triplets(const std::filesystem::path& path);
std::vector<QAItem> load_qa_items(const std::filesystem::path& path);
void save_qa_items(const std::filesystem::path& path, std::span<const QAItem> items);
std::vector<KnowledgeLabel> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, std::span<const KnowledgeLabel> labels);
std::vector<ClaimRecord> load_claims(const std::filesystem::path& path);

// Per-variant model outputs for one (subject, relation) pair.
struct AnswerRecord {
  std::string subject;
  std::string relation;
  std::vector<std::string> outputs;
};
nlohmann::json to_json(const AnswerRecord& a);
AnswerRecord answer_from_json(const nlohmann::json& j);
std::vector<AnswerRecord> load_answers(const std::filesystem::path& path);
void save_answers(const std::filesystem::path& path, std::span<const AnswerRecord> answers);

// Scores every answer record against its item and averages per subject.
// Subjects are returned in order of first appearance in `items`.
std::vector<KnowledgeLabel> label_qa(std::span<const QAItem> items, std::span<const AnswerRecord> answers,
                                     const NormalizeOptions& options = {});

// Distinct subjects in order of first appearance.
std::vector<std::string> subjects_of(std::span<const QAItem> items);

}  // namespace keen::dataset
