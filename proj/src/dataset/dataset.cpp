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

#include "keen/dataset/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "keen/error.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"
#include "keen/util/rng.hpp"

namespace keen::dataset {
namespace {

void check_schema(const nlohmann::json& j, std::string_view expected) {
  if (!j.contains("schema")) return;
  const auto got = j.at("schema").get<std::string>();
  if (got != expected) throw VersionError("expected schema " + std::string(expected) + ", found " + got);
}

void push_unique(std::vector<std::string>& v, const std::string& s) {
  if (!s.empty() && std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) {
    s.replace(p, from.size(), to);
  }
  return s;
}

template <typename T, typename F>
std::vector<T> load_rows(const std::filesystem::path& path, F&& parse) {
  const auto rows = util::read_jsonl(path);
  std::vector<T> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      out.push_back(parse(rows[i]));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), i + 1);
    }
  }
  return out;
}

}  // namespace

std::string_view task_name(Task t) { return t == Task::kQA ? "QA" : "OEG"; }

Task parse_task(std::string_view s) {
  if (s == "QA" || s == "qa") return Task::kQA;
  if (s == "OEG" || s == "oeg") return Task::kOEG;
  throw ConfigError("unknown task '" + std::string(s) + "' (expected QA or OEG)");
}

TemplateRegistry TemplateRegistry::from_json(const nlohmann::json& j) {
  const nlohmann::json& table = j.contains("templates") ? j.at("templates") : j;
  std::map<std::string, std::string> out;
  for (auto it = table.begin(); it != table.end(); ++it) out.emplace(it.key(), it.value().get<std::string>());
  return TemplateRegistry(std::move(out));
}

TemplateRegistry TemplateRegistry::load(const std::filesystem::path& path) { return from_json(util::read_json(path)); }

const std::string& TemplateRegistry::at(const std::string& relation) const {
  auto it = templates_.find(relation);
  if (it == templates_.end()) throw ConfigError("no question template for relation '" + relation + "'");
  return it->second;
}

std::vector<QAItem> generate_questions(std::span<const Triplet> triplets, const TemplateRegistry& templates,
                                       const GenerateOptions& options) {
  std::vector<std::string> missing;
  for (const auto& t : triplets) {
    if (!templates.contains(t.relation)) push_unique(missing, t.relation);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& r : missing) list += (list.empty() ? "" : ", ") + r;
    throw ConfigError("missing question templates for relations: " + list);
  }

  std::vector<QAItem> items;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& t : triplets) {
    if (t.subject.empty()) throw ConfigError("triplet with empty subject");
    if (t.objects.empty()) throw ConfigError("triplet (" + t.subject + ", " + t.relation + ") has no objects");
    const std::string& tmpl = templates.at(t.relation);
    if (tmpl.find("[obj_type]") != std::string::npos && t.object_type.empty()) {
      throw ConfigError("template for '" + t.relation + "' needs an object type for subject '" + t.subject + "'");
    }
    const std::string typed = replace_all(tmpl, "[obj_type]", t.object_type);

    auto [it, inserted] = index.emplace(std::make_pair(t.subject, t.relation), items.size());
    if (inserted) items.push_back({t.subject, t.relation, {}, {}});
    QAItem& item = items[it->second];

    std::vector<std::string> surfaces{t.subject};
    for (const auto& a : t.subject_aliases) push_unique(surfaces, a);
    for (const auto& s : surfaces) {
      if (item.variants.size() >= options.max_variants) break;
      push_unique(item.variants, replace_all(typed, "[subj]", s));
    }
    for (const auto& o : t.objects) {
      push_unique(item.answer_aliases, o.canonical);
      for (const auto& a : o.aliases) push_unique(item.answer_aliases, a);
    }
    if (item.answer_aliases.empty()) {
      throw ConfigError("triplet (" + t.subject + ", " + t.relation + ") has no non-empty answer");
    }
  }
  return items;
}

int score_answer(std::string_view model_output, const QAItem& item, const NormalizeOptions& options) {
  const std::string out = normalize_text(model_output, options);
  for (const auto& alias : item.answer_aliases) {
    const std::string a = normalize_text(alias, options);
    if (!a.empty() && out.find(a) != std::string::npos) return 1;
  }
  return 0;
}

int score_pair(std::span<const std::string> variant_outputs, const QAItem& item, const NormalizeOptions& options) {
  for (const auto& o : variant_outputs) {
    if (score_answer(o, item, options) == 1) return 1;
  }
  return 0;
}

KnowledgeLabel compute_qa_label(const std::string& subject, std::span<const int> correct_bits) {
  if (correct_bits.empty()) throw EmptySupportError("subject '" + subject + "' has no scored questions");
  int correct = 0;
  for (int b : correct_bits) {
    if (b != 0 && b != 1) throw RangeError("correctness bits must be 0 or 1");
    correct += b;
  }
  const int n = static_cast<int>(correct_bits.size());
  return {subject, Task::kQA, static_cast<double>(correct) / n, n};
}

KnowledgeLabel compute_oeg_label(std::span<const ClaimRecord> claims) {
  if (claims.empty()) throw EmptySupportError("no claims to label");
  int supported = 0;
  for (const auto& c : claims) {
    if (c.label != 0 && c.label != 1) throw RangeError("claim labels must be 0 or 1");
    if (c.subject != claims.front().subject) {
      throw ConfigError("claims for several subjects passed to compute_oeg_label");
    }
    supported += c.label;
  }
  const int m = static_cast<int>(claims.size());
  return {claims.front().subject, Task::kOEG, static_cast<double>(supported) / m, m};
}

std::vector<KnowledgeLabel> compute_oeg_labels(std::span<const ClaimRecord> claims) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<ClaimRecord>> by_subject;
  for (const auto& c : claims) {
    if (!by_subject.contains(c.subject)) order.push_back(c.subject);
    by_subject[c.subject].push_back(c);
  }
  std::vector<KnowledgeLabel> out;
  for (const auto& s : order) out.push_back(compute_oeg_label(by_subject[s]));
  return out;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

std::vector<std::string> SplitAssignment::subjects_in(Split s) const {
  std::vector<std::string> out;
  for (const auto& [subject, split] : assignment) {
    if (split == s) out.push_back(subject);
  }
  return out;
}

std::size_t SplitAssignment::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(assignment.begin(), assignment.end(), [s](const auto& kv) { return kv.second == s; }));
}

std::string SplitAssignment::split_hash(Split s) const {
  std::string joined;
  for (const auto& subject : subjects_in(s)) {
    joined += subject;
    joined.push_back('\n');
  }
  return util::sha256_hex(joined);
}

SplitAssignment split_subjects(std::span<const std::string> subjects, std::uint64_t seed) {
  std::vector<std::string> unique(subjects.begin(), subjects.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const std::size_t n = unique.size();
  if (n < 10) throw SizingError("need at least 10 subjects to split, got " + std::to_string(n));

  constexpr std::array<std::size_t, 3> kPercent = {65, 15, 20};
  std::array<std::size_t, 3> sizes{};
  std::array<std::size_t, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    sizes[k] = n * kPercent[k] / 100;
    remainders[k] = n * kPercent[k] % 100;
    assigned += sizes[k];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];

  util::Rng rng(seed);
  rng.shuffle(std::span<std::string>(unique));
  SplitAssignment out;
  out.seed = seed;
  std::size_t i = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < sizes[k]; ++c, ++i) out.assignment.emplace(unique[i], static_cast<Split>(k));
  }
  return out;
}

PopularityTable ingest_popularity_rows(std::span<const nlohmann::json> rows,
                                       std::span<const std::string> expected_subjects,
                                       const PopularityWindow& window) {
  PopularityTable table;
  std::set<std::string> seen_total;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    try {
      check_schema(r, kPopSchema);
      const auto subject = r.at("subject").get<std::string>();
      const auto& v = r.at("views");
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ParseError("views must be a non-negative integer", i + 1);
      }
      const auto views = v.get<std::uint64_t>();
      if (r.contains("month")) {
        const auto month = r.at("month").get<std::string>();
        if (!window.first_month.empty() && month < window.first_month) continue;
        if (!window.last_month.empty() && month > window.last_month) continue;
      } else if (!seen_total.insert(subject).second) {
        ++table.duplicate_rows;
      }
      table.views[subject] += views;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed popularity row: ") + e.what(), i + 1);
    }
  }
  for (const auto& s : expected_subjects) {
    if (!table.views.contains(s)) table.missing.push_back(s);
  }
  return table;
}

PopularityTable ingest_popularity(const std::filesystem::path& path, std::span<const std::string> expected_subjects,
                                  const PopularityWindow& window) {
  const auto rows = util::read_jsonl(path);
  return ingest_popularity_rows(rows, expected_subjects, window);
}

nlohmann::json to_json(const Triplet& t) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : t.objects) objects.push_back({{"canonical", o.canonical}, {"aliases", o.aliases}});
  return {{"subject", t.subject},   {"subject_aliases", t.subject_aliases}, {"relation", t.relation},
          {"objects", objects},     {"object_type", t.object_type}};
}

Triplet triplet_from_json(const nlohmann::json& j) {
  Triplet t;
  t.subject = j.at("subject").get<std::string>();
  t.subject_aliases = j.value("subject_aliases", std::vector<std::string>{});
  t.relation = j.at("relation").get<std::string>();
  for (const auto& o : j.at("objects")) {
    if (o.is_string()) {
      t.objects.push_back({o.get<std::string>(), {}});
    } else {
      t.objects.push_back({o.at("canonical").get<std::string>(), o.value("aliases", std::vector<std::string>{})});
    }
  }
  t.object_type = j.value("object_type", std::string{});
  return t;
}

nlohmann::json to_json(const QAItem& q) {
  return {{"schema", kQaSchema},     {"subject", q.subject}, {"relation", q.relation},
          {"variants", q.variants},  {"answer_aliases", q.answer_aliases}};
}

QAItem qa_item_from_json(const nlohmann::json& j) {
  check_schema(j, kQaSchema);
  QAItem q{j.at("subject").get<std::string>(), j.at("relation").get<std::string>(),
           j.at("variants").get<std::vector<std::string>>(), j.at("answer_aliases").get<std::vector<std::string>>()};
  if (q.variants.empty() || q.answer_aliases.empty()) {
    throw ConfigError("QA item (" + q.subject + ", " + q.relation + ") needs variants and answer aliases");
  }
  return q;
}

nlohmann::json to_json(const KnowledgeLabel& l) {
  return {{"schema", kLabelSchema}, {"subject", l.subject}, {"task", task_name(l.task)},
          {"value", l.value},       {"support", l.support}};
}

KnowledgeLabel label_from_json(const nlohmann::json& j) {
  check_schema(j, kLabelSchema);
  KnowledgeLabel l{j.at("subject").get<std::string>(), parse_task(j.at("task").get<std::string>()),
                   j.at("value").get<double>(), j.value("support", 0)};
  if (!(l.value >= 0.0 && l.value <= 1.0)) throw RangeError("label for '" + l.subject + "' is outside [0,1]");
  return l;
}

nlohmann::json to_json(const ClaimRecord& c) {
  return {{"schema", kOegSchema}, {"subject", c.subject}, {"claim", c.claim}, {"label", c.label}};
}

ClaimRecord claim_from_json(const nlohmann::json& j) {
  check_schema(j, kOegSchema);
  ClaimRecord c{j.at("subject").get<std::string>(), j.value("claim", std::string{}), j.at("label").get<int>()};
  if (c.label != 0 && c.label != 1) throw RangeError("claim label must be 0 or 1");
  return c;
}

nlohmann::json to_json(const SplitAssignment& s) {
  nlohmann::json j = {{"schema", kSplitSchema}, {"seed", s.seed}};
  for (Split sp : {Split::kTrain, Split::kDev, Split::kTest}) j[std::string(split_name(sp))] = s.subjects_in(sp);
  return j;
}

SplitAssignment split_from_json(const nlohmann::json& j) {
  check_schema(j, kSplitSchema);
  SplitAssignment s;
  s.seed = j.value("seed", std::uint64_t{0});
  for (Split sp : {Split::kTrain, Split::kDev, Split::kTest}) {
    for (const auto& subject : j.at(std::string(split_name(sp)))) {
      if (!s.assignment.emplace(subject.get<std::string>(), sp).second) {
        throw ConfigError("subject '" + subject.get<std::string>() + "' appears in two splits");
      }
    }
  }
  return s;
}

std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  return load_rows<Triplet>(path, triplet_from_json);
}
std::vector<QAItem> load_qa_items(const std::filesystem::path& path) {
  return load_rows<QAItem>(path, qa_item_from_json);
}
void save_qa_items(const std::filesystem::path& path, std::span<const QAItem> items) {
  std::vector<nlohmann::json> rows;
  for (const auto& q : items) rows.push_back(to_json(q));
  util::write_jsonl(path, rows);
}
std::vector<KnowledgeLabel> load_labels(const std::filesystem::path& path) {
  return load_rows<KnowledgeLabel>(path, label_from_json);
}
void save_labels(const std::filesystem::path& path, std::span<const KnowledgeLabel> labels) {
  std::vector<nlohmann::json> rows;
  for (const auto& l : labels) rows.push_back(to_json(l));
  util::write_jsonl(path, rows);
}
std::vector<ClaimRecord> load_claims(const std::filesystem::path& path) {
  return load_rows<ClaimRecord>(path, claim_from_json);
}

nlohmann::json to_json(const AnswerRecord& a) {
  return {{"schema", kAnswersSchema}, {"subject", a.subject}, {"relation", a.relation}, {"outputs", a.outputs}};
}
AnswerRecord answer_from_json(const nlohmann::json& j) {
  check_schema(j, kAnswersSchema);
  return {j.at("subject").get<std::string>(), j.at("relation").get<std::string>(),
          j.at("outputs").get<std::vector<std::string>>()};
}
std::vector<AnswerRecord> load_answers(const std::filesystem::path& path) {
  return load_rows<AnswerRecord>(path, answer_from_json);
}
void save_answers(const std::filesystem::path& path, std::span<const AnswerRecord> answers) {
  std::vector<nlohmann::json> rows;
  for (const auto& a : answers) rows.push_back(to_json(a));
  util::write_jsonl(path, rows);
}

std::vector<KnowledgeLabel> label_qa(std::span<const QAItem> items, std::span<const AnswerRecord> answers,
                                     const NormalizeOptions& options) {
  std::map<std::pair<std::string, std::string>, const AnswerRecord*> by_pair;
  for (const auto& a : answers) by_pair[{a.subject, a.relation}] = &a;
  std::vector<std::string> order;
  std::map<std::string, std::vector<int>> bits;
  for (const auto& item : items) {
    auto it = by_pair.find({item.subject, item.relation});
    if (it == by_pair.end()) {
      throw ConfigError("no model answers for (" + item.subject + ", " + item.relation + ")");
    }
    if (!bits.contains(item.subject)) order.push_back(item.subject);
    bits[item.subject].push_back(score_pair(it->second->outputs, item, options));
  }
  std::vector<KnowledgeLabel> out;
  for (const auto& s : order) out.push_back(compute_qa_label(s, bits[s]));
  return out;
}

std::vector<std::string> subjects_of(std::span<const QAItem> items) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& q : items) {
    if (seen.insert(q.subject).second) out.push_back(q.subject);
  }
  return out;
}

}  // namespace keen::dataset
