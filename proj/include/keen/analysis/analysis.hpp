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

#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keen/dataset/dataset.hpp"
#include "keen/eval/metrics.hpp"
#include "keen/features/features.hpp"
#include "keen/model/model_handle.hpp"
#include "keen/probe/probe.hpp"

namespace keen::analysis {

// Hedging phrases, stored normalized.
struct HedgingConfig {
  std::vector<std::string> phrases;
  dataset::NormalizeOptions normalize;

  static HedgingConfig from_phrases(std::span<const std::string> raw, dataset::NormalizeOptions options = {});
  static HedgingConfig defaults();
  static HedgingConfig load(const std::filesystem::path& path);
};

std::vector<std::string> default_hedging_phrases();

bool is_hedge(std::string_view response, const HedgingConfig& config);
double hedging_fraction(std::span<const std::string> responses, const HedgingConfig& config);

struct HedgingBin {
  std::string label;
  std::size_t count = 0;
  std::optional<double> mean;
  std::optional<double> median;
};

struct HedgingSummary {
  std::size_t n = 0;
  double pearson_r = 0.0;
  double p_value = 1.0;
  std::vector<HedgingBin> bins;
};

// Bin index for {0, (0,.25], (.25,.5], (.5,.75], (.75,1]}.
std::size_t hedging_bin(double fraction);

HedgingSummary hedging_correlation(std::span<const double> keen_scores, std::span<const double> hedging_fractions);
nlohmann::json to_json(const HedgingSummary& s);

double median(std::vector<double> values);

// Rank of every token under descending value; rank 0 is the largest, ties go
// to the lower id.
std::vector<std::size_t> token_ranks(std::span<const double> values);

enum class AccuracyGroup { kHigh, kLow };
std::optional<AccuracyGroup> accuracy_group(double qa_accuracy);

struct TokenRankProfile {
  std::string subject;
  std::optional<AccuracyGroup> group;
  double median_rank_pos_weight = 0.0;
  double median_rank_neg_weight = 0.0;
};

// Splits the k most influential tokens of a VP probe by weight sign.
struct SignedSelection {
  std::vector<int> positive;
  std::vector<int> negative;
};
SignedSelection split_by_sign(std::span<const double> vp_theta, std::size_t k);

// Ranks come from the layer-averaged normalized projection (a VP feature vector).
TokenRankProfile token_rank_profile(const std::string& subject, double qa_accuracy,
                                    std::span<const double> averaged_projection, std::span<const int> positive,
                                    std::span<const int> negative);

struct GroupRankSummary {
  std::size_t subjects = 0;
  double median_rank_pos_weight = 0.0;
  double median_rank_neg_weight = 0.0;
};
struct TokenRankReport {
  std::vector<TokenRankProfile> profiles;
  GroupRankSummary high;
  GroupRankSummary low;
};
TokenRankReport summarize_ranks(std::vector<TokenRankProfile> profiles);
nlohmann::json to_json(const TokenRankReport& r, const SignedSelection& selection, const model::Tokenizer* tok);

struct ClusterMember {
  std::string subject;
  double logit = 0.0;
  double qa_accuracy = 0.0;
};

struct ClusterReport {
  int token_id = 0;
  double threshold = 0.0;
  std::vector<ClusterMember> members;  // input order
  double mean_logit = 0.0;             // over every subject
  double mean_qa = 0.0;
};

// Subjects whose normalized averaged logit for token_id is at least threshold.
ClusterReport cluster_report(std::span<const std::string> subjects, std::span<const std::vector<double>> vp_features,
                             std::span<const double> qa_accuracy, int token_id, double threshold);
nlohmann::json to_json(const ClusterReport& r);

struct DeltaRow {
  std::string subject;
  double keen_before = 0.0;
  double keen_after = 0.0;
  double qa_before = 0.0;
  double qa_after = 0.0;
  bool is_target = false;
};

struct DeltaSummary {
  std::size_t count = 0;
  double mean_keen_delta = 0.0;
  double mean_qa_delta = 0.0;
};

struct DeltaReport {
  std::vector<DeltaRow> rows;
  DeltaSummary targets;
  DeltaSummary non_targets;
};

DeltaReport summarize_deltas(std::vector<DeltaRow> rows);

struct DeltaInputs {
  const probe::Probe* probe = nullptr;
  const features::NormalizerStats* stats = nullptr;
  std::span<const std::string> subjects;
  std::set<std::string> targets;
  std::span<const dataset::QAItem> items;
  std::span<const dataset::AnswerRecord> answers_before;
  std::span<const dataset::AnswerRecord> answers_after;
  int jobs = 1;
};

// Throws CompatibilityError unless the two models share tokenizer and shapes.
void check_compatible(const model::ModelHandle& a, const model::ModelHandle& b);

// Applies the probe trained on model_before to features from both models.
DeltaReport delta_report(const model::ModelHandle& before, const model::ModelHandle& after, const DeltaInputs& in);

nlohmann::json to_json(const DeltaReport& r);
DeltaReport delta_report_from_json(const nlohmann::json& j);

}  // namespace keen::analysis
