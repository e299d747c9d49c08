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

#include "keen/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "keen/error.hpp"
#include "keen/util/io.hpp"

namespace keen::analysis {
namespace {

constexpr const char* kBinLabels[] = {"0", "(0,0.25]", "(0.25,0.5]", "(0.5,0.75]", "(0.75,1]"};

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::string group_name(const std::optional<AccuracyGroup>& g) {
  if (!g) return "none";
  return *g == AccuracyGroup::kHigh ? "high" : "low";
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<std::string> default_hedging_phrases() {
  return {"nobody knows",
          "I'm sorry",
          "I can't seem to find the answer",
          "could you help me",
          "can anyone help me",
          "I'm not sure",
          "I don't know",
          "I'm not entirely sure",
          "could you please provide more",
          "could you provide more information",
          "provide more context",
          "clarify your question"};
}

HedgingConfig HedgingConfig::from_phrases(std::span<const std::string> raw, dataset::NormalizeOptions options) {
  HedgingConfig c;
  c.normalize = options;
  for (const auto& p : raw) {
    auto n = dataset::normalize_text(p, options);
    if (!n.empty() && std::find(c.phrases.begin(), c.phrases.end(), n) == c.phrases.end()) c.phrases.push_back(n);
  }
  if (c.phrases.empty()) throw ConfigError("hedging phrase list is empty");
  return c;
}

HedgingConfig HedgingConfig::defaults() {
  const auto raw = default_hedging_phrases();
  return from_phrases(raw);
}

HedgingConfig HedgingConfig::load(const std::filesystem::path& path) {
  const auto j = util::read_json(path);
  const nlohmann::json& list = j.is_object() ? j.at("phrases") : j;
  const auto raw = list.get<std::vector<std::string>>();
  return from_phrases(raw);
}

bool is_hedge(std::string_view response, const HedgingConfig& config) {
  const auto text = dataset::normalize_text(response, config.normalize);
  return std::any_of(config.phrases.begin(), config.phrases.end(),
                     [&](const std::string& p) { return text.find(p) != std::string::npos; });
}

double hedging_fraction(std::span<const std::string> responses, const HedgingConfig& config) {
  if (responses.empty()) throw EmptySupportError("hedging fraction needs at least one response");
  std::size_t hedged = 0;
  for (const auto& r : responses) hedged += is_hedge(r, config) ? 1 : 0;
  return static_cast<double>(hedged) / static_cast<double>(responses.size());
}

std::size_t hedging_bin(double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw RangeError("hedging fraction outside [0,1]");
  if (f == 0.0) return 0;
  if (f <= 0.25) return 1;
  if (f <= 0.5) return 2;
  if (f <= 0.75) return 3;
  return 4;
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptySupportError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

HedgingSummary hedging_correlation(std::span<const double> keen_scores, std::span<const double> hedging_fractions) {
  HedgingSummary s;
  s.n = keen_scores.size();
  s.pearson_r = eval::pearson(keen_scores, hedging_fractions);
  s.p_value = eval::pearson_p_value(s.pearson_r, s.n).p;
  std::vector<std::vector<double>> grouped(5);
  for (std::size_t i = 0; i < s.n; ++i) grouped[hedging_bin(hedging_fractions[i])].push_back(keen_scores[i]);
  for (std::size_t b = 0; b < 5; ++b) {
    HedgingBin bin{kBinLabels[b], grouped[b].size(), std::nullopt, std::nullopt};
    if (!grouped[b].empty()) {
      bin.mean = mean_of(grouped[b]);
      bin.median = median(grouped[b]);
    }
    s.bins.push_back(bin);
  }
  return s;
}

nlohmann::json to_json(const HedgingSummary& s) {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : s.bins) {
    bins.push_back({{"bin", b.label}, {"count", b.count}, {"mean", optional_json(b.mean)}, {"median", optional_json(b.median)}});
  }
  return {{"n", s.n}, {"pearson_r", s.pearson_r}, {"p_value", s.p_value}, {"bins", bins}};
}

std::vector<std::size_t> token_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] != values[b] ? values[a] > values[b] : a < b;
  });
  std::vector<std::size_t> ranks(values.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = r;
  return ranks;
}

std::optional<AccuracyGroup> accuracy_group(double qa_accuracy) {
  if (qa_accuracy == 1.0) return AccuracyGroup::kHigh;
  if (qa_accuracy == 0.0) return AccuracyGroup::kLow;
  return std::nullopt;
}

SignedSelection split_by_sign(std::span<const double> vp_theta, std::size_t k) {
  const auto top = features::select_top_k(vp_theta, k);
  SignedSelection out;
  for (int id : top.token_ids) {
    const double w = vp_theta[static_cast<std::size_t>(id)];
    if (w > 0.0) out.positive.push_back(id);
    if (w < 0.0) out.negative.push_back(id);
  }
  return out;
}

TokenRankProfile token_rank_profile(const std::string& subject, double qa_accuracy,
                                    std::span<const double> averaged_projection, std::span<const int> positive,
                                    std::span<const int> negative) {
  if (positive.empty() || negative.empty()) throw SizingError("token rank profile needs non-empty selections");
  const std::set<int> pos(positive.begin(), positive.end());
  for (int id : negative) {
    if (pos.contains(id)) throw ConfigError("token " + std::to_string(id) + " is in both selections");
  }
  const auto ranks = token_ranks(averaged_projection);
  auto med = [&](std::span<const int> ids) {
    std::vector<double> r;
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= ranks.size()) {
        throw RangeError("token id " + std::to_string(id) + " outside the vocabulary");
      }
      r.push_back(static_cast<double>(ranks[static_cast<std::size_t>(id)]));
    }
    return median(std::move(r));
  };
  return {subject, accuracy_group(qa_accuracy), med(positive), med(negative)};
}

TokenRankReport summarize_ranks(std::vector<TokenRankProfile> profiles) {
  TokenRankReport r;
  std::vector<double> hp, hn, lp, ln;
  for (const auto& p : profiles) {
    if (!p.group) continue;
    auto& pv = *p.group == AccuracyGroup::kHigh ? hp : lp;
    auto& nv = *p.group == AccuracyGroup::kHigh ? hn : ln;
    pv.push_back(p.median_rank_pos_weight);
    nv.push_back(p.median_rank_neg_weight);
  }
  if (!hp.empty()) r.high = {hp.size(), median(hp), median(hn)};
  if (!lp.empty()) r.low = {lp.size(), median(lp), median(ln)};
  r.profiles = std::move(profiles);
  return r;
}

nlohmann::json to_json(const TokenRankReport& r, const SignedSelection& selection, const model::Tokenizer* tok) {
  auto names = [&](const std::vector<int>& ids) {
    nlohmann::json out = nlohmann::json::array();
    for (int id : ids) {
      nlohmann::json e = {{"id", id}};
      if (tok != nullptr) e["text"] = tok->decode(std::span<const int>(&id, 1));
      out.push_back(e);
    }
    return out;
  };
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& p : r.profiles) {
    profiles.push_back({{"subject", p.subject},
                        {"group", group_name(p.group)},
                        {"median_rank_pos_weight", p.median_rank_pos_weight},
                        {"median_rank_neg_weight", p.median_rank_neg_weight}});
  }
  auto group = [](const GroupRankSummary& g) {
    return nlohmann::json{{"subjects", g.subjects},
                          {"median_rank_pos_weight", g.median_rank_pos_weight},
                          {"median_rank_neg_weight", g.median_rank_neg_weight}};
  };
  return {{"positive_tokens", names(selection.positive)},
          {"negative_tokens", names(selection.negative)},
          {"high", group(r.high)},
          {"low", group(r.low)},
          {"profiles", profiles}};
}

ClusterReport cluster_report(std::span<const std::string> subjects, std::span<const std::vector<double>> vp_features,
                             std::span<const double> qa_accuracy, int token_id, double threshold) {
  if (subjects.size() != vp_features.size() || subjects.size() != qa_accuracy.size()) {
    throw ShapeError("cluster report inputs have different lengths");
  }
  if (subjects.empty()) throw EmptySupportError("cluster report needs at least one subject");
  if (!std::isfinite(threshold)) throw RangeError("cluster threshold must be finite");
  ClusterReport r;
  r.token_id = token_id;
  r.threshold = threshold;
  double sum_logit = 0.0, sum_qa = 0.0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& v = vp_features[i];
    if (token_id < 0 || static_cast<std::size_t>(token_id) >= v.size()) {
      throw RangeError("token id " + std::to_string(token_id) + " outside a vocabulary of " + std::to_string(v.size()));
    }
    const double logit = v[static_cast<std::size_t>(token_id)];
    sum_logit += logit;
    sum_qa += qa_accuracy[i];
    if (logit >= threshold) r.members.push_back({subjects[i], logit, qa_accuracy[i]});
  }
  r.mean_logit = sum_logit / static_cast<double>(subjects.size());
  r.mean_qa = sum_qa / static_cast<double>(subjects.size());
  return r;
}

nlohmann::json to_json(const ClusterReport& r) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : r.members) members.push_back({{"subject", m.subject}, {"logit", m.logit}, {"qa", m.qa_accuracy}});
  return {{"token_id", r.token_id},
          {"threshold", r.threshold},
          {"members", members},
          {"mean_entity", {{"logit", r.mean_logit}, {"qa", r.mean_qa}}}};
}

DeltaReport summarize_deltas(std::vector<DeltaRow> rows) {
  DeltaReport r;
  for (const auto& row : rows) {
    for (double v : {row.keen_before, row.keen_after, row.qa_before, row.qa_after}) {
      if (!(v >= 0.0 && v <= 1.0)) throw RangeError("delta row for '" + row.subject + "' has a score outside [0,1]");
    }
    DeltaSummary& s = row.is_target ? r.targets : r.non_targets;
    ++s.count;
    s.mean_keen_delta += row.keen_after - row.keen_before;
    s.mean_qa_delta += row.qa_after - row.qa_before;
  }
  for (DeltaSummary* s : {&r.targets, &r.non_targets}) {
    if (s->count > 0) {
      s->mean_keen_delta /= static_cast<double>(s->count);
      s->mean_qa_delta /= static_cast<double>(s->count);
    }
  }
  r.rows = std::move(rows);
  return r;
}

void check_compatible(const model::ModelHandle& a, const model::ModelHandle& b) {
  if (a.num_layers() != b.num_layers() || a.hidden_dim() != b.hidden_dim() || a.vocab_size() != b.vocab_size()) {
    throw CompatibilityError("models '" + a.model_id() + "' and '" + b.model_id() + "' differ in shape");
  }
  if (a.tokenizer().kind() != b.tokenizer().kind()) {
    throw CompatibilityError("models '" + a.model_id() + "' and '" + b.model_id() + "' use different tokenizers");
  }
  constexpr std::string_view kProbe = "This document describes the tokenizer check, 1769.";
  const auto ta = a.tokenizer().encode(kProbe);
  const auto tb = b.tokenizer().encode(kProbe);
  const bool same = ta.size() == tb.size() && std::equal(ta.begin(), ta.end(), tb.begin(), [](const auto& x, const auto& y) {
                      return x.id == y.id && x.begin == y.begin && x.end == y.end;
                    });
  if (!same) throw CompatibilityError("models '" + a.model_id() + "' and '" + b.model_id() + "' tokenize differently");
}

DeltaReport delta_report(const model::ModelHandle& before, const model::ModelHandle& after, const DeltaInputs& in) {
  if (in.probe == nullptr || in.stats == nullptr) throw ConfigError("delta report needs a probe and its normalizer");
  check_compatible(before, after);
  const probe::Probe& p = *in.probe;
  if (!p.model_id.empty() && p.model_id != before.model_id()) {
    throw ProvenanceError("probe was trained on '" + p.model_id + "', not on the pre-fine-tuning model '" +
                          before.model_id() + "'");
  }

  const auto labels_before = dataset::label_qa(in.items, in.answers_before);
  const auto labels_after = dataset::label_qa(in.items, in.answers_after);
  std::map<std::string, double> qa_b, qa_a;
  for (const auto& l : labels_before) qa_b[l.subject] = l.value;
  for (const auto& l : labels_after) qa_a[l.subject] = l.value;

  features::TokenSelection selection{p.token_ids, p.id(), {}};
  features::ExtractOptions opt;
  opt.variant = p.variant;
  opt.layers = p.layers;
  opt.selection = p.variant == features::Variant::kVPk ? &selection : nullptr;
  opt.jobs = in.jobs;
  const auto raw_b = features::extract_raw(before, in.subjects, opt);
  const auto raw_a = features::extract_raw(after, in.subjects, opt);

  std::vector<DeltaRow> rows;
  for (std::size_t i = 0; i < in.subjects.size(); ++i) {
    const auto& s = in.subjects[i];
    if (!qa_b.contains(s) || !qa_a.contains(s)) throw CoverageError("no QA answers for subject '" + s + "'");
    const auto fb = features::finalize(*in.stats, raw_b[i]);
    const auto fa = features::finalize(*in.stats, raw_a[i]);
    rows.push_back({s, probe::predict(p, fb), probe::predict(p, fa), qa_b[s], qa_a[s], in.targets.contains(s)});
  }
  return summarize_deltas(std::move(rows));
}

nlohmann::json to_json(const DeltaReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"subject", row.subject},
                    {"keen_before", row.keen_before},
                    {"keen_after", row.keen_after},
                    {"qa_before", row.qa_before},
                    {"qa_after", row.qa_after},
                    {"is_target", row.is_target}});
  }
  auto summary = [](const DeltaSummary& s) {
    return nlohmann::json{{"count", s.count}, {"mean_keen_delta", s.mean_keen_delta}, {"mean_qa_delta", s.mean_qa_delta}};
  };
  return {{"rows", rows}, {"targets", summary(r.targets)}, {"non_targets", summary(r.non_targets)}};
}

DeltaReport delta_report_from_json(const nlohmann::json& j) {
  std::vector<DeltaRow> rows;
  try {
    for (const auto& row : j.at("rows")) {
      rows.push_back({row.at("subject").get<std::string>(), row.at("keen_before").get<double>(),
                      row.at("keen_after").get<double>(), row.at("qa_before").get<double>(),
                      row.at("qa_after").get<double>(), row.value("is_target", false)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed delta report: ") + e.what());
  }
  return summarize_deltas(std::move(rows));
}

}  // namespace keen::analysis
