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
#include <filesystem>
#include <numeric>
#include <random>

#include "keen/error.hpp"
#include "keen/features/features.hpp"
#include "keen/model/registry.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace keen::features;
using keen::model::make_mock_model;
using keen::model::make_mock_weights;

namespace {

const std::vector<std::string> kSubjects = {"Napoleon", "Rome", "Ada Lovelace", "Paris", "the moon", "Beau Biden"};

RawFeatures raw(std::string s, std::vector<double> v) { return {std::move(s), std::move(v)}; }

// Explicit pipeline: scan min/max per column, scale with clamp, average layers.
std::vector<std::vector<double>> brute_pipeline(const std::vector<std::vector<double>>& rows, std::size_t n_layers,
                                                std::size_t dim) {
  const std::size_t cols = n_layers * dim;
  std::vector<double> lo(cols, 1e300), hi(cols, -1e300);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (r[c] < lo[c]) lo[c] = r[c];
      if (r[c] > hi[c]) hi[c] = r[c];
    }
  }
  std::vector<std::vector<double>> out;
  for (const auto& r : rows) {
    std::vector<double> v(dim, 0.0);
    for (std::size_t l = 0; l < n_layers; ++l) {
      for (std::size_t i = 0; i < dim; ++i) {
        const std::size_t c = l * dim + i;
        double x = hi[c] == lo[c] ? 0.0 : (r[c] - lo[c]) / (hi[c] - lo[c]);
        x = std::min(1.0, std::max(0.0, x));
        v[i] += x;
      }
    }
    for (auto& x : v) x /= static_cast<double>(n_layers);
    out.push_back(v);
  }
  return out;
}

enum class Source { kHidden, kLogits, kAttn, kMlp };

std::vector<std::vector<double>> brute_raw(Source src, const std::vector<int>& layers,
                                           const std::vector<int>* tokens = nullptr) {
  const auto w = make_mock_weights();
  auto m = make_mock_model();
  std::vector<std::vector<double>> rows;
  for (const auto& s : kSubjects) {
    const auto loc = keen::model::locate_last_subject_token(*m, kFeaturePrompt, s);
    const auto bt = keen::oracle::brute_forward(w, loc.token_ids);
    const std::size_t p = loc.last_subject_index;
    std::vector<double> row;
    for (int l : layers) {
      std::vector<double> v;
      switch (src) {
        case Source::kHidden: v = bt.hidden[l][p]; break;
        case Source::kLogits: v = keen::oracle::brute_logits(w, bt.hidden[l][p]); break;
        case Source::kAttn: v = bt.attn[l - 1][p]; break;
        case Source::kMlp: v = bt.mlp[l - 1][p]; break;
      }
      if (tokens != nullptr) {
        std::vector<double> picked;
        for (int t : *tokens) picked.push_back(v[t]);
        v = picked;
      }
      row.insert(row.end(), v.begin(), v.end());
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<FeatureVector> pipeline(Variant v, const TokenSelection* sel = nullptr) {
  auto m = make_mock_model();
  ExtractOptions o;
  o.variant = v;
  o.selection = sel;
  o.layers = layers_for(v, m->num_layers());
  const auto r = extract_raw(*m, kSubjects, o);
  const auto stats = fit_normalizer(r, v, o.layers, feature_dim(v, *m, sel));
  std::vector<FeatureVector> out;
  for (const auto& x : r) out.push_back(finalize(stats, x, m->model_id()));
  return out;
}

void expect_close(const std::vector<FeatureVector>& got, const std::vector<std::vector<double>>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t s = 0; s < got.size(); ++s) {
    ASSERT_EQ(got[s].values.size(), want[s].size());
    for (std::size_t i = 0; i < want[s].size(); ++i) EXPECT_NEAR(got[s].values[i], want[s][i], tol) << s << "," << i;
  }
}

TEST(Layers, BandTable) {
  EXPECT_EQ(select_layers(48).layers, (std::vector<int>{35, 36, 37}));
  EXPECT_EQ(select_layers(32).layers, (std::vector<int>{23, 24, 25}));
  EXPECT_EQ(select_layers(36).layers, (std::vector<int>{26, 27, 28}));
  EXPECT_EQ(select_layers(12).layers, (std::vector<int>{8, 9, 10}));
  EXPECT_EQ(select_layers(4).layers, (std::vector<int>{1, 2, 3}));
  EXPECT_THROW(select_layers(3), keen::SizingError);
  for (int L = 4; L <= 96; ++L) {
    const auto s = select_layers(L);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_GE(s.layers.front(), 1);
    EXPECT_LE(s.layers.back(), L - 1);
    EXPECT_TRUE(std::is_sorted(s.layers.begin(), s.layers.end()));
  }
  EXPECT_EQ(layers_for(Variant::kATTN, 4).layers, std::vector<int>{4});
  EXPECT_EQ(layers_for(Variant::kFC, 32).layers, std::vector<int>{32});
  EXPECT_THROW(make_layer_set({0, 2}, 4), keen::BoundsError);
  EXPECT_EQ(make_layer_set({3, 1}, 4).layers, (std::vector<int>{1, 3}));
  EXPECT_THROW(make_layer_set({3, 1, 3}, 4), keen::ConfigError);
}

TEST(Normalizer, FitExamples) {
  const LayerSet one{{1}};
  const std::vector<RawFeatures> r = {raw("a", {2, 5}), raw("b", {4, 5}), raw("c", {6, 5})};
  const auto s = fit_normalizer(r, Variant::kHS, one, 2);
  EXPECT_EQ(s.min, (std::vector<double>{2, 5}));
  EXPECT_EQ(s.max, (std::vector<double>{6, 5}));
  EXPECT_THROW(fit_normalizer(std::span(r).first(1), Variant::kHS, one, 2), keen::SizingError);
}

TEST(Normalizer, ApplyExamples) {
  const LayerSet one{{1}};
  const std::vector<RawFeatures> r = {raw("a", {2, 5}), raw("b", {6, 5})};
  const auto s = fit_normalizer(r, Variant::kHS, one, 2);
  EXPECT_EQ(apply_normalizer(s, std::vector<double>{4, 5}, one), (std::vector<double>{0.5, 0.0}));
  EXPECT_EQ(apply_normalizer(s, std::vector<double>{2, 5}, one)[0], 0.0);
  EXPECT_EQ(apply_normalizer(s, std::vector<double>{6, 5}, one)[0], 1.0);
  // Held out: formula gives 1.5, clamped.
  EXPECT_EQ(apply_normalizer(s, std::vector<double>{8, 5}, one)[0], std::min(1.0, (8.0 - 2.0) / (6.0 - 2.0)));
  EXPECT_EQ(apply_normalizer(s, std::vector<double>{-1, 9}, one), (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(apply_normalizer(s, std::vector<double>{1, 2}, LayerSet{{2}}), keen::CoverageError);
  EXPECT_THROW(apply_normalizer(s, std::vector<double>{1, 2, 3}, one), keen::ShapeError);
}

TEST(Normalizer, MatchesExplicitScan) {
  const LayerSet two{{1, 2}};
  std::vector<RawFeatures> r;
  std::vector<std::vector<double>> rows;
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int s = 0; s < 7; ++s) {
    std::vector<double> v(4);
    for (auto& x : v) x = u(g);
    rows.push_back(v);
    r.push_back(raw("s" + std::to_string(s), v));
  }
  const auto st = fit_normalizer(r, Variant::kHS, two, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    double lo = rows[0][c], hi = rows[0][c];
    for (const auto& row : rows) lo = std::min(lo, row[c]), hi = std::max(hi, row[c]);
    EXPECT_EQ(st.min[c], lo);
    EXPECT_EQ(st.max[c], hi);
    EXPECT_LE(st.min[c], st.max[c]);
  }
  const auto want = brute_pipeline(rows, 2, 2);
  for (std::size_t s = 0; s < r.size(); ++s) {
    const auto fv = finalize(st, r[s]);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_NEAR(fv.values[i], want[s][i], 1e-15);
      EXPECT_GE(fv.values[i], 0.0);
      EXPECT_LE(fv.values[i], 1.0);
    }
  }
}

TEST(Normalizer, AffineInvariance) {
  const LayerSet one{{1}};
  std::vector<RawFeatures> a, b;
  const std::vector<double> xs = {0.3, -1.2, 4.4, 2.0, 0.9};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    a.push_back(raw(std::to_string(i), {xs[i]}));
    b.push_back(raw(std::to_string(i), {2.5 * xs[i] + 7.0}));
  }
  const auto sa = fit_normalizer(a, Variant::kHS, one, 1), sb = fit_normalizer(b, Variant::kHS, one, 1);
  for (std::size_t i = 0; i < xs.size(); ++i)
    EXPECT_NEAR(finalize(sa, a[i]).values[0], finalize(sb, b[i]).values[0], 1e-14);
}

TEST(Normalizer, AverageExamples) {
  const auto same = average_layers(std::vector<double>{0.2, 0.7, 0.2, 0.7, 0.2, 0.7}, 3, 2);
  EXPECT_NEAR(same[0], 0.2, 1e-16);
  EXPECT_NEAR(same[1], 0.7, 2e-16);
  const auto e = average_layers(std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1}, 3, 3);
  for (double x : e) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
  EXPECT_NEAR(average_layers(std::vector<double>{0.2, 0.4, 0.6}, 3, 1)[0], 0.4, 1e-15);
}

TEST(Normalizer, AverageAfterNormalizeNotBefore) {
  // Layer 1 spans [0,1], layer 2 spans [0,100]. Averaging first lets layer 2 dominate.
  const LayerSet two{{1, 2}};
  const std::vector<RawFeatures> r = {raw("a", {0, 100}), raw("b", {1, 0}), raw("c", {0.5, 50})};
  const auto st = fit_normalizer(r, Variant::kHS, two, 1);
  const double right = finalize(st, raw("q", {1, 0})).values[0];
  EXPECT_DOUBLE_EQ(right, 0.5);
  const std::vector<double> averaged = {(0 + 100) / 2.0, (1 + 0) / 2.0, (0.5 + 50) / 2.0};
  const double lo = *std::min_element(averaged.begin(), averaged.end());
  const double hi = *std::max_element(averaged.begin(), averaged.end());
  const double wrong = (0.5 - lo) / (hi - lo);
  EXPECT_NE(right, wrong);
}

TEST(Extract, HsMatchesBruteForce) {
  const auto layers = select_layers(4).layers;
  expect_close(pipeline(Variant::kHS), brute_pipeline(brute_raw(Source::kHidden, layers), 3, 8), 1e-12);
}

TEST(Extract, VpMatchesBruteForce) {
  const auto layers = select_layers(4).layers;
  expect_close(pipeline(Variant::kVP), brute_pipeline(brute_raw(Source::kLogits, layers), 3, 16), 1e-10);
}

TEST(Extract, AttnAndFcMatchBruteForce) {
  expect_close(pipeline(Variant::kATTN), brute_pipeline(brute_raw(Source::kAttn, {4}), 1, 8), 1e-12);
  expect_close(pipeline(Variant::kFC), brute_pipeline(brute_raw(Source::kMlp, {4}), 1, 8), 1e-12);
}

TEST(Extract, VpkMatchesBruteForce) {
  auto m = make_mock_model();
  const std::vector<double> w = {0.1, -0.9, 0.5, 0.0, 0.3, -0.7, 0.2, 0.05, -0.15, 0.6, 0.01, -0.02, 0.4, 0.0, 0.8, -0.3};
  const auto sel = select_top_k(w, 5, "probe", m->model_id());
  EXPECT_EQ(sel.token_ids, (std::vector<int>{1, 14, 5, 9, 2}));
  const auto layers = select_layers(4).layers;
  expect_close(pipeline(Variant::kVPk, &sel), brute_pipeline(brute_raw(Source::kLogits, layers, &sel.token_ids), 3, 5),
               1e-12);
}

TEST(Extract, VpkWithEveryTokenEqualsVp) {
  auto m = make_mock_model();
  std::vector<double> w(16);
  for (int i = 0; i < 16; ++i) w[i] = 16 - i;  // descending |w| gives ids 0..15 in order
  const auto sel = select_top_k(w, 16, "p", m->model_id());
  const auto vp = pipeline(Variant::kVP), vpk = pipeline(Variant::kVPk, &sel);
  for (std::size_t s = 0; s < vp.size(); ++s) EXPECT_EQ(vp[s].values, vpk[s].values);
}

TEST(Extract, InputOrderAndParallelEquality) {
  auto m = make_mock_model();
  ExtractOptions o;
  o.variant = Variant::kVP;
  o.layers = select_layers(4);
  const auto a = extract_raw(*m, kSubjects, o);
  o.jobs = 4;
  const auto b = extract_raw(*m, kSubjects, o);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].subject, kSubjects[i]);
    EXPECT_EQ(a[i].values, b[i].values);
  }
}

TEST(Extract, ConstantColumnNormalizesToZero) {
  const LayerSet one{{4}};
  const std::vector<RawFeatures> r = {raw("a", {1, 3}), raw("b", {2, 3}), raw("c", {3, 3})};
  const auto st = fit_normalizer(r, Variant::kFC, one, 2);
  for (const auto& x : r) EXPECT_EQ(finalize(st, x).values[1], 0.0);
}

TEST(Extract, MissingSublayerHooksRaise) {
  auto m = keen::model::load_model("mock-nohooks");
  ExtractOptions o;
  o.variant = Variant::kATTN;
  EXPECT_THROW(extract_raw(*m, kSubjects, o), keen::CapabilityError);
  o.variant = Variant::kFC;
  EXPECT_THROW(extract_raw(*m, kSubjects, o), keen::CapabilityError);
  o.variant = Variant::kHS;
  EXPECT_NO_THROW(extract_raw(*m, kSubjects, o));
}

TEST(TopK, Examples) {
  EXPECT_EQ(select_top_k(std::vector<double>{0.1, -0.9, 0.5}, 2).token_ids, (std::vector<int>{1, 2}));
  EXPECT_EQ(select_top_k(std::vector<double>{0.1, -0.9, 0.5}, 3).token_ids, (std::vector<int>{1, 2, 0}));
  EXPECT_THROW(select_top_k(std::vector<double>{0.1, 0.2}, 0), keen::SizingError);
  EXPECT_THROW(select_top_k(std::vector<double>{0.1, 0.2}, 3), keen::SizingError);
}

TEST(TopK, TiesGoToLowerId) {
  const std::vector<double> w = {0.5, -0.5, 0.2, 0.5, -0.2};
  EXPECT_EQ(select_top_k(w, 5).token_ids, (std::vector<int>{0, 1, 3, 2, 4}));
  EXPECT_EQ(select_top_k(w, 5).token_ids, select_top_k(w, 5).token_ids);
}

TEST(TopK, MatchesFullSort) {
  std::mt19937_64 g(3);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> w(100);
  for (auto& x : w) x = n(g);
  std::vector<int> ids(100);
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    return std::abs(w[a]) != std::abs(w[b]) ? std::abs(w[a]) > std::abs(w[b]) : a < b;
  });
  ids.resize(10);
  EXPECT_EQ(select_top_k(w, 10).token_ids, ids);
}

TEST(Provenance, SelectionAndStatsChecks) {
  auto m = make_mock_model();
  const auto trace = keen::model::run_trace(*m, "This document describes Napoleon", keen::model::CapabilitySet::all());
  const auto layers = select_layers(4);
  TokenSelection foreign{{1, 2}, "p", "some-other-model"};
  EXPECT_THROW(raw_vpk(trace, layers, 11, *m, foreign), keen::ProvenanceError);
  TokenSelection out_of_range{{1, 99}, "p", m->model_id()};
  EXPECT_THROW(raw_vpk(trace, layers, 11, *m, out_of_range), keen::ProvenanceError);

  TokenSelection sel{{1, 2}, "p", m->model_id()};
  const std::vector<RawFeatures> r = {raw("a", std::vector<double>(6, 0.0)), raw("b", std::vector<double>(6, 1.0))};
  auto stats_k = fit_normalizer(r, Variant::kVPk, layers, 2);
  stats_k.token_ids = {2, 1};
  EXPECT_THROW(build_vpk(trace, layers, 11, *m, sel, stats_k), keen::ProvenanceError);
  stats_k.token_ids = {1, 2};
  EXPECT_NO_THROW(build_vpk(trace, layers, 11, *m, sel, stats_k));
}

TEST(Provenance, RestrictedStatsMatchVpColumns) {
  auto m = make_mock_model();
  ExtractOptions o;
  o.variant = Variant::kVP;
  o.layers = select_layers(4);
  const auto r = extract_raw(*m, kSubjects, o);
  const auto vp = fit_normalizer(r, Variant::kVP, o.layers, 16);
  const TokenSelection sel{{7, 3}, "p", m->model_id()};
  const auto k = restrict_stats(vp, sel);
  ASSERT_EQ(k.entries(), 6u);
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(k.min[l * 2 + 0], vp.min[l * 16 + 7]);
    EXPECT_EQ(k.max[l * 2 + 1], vp.max[l * 16 + 3]);
  }
  EXPECT_EQ(k.token_ids, sel.token_ids);
}

TEST(Cache, RoundTrip) {
  auto m = make_mock_model();
  ExtractOptions o;
  o.variant = Variant::kHS;
  o.layers = select_layers(4);
  const auto r = extract_raw(*m, kSubjects, o);
  const auto c = make_feature_cache(*m, o, r);
  const auto p = fs::temp_directory_path() / "keen_features.bin";
  save_feature_cache(p, c);
  const auto back = load_feature_cache(p);
  EXPECT_EQ(back.model_id, c.model_id);
  EXPECT_EQ(back.layers, c.layers);
  EXPECT_EQ(back.vectors, c.vectors);
  EXPECT_EQ(back.raw_for("Rome").values, r[1].values);
  EXPECT_THROW(back.raw_for("Atlantis"), keen::CoverageError);

  const auto st = fit_normalizer(r, Variant::kHS, o.layers, 8);
  const auto st2 = stats_from_json(to_json(st));
  EXPECT_EQ(st2.min, st.min);
  EXPECT_EQ(st2.fitted_on, st.fitted_on);
}

}  // namespace
