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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "keen/error.hpp"
#include "keen/eval/metrics.hpp"
#include "keen/probe/probe.hpp"
#include "keen/util/io.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace keen::probe;

namespace {

Samples samples_of(const keen::oracle::Planted& p, std::size_t d, std::size_t begin, std::size_t end,
                   const std::string& prefix) {
  std::vector<std::string> subjects;
  std::vector<double> x(p.x.begin() + begin * d, p.x.begin() + end * d), y(p.y.begin() + begin, p.y.begin() + end);
  for (std::size_t i = begin; i < end; ++i) subjects.push_back(prefix + std::to_string(i));
  return make_samples(std::move(subjects), d, std::move(x), std::move(y));
}

struct PlantedSplit {
  keen::oracle::Planted data;
  Samples train, val, test;
};

PlantedSplit planted(std::size_t n, std::size_t d, std::uint64_t seed) {
  PlantedSplit s{keen::oracle::make_planted(n, d, seed), {}, {}, {}};
  const std::size_t a = n * 65 / 100, b = n * 80 / 100;
  s.train = samples_of(s.data, d, 0, a, "s");
  s.val = samples_of(s.data, d, a, b, "s");
  s.test = samples_of(s.data, d, b, n, "s");
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

TEST(Probe, GradientMatchesFiniteDifferences) {
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (std::size_t d = 1; d <= 8; ++d) {
    const auto p = keen::oracle::make_planted(20, d, 100 + d);
    auto s = samples_of(p, d, 0, 20, "s");
    for (auto& y : s.y) y = std::clamp(y + 0.2 * u(g), 0.0, 1.0);
    std::vector<double> theta(d);
    for (auto& t : theta) t = u(g);
    std::vector<std::size_t> rows(20);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> grad(d);
    loss_and_gradient(theta, s, rows, grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < d; ++i) {
      auto tp = theta, tm = theta;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (loss(tp, s) - loss(tm, s)) / (2 * h);
      const double rel = std::abs(fd - grad[i]) / std::max(1e-8, std::max(std::abs(fd), std::abs(grad[i])));
      EXPECT_LE(rel, 1e-5) << "d=" << d << " i=" << i;
    }
  }
}

TEST(Probe, PredictExamples) {
  const std::vector<double> z = {1.0, 0.0};
  EXPECT_EQ(predict(std::vector<double>{0.0, 3.0}, z), 0.5);
  EXPECT_NEAR(predict(std::vector<double>{std::log(3.0), 0.0}, z), 0.75, 1e-15);
  for (double x : {0.0, 0.3, 1.0}) EXPECT_EQ(predict(std::vector<double>{0.0, 0.0}, std::vector<double>{x, 1 - x}), 0.5);
}

TEST(Probe, PredictionsStayInOpenInterval) {
  for (double t : {-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6, std::numeric_limits<double>::max()}) {
    const double p = sigmoid(t);
    EXPECT_GT(p, 0.0) << t;
    EXPECT_LT(p, 1.0) << t;
  }
}

TEST(Probe, RecoversPlantedWeights) {
  auto s = planted(2000, 64, 21);
  TrainConfig c;
  c.learning_rate = 5e-3;
  c.max_epochs = 300;
  c.seed = 4;
  const auto r = train(s.train, s.val, c);
  const auto pred = predict_all(r.probe, s.test);
  EXPECT_GE(keen::eval::pearson(pred, s.test.y), 0.95);
  EXPECT_GE(cosine(r.probe.theta, s.data.theta_star), 0.9);
  EXPECT_LE(r.log.at(r.probe.meta.best_epoch).train_loss, r.log.at(0).train_loss);
}

TEST(Probe, CheckpointIsLogMaximum) {
  auto s = planted(300, 6, 8);
  TrainConfig c;
  c.max_epochs = 40;
  const auto r = train(s.train, s.val, c);
  ASSERT_EQ(r.log.front().epoch, 0);
  double best = -2;
  int best_epoch = -1;
  for (const auto& e : r.log) {
    const double v = e.degenerate ? 0.0 : e.val_pearson;
    if (v >= best) best = v, best_epoch = e.epoch;
  }
  EXPECT_EQ(r.probe.meta.best_val_pearson, best);
  EXPECT_EQ(r.probe.meta.best_epoch, best_epoch);
}

TEST(Probe, ConstantLabelsAreDegenerate) {
  auto s = planted(200, 4, 9);
  std::fill(s.train.y.begin(), s.train.y.end(), 0.5);
  std::fill(s.val.y.begin(), s.val.y.end(), 0.5);
  TrainConfig c;
  c.learning_rate = 5e-3;
  c.max_epochs = 200;
  const auto r = train(s.train, s.val, c);
  for (const auto& e : r.log) EXPECT_TRUE(e.degenerate);
  for (double p : predict_all(r.probe, s.test)) EXPECT_NEAR(p, 0.5, 0.02);
}

TEST(Probe, SameSeedIsBitIdentical) {
  auto s = planted(300, 8, 2);
  TrainConfig c;
  c.max_epochs = 15;
  c.seed = 77;
  const auto a = train(s.train, s.val, c), b = train(s.train, s.val, c);
  EXPECT_EQ(a.probe.theta, b.probe.theta);
  c.seed = 78;
  EXPECT_NE(train(s.train, s.val, c).probe.theta, a.probe.theta);
}

TEST(Probe, RejectsBadInputs) {
  auto s = planted(100, 3, 1);
  TrainConfig c;
  c.max_epochs = 2;
  Samples overlap = s.val;
  overlap.subjects[0] = s.train.subjects[0];
  EXPECT_THROW(train(s.train, overlap, c), keen::AlignmentError);
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), keen::ConfigError);
}

TEST(Probe, DivergenceNamesEpoch) {
  auto s = planted(100, 3, 1);
  s.train.x[0] = std::numeric_limits<double>::infinity();
  TrainConfig c;
  c.max_epochs = 3;
  try {
    train(s.train, s.val, c);
    FAIL();
  } catch (const keen::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Probe, RankingIsScaleInvariant) {
  const auto p = keen::oracle::make_planted(50, 5, 3);
  const auto s = samples_of(p, 5, 0, 50, "s");
  const std::vector<double> theta = {0.4, -1.1, 0.2, 0.9, -0.3};
  auto order = [&](double c) {
    std::vector<double> scaled = theta;
    for (auto& t : scaled) t *= c;
    std::vector<double> pr;
    for (std::size_t i = 0; i < s.size(); ++i) pr.push_back(predict(scaled, s.row(i)));
    std::vector<std::size_t> idx(pr.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return pr[a] < pr[b]; });
    return idx;
  };
  EXPECT_EQ(order(1.0), order(3.7));
  EXPECT_EQ(order(1.0), order(0.05));
}

TEST(Probe, AlignPairsBySubject) {
  using keen::features::FeatureVector;
  std::vector<FeatureVector> f(2);
  f[0].subject = "b", f[0].values = {1, 2};
  f[1].subject = "a", f[1].values = {3, 4};
  std::vector<keen::dataset::KnowledgeLabel> l = {{"a", keen::dataset::Task::kQA, 0.25, 4},
                                                  {"b", keen::dataset::Task::kQA, 0.75, 4}};
  const auto s = align(f, l);
  EXPECT_EQ(s.subjects, (std::vector<std::string>{"b", "a"}));
  EXPECT_EQ(s.y, (std::vector<double>{0.75, 0.25}));
  l.pop_back();
  EXPECT_THROW(align(f, l), keen::AlignmentError);
}

TEST(Serialization, RoundTripAndCorruption) {
  auto s = planted(100, 4, 6);
  TrainConfig c;
  c.max_epochs = 5;
  auto pr = train(s.train, s.val, c).probe;
  pr.model_id = "mock";
  pr.normalizer_ref = "abc";
  const auto path = fs::temp_directory_path() / "keen_probe.json";
  save(pr, path);
  EXPECT_EQ(load(path), pr);

  auto j = keen::util::read_json(path);
  EXPECT_TRUE(j["metadata"].contains("assumptions"));
  auto bad = j;
  bad["metadata"]["model_id"] = "other";
  keen::util::write_file_atomic(path, bad.dump());
  EXPECT_THROW(load(path), keen::ChecksumError);
  auto legacy = j;
  legacy["version"] = 0;
  keen::util::write_file_atomic(path, legacy.dump());
  EXPECT_THROW(load(path), keen::VersionError);
  keen::util::write_file_atomic(path, "{not json");
  EXPECT_THROW(load(path), keen::ChecksumError);
}

TEST(Sweep, DivergingCellIsRecorded) {
  auto s = planted(200, 4, 12);
  TrainConfig ok;
  ok.max_epochs = 10;
  TrainConfig bad = ok;
  bad.learning_rate = 1e308;
  bad.weight_decay = 1e10;
  const std::vector<TrainConfig> grid = {bad, ok};
  const auto r = sweep(s.train, s.val, grid, 2);
  ASSERT_EQ(r.leaderboard.size(), 2u);
  EXPECT_FALSE(r.leaderboard[0].ok());
  EXPECT_FALSE(r.leaderboard[0].error.empty());
  EXPECT_TRUE(r.leaderboard[1].ok());
  EXPECT_EQ(r.best, 1u);
  const std::vector<TrainConfig> all_bad = {bad};
  EXPECT_THROW(sweep(s.train, s.val, all_bad), keen::DivergenceError);
}

TEST(Sweep, SingletonEqualsTrain) {
  auto s = planted(200, 4, 13);
  TrainConfig c;
  c.max_epochs = 10;
  const std::vector<TrainConfig> grid = {c};
  EXPECT_EQ(sweep(s.train, s.val, grid).best_probe(), train(s.train, s.val, c).probe);
}

TEST(Sweep, WinnerHasHighestValidationPearson) {
  auto s = planted(400, 16, 14);
  TrainConfig base;
  base.max_epochs = 30;
  auto grid = learning_rate_grid(base);
  ASSERT_EQ(grid.size(), 6u);
  grid = {grid[0], grid[3]};
  const auto r = sweep(s.train, s.val, grid, 2);
  for (const auto& cell : r.leaderboard) EXPECT_GE(r.leaderboard[r.best].val_pearson(), cell.val_pearson());
}

}  // namespace
