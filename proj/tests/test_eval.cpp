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
#include <random>

#include "keen/error.hpp"
#include "keen/eval/eval.hpp"
#include "keen/eval/metrics.hpp"
#include "keen/util/io.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace keen::eval;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> d(0, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

TEST(Pearson, Examples) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y, neg;
  for (double v : x) y.push_back(2 * v + 1), neg.push_back(-v);
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
  const std::vector<double> a = {1, 2, 3}, b = {1, 3, 2};
  EXPECT_NEAR(pearson(a, b), keen::oracle::pearson_definitional(a, b), 1e-15);
  EXPECT_NEAR(pearson(a, b), 0.5, 1e-15);
}

TEST(Pearson, Errors) {
  const std::vector<double> c = {2, 2, 2, 2}, x = {1, 2, 3, 4};
  EXPECT_THROW(pearson(c, x), keen::DegenerateInputError);
  EXPECT_THROW(pearson(x, c), keen::DegenerateInputError);
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{2, 1}), keen::SizingError);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2, 3}), keen::ShapeError);
}

TEST(Pearson, MatchesDefinitionalAndIsAffineInvariant) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_vec(37, s), y = random_vec(37, 100 + s);
    const double r = pearson(x, y);
    EXPECT_NEAR(r, keen::oracle::pearson_definitional(x, y), 1e-12);
    EXPECT_LE(std::abs(r), 1.0 + 1e-12);
    std::vector<double> ax;
    for (double v : x) ax.push_back(3.5 * v - 12.0);
    EXPECT_NEAR(pearson(ax, y), r, 1e-12);
  }
}

TEST(PValue, Examples) {
  EXPECT_EQ(pearson_p_value(0.0, 50).p, 1.0);
  EXPECT_EQ(pearson_p_value(0.0, 3).p, 1.0);
  const auto one = pearson_p_value(1.0, 10);
  EXPECT_EQ(one.p, 0.0);
  EXPECT_TRUE(one.degenerate);
  EXPECT_LT(pearson_p_value(0.999999, 10).p, 1e-15);
  const double p = pearson_p_value(0.5, 100).p;
  EXPECT_NEAR(p, 1.2e-7, 0.05e-7);
}

TEST(PValue, MatchesNumericIntegration) {
  for (std::size_t n : {5u, 30u, 300u}) {
    for (double r : {0.05, 0.2, 0.5, 0.8, -0.35}) {
      const double nu = static_cast<double>(n - 2);
      const double t = r * std::sqrt(nu / (1 - r * r));
      const double want = keen::oracle::t_tail_two_sided(t, nu);
      const double got = pearson_p_value(r, n).p;
      EXPECT_NEAR(got, want, 1e-6 * std::max(want, 1e-300)) << "n=" << n << " r=" << r;
    }
  }
  EXPECT_NEAR(pearson_p_value(0.5, 100).p, keen::oracle::t_tail_two_sided(0.5 * std::sqrt(98 / 0.75), 98), 1e-12);
}

TEST(PValue, Monotone) {
  for (std::size_t n : {5u, 30u, 300u}) {
    double prev = 2.0;
    for (double r = 0.0; r < 0.99; r += 0.03) {
      const double p = pearson_p_value(r, n).p;
      EXPECT_LT(p, prev + 1e-300);
      EXPECT_EQ(p, pearson_p_value(-r, n).p);
      prev = p;
    }
  }
  for (double r : {0.1, 0.4, 0.7}) {
    double prev = 2.0;
    for (std::size_t n = 4; n < 400; n += 7) {
      const double p = pearson_p_value(r, n).p;
      EXPECT_LT(p, prev);
      prev = p;
    }
  }
}

TEST(Mse, Examples) {
  const auto a = random_vec(10, 1), b = random_vec(10, 2);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_EQ(mse(std::vector<double>{0, 1}, std::vector<double>{1, 0}), 1.0);
  EXPECT_NEAR(mse(a, b), keen::oracle::mse_loop(a, b), 1e-15);
  EXPECT_GT(mse(a, b), 0.0);
}

TEST(Evaluate, PermutationInvariant) {
  const std::vector<std::string> s = {"a", "b", "c", "d", "e"};
  const std::vector<double> p = {0.1, 0.4, 0.35, 0.8, 0.2}, g = {0.0, 0.5, 0.25, 1.0, 0.5};
  const auto r1 = evaluate_scores("x", keen::dataset::Task::kQA, s, p, g);
  const std::vector<std::string> s2 = {"d", "a", "e", "c", "b"};
  const std::vector<double> p2 = {0.8, 0.1, 0.2, 0.35, 0.4}, g2 = {1.0, 0.0, 0.5, 0.25, 0.5};
  const auto r2 = evaluate_scores("x", keen::dataset::Task::kQA, s2, p2, g2);
  EXPECT_NEAR(r1.pearson_r, r2.pearson_r, 1e-15);
  EXPECT_NEAR(r1.mse, r2.mse, 1e-15);
  EXPECT_NEAR(r1.p_value, r2.p_value, 1e-15);
  EXPECT_EQ(r1.n, 5u);
}

TEST(Evaluate, ConstantPredictionsRaiseWithContext) {
  const std::vector<std::string> s = {"a", "b", "c"};
  try {
    evaluate_scores("probe-7", keen::dataset::Task::kQA, s, std::vector<double>{0.5, 0.5, 0.5},
                    std::vector<double>{0, 1, 0.5});
    FAIL();
  } catch (const keen::DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("probe-7"), std::string::npos);
  }
}

TEST(Evaluate, PopularityBaselinePath) {
  const std::vector<std::string> s = {"a", "b", "c", "d"};
  const std::vector<double> views = {12000, 15, 430, 98000}, gold = {0.8, 0.1, 0.4, 1.0};
  const auto r = evaluate_scores("popularity", keen::dataset::Task::kQA, s, views, gold);
  EXPECT_EQ(r.probe_id, "popularity");
  EXPECT_EQ(r.per_subject.size(), 4u);
  EXPECT_NEAR(r.pearson_r, keen::oracle::pearson_definitional(views, gold), 1e-12);
  const auto back = report_from_json(to_json(r));
  EXPECT_EQ(back.pearson_r, r.pearson_r);
  EXPECT_EQ(back.per_subject.size(), 4u);
  EXPECT_EQ(to_json(r).at("p_value_method").get<std::string>().find("two-sided") != std::string::npos, true);
}

TEST(Scatter, TrendLineMatchesNormalEquations) {
  // Three points: (0,1), (1,2), (2,4). Normal equations by hand:
  // n=3, sx=3, sy=7, sxx=5, sxy=10 -> slope=(3*10-3*7)/(3*5-9)=1.5, intercept=(7-1.5*3)/3=5/6.
  const std::vector<std::string> s = {"a", "b", "c"};
  const auto r = evaluate_scores("x", keen::dataset::Task::kQA, s, std::vector<double>{1, 2, 4},
                                 std::vector<double>{0, 1, 2});
  const auto path = fs::temp_directory_path() / "keen_scatter.csv";
  const auto ex = export_scatter(r, path);
  EXPECT_NEAR(ex.trend.slope, 1.5, 1e-14);
  EXPECT_NEAR(ex.trend.intercept, 5.0 / 6.0, 1e-14);
  const auto csv = keen::util::read_file(path);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "gold,predicted");
  const auto tj = keen::util::read_json(ex.trend_json);
  EXPECT_NEAR(tj.at("slope").get<double>(), 1.5, 1e-14);

  const auto lin = least_squares(std::vector<double>{1, 2, 3, 4}, std::vector<double>{0.7, 1.1, 1.5, 1.9});
  EXPECT_NEAR(lin.slope, 0.4, 1e-14);
  EXPECT_NEAR(lin.intercept, 0.3, 1e-14);

  EvalReport empty;
  EXPECT_THROW(export_scatter(empty, path), keen::SizingError);
}

}  // namespace
