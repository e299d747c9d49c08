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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "keen/model/transformer.hpp"

namespace keen::oracle {

// Naive full-sequence forward pass, one position at a time, no caching.
struct BruteTrace {
  std::vector<std::vector<std::vector<double>>> hidden;  // [L+1][T][d]
  std::vector<std::vector<std::vector<double>>> attn;    // [L][T][d], index layer-1
  std::vector<std::vector<std::vector<double>>> mlp;
};

BruteTrace brute_forward(const model::TransformerWeights& w, std::span<const int> ids);

// Runs blocks 1..source_layer, then blocks target_layer+1..L, skipping the
// rest; returns the last position's logits.
std::vector<double> brute_skip_logits(const model::TransformerWeights& w, std::span<const int> ids, int source_layer,
                                      int target_layer);

// W_U f_L(h) with explicit loops.
std::vector<double> brute_logits(const model::TransformerWeights& w, std::span<const double> h);

// Two-sided Student-t tail by numeric integration of the density.
double t_tail_two_sided(double t, double nu);

// Pearson from raw sums in long double.
double pearson_definitional(std::span<const double> x, std::span<const double> y);

double mse_loop(std::span<const double> a, std::span<const double> b);

// Hamilton apportionment of n into 65/15/20 with float quotas.
std::array<std::size_t, 3> apportion_65_15_20(std::size_t n);

struct Planted {
  std::vector<double> theta_star;
  std::vector<double> x;  // n x d
  std::vector<double> y;
};

// z ~ U[0,1]^d, y = sigmoid(theta* . z), theta* ~ U(-1,1)^d.
Planted make_planted(std::size_t n, std::size_t d, std::uint64_t seed, const std::vector<double>* theta_star = nullptr);

}  // namespace keen::oracle
