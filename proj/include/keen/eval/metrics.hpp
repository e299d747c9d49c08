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

#include <span>

namespace keen::eval {

// Sample Pearson correlation. Throws SizingError below 3 points and
// DegenerateInputError when either side is constant.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct PValue {
  double p = 1.0;
  bool degenerate = false;  // |r| == 1, p reported as 0
};

// Two-sided p-value of r under H0: rho = 0, via t = r sqrt((n-2)/(1-r^2)).
PValue pearson_p_value(double r, std::size_t n);

// Two-sided tail 2 P(T > |t|) of Student's t with nu degrees of freedom.
double student_t_two_sided(double t, double nu);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

double mse(std::span<const double> preds, std::span<const double> golds);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Least-squares fit of y on x. Throws DegenerateInputError when x is constant.
LineFit least_squares(std::span<const double> xs, std::span<const double> ys);

}  // namespace keen::eval
