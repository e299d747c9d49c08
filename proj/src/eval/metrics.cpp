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

#include "keen/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "keen/error.hpp"

namespace keen::eval {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_n) {
  if (a.size() != b.size()) {
    throw ShapeError("length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.size() < min_n) {
    throw SizingError("need at least " + std::to_string(min_n) + " points, got " + std::to_string(a.size()));
  }
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Continued fraction for I_x(a,b) by the modified Lentz method.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw DivergenceError("incomplete beta continued fraction did not converge");
}

}  // namespace

double pearson(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys, 3);
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw DegenerateInputError("Pearson correlation undefined: first input is constant");
  if (syy == 0.0) throw DegenerateInputError("Pearson correlation undefined: second input is constant");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw RangeError("incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw RangeError("incomplete beta needs x in [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double nu) {
  if (!(nu > 0.0)) throw RangeError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = nu / (nu + t * t);
  return std::clamp(incomplete_beta(nu / 2.0, 0.5, x), 0.0, 1.0);
}

PValue pearson_p_value(double r, std::size_t n) {
  if (n < 3) throw SizingError("p-value needs n >= 3, got " + std::to_string(n));
  if (!(std::abs(r) <= 1.0)) throw RangeError("correlation outside [-1,1]");
  if (std::abs(r) == 1.0) return {0.0, true};
  const double nu = static_cast<double>(n - 2);
  const double t = r * std::sqrt(nu / (1.0 - r * r));
  return {student_t_two_sided(t, nu), false};
}

double mse(std::span<const double> preds, std::span<const double> golds) {
  check_pair(preds, golds, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - golds[i];
    s += d * d;
  }
  return s / static_cast<double>(preds.size());
}

LineFit least_squares(std::span<const double> xs, std::span<const double> ys) {
  check_pair(xs, ys, 2);
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw DegenerateInputError("trend line undefined: x values are constant");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

}  // namespace keen::eval
