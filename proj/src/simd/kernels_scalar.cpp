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

#include "kernels_impl.hpp"

#include <algorithm>

namespace keen::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec_scalar(const double* m, std::size_t rows, std::size_t cols,
                   const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(m + r * cols, x, cols);
}

void minmax_scale_scalar(const double* x, const double* lo, const double* hi,
                         double* out, std::size_t n, bool clamp) {
  for (std::size_t i = 0; i < n; ++i) {
    const double range = hi[i] - lo[i];
    double v = range == 0.0 ? 0.0 : (x[i] - lo[i]) / range;
    if (clamp) v = std::min(std::max(v, 0.0), 1.0);
    out[i] = v;
  }
}

void minmax_update_scalar(const double* x, double* lo, double* hi, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::min(lo[i], x[i]);
    hi[i] = std::max(hi[i], x[i]);
  }
}

double sum_sq_diff_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

const KernelTable kScalarTable{
    Isa::kScalar,          dot_scalar,          axpy_scalar,
    matvec_scalar,         minmax_scale_scalar, minmax_update_scalar,
    sum_sq_diff_scalar,
};

}  // namespace keen::simd::detail
