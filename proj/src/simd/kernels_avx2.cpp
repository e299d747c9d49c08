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

// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "kernels_impl.hpp"

#include <immintrin.h>

#include <algorithm>

namespace keen::simd::detail {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four rows at a time so each load of x feeds four accumulators.
void matvec_avx2(const double* m, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* r0 = m + r * cols;
    const double* r1 = r0 + cols;
    const double* r2 = r1 + cols;
    const double* r3 = r2 + cols;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d vx = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(r0 + c), vx, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(r1 + c), vx, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(r2 + c), vx, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(r3 + c), vx, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += r0[c] * x[c];
      s1 += r1[c] * x[c];
      s2 += r2[c] * x[c];
      s3 += r3[c] * x[c];
    }
    y[r] = s0;
    y[r + 1] = s1;
    y[r + 2] = s2;
    y[r + 3] = s3;
  }
  for (; r < rows; ++r) y[r] = dot_avx2(m + r * cols, x, cols);
}

// Elementwise only (sub, div, compare), so results are bit-identical to the
// scalar kernel.
void minmax_scale_avx2(const double* x, const double* lo, const double* hi,
                       double* out, std::size_t n, bool clamp) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vlo = _mm256_loadu_pd(lo + i);
    const __m256d range = _mm256_sub_pd(_mm256_loadu_pd(hi + i), vlo);
    const __m256d degenerate = _mm256_cmp_pd(range, zero, _CMP_EQ_OQ);
    __m256d v = _mm256_div_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vlo), range);
    v = _mm256_blendv_pd(v, zero, degenerate);
    if (clamp) v = _mm256_min_pd(_mm256_max_pd(v, zero), one);
    _mm256_storeu_pd(out + i, v);
  }
  for (; i < n; ++i) {
    const double range = hi[i] - lo[i];
    double v = range == 0.0 ? 0.0 : (x[i] - lo[i]) / range;
    if (clamp) v = std::min(std::max(v, 0.0), 1.0);
    out[i] = v;
  }
}

void minmax_update_avx2(const double* x, double* lo, double* hi, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(lo + i, _mm256_min_pd(vx, _mm256_loadu_pd(lo + i)));
    _mm256_storeu_pd(hi + i, _mm256_max_pd(vx, _mm256_loadu_pd(hi + i)));
  }
  for (; i < n; ++i) {
    lo[i] = std::min(lo[i], x[i]);
    hi[i] = std::max(hi[i], x[i]);
  }
}

double sum_sq_diff_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

const KernelTable kAvx2Table{
    Isa::kAvx2,        dot_avx2,          axpy_avx2,        matvec_avx2,
    minmax_scale_avx2, minmax_update_avx2, sum_sq_diff_avx2,
};

}  // namespace keen::simd::detail
