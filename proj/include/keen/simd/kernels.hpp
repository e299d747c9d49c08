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

#include <cstddef>
#include <span>
#include <string_view>

namespace keen::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Whether this binary carries the variant and the host CPU can run it.
bool isa_available(Isa isa);

// Function table for one instruction set. All matrices are row-major doubles.
struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = M x, M is rows x cols
  void (*matvec)(const double* m, std::size_t rows, std::size_t cols,
                 const double* x, double* y);
  // out = (x - lo) / (hi - lo), 0 where hi == lo; optionally clamped to [0,1]
  void (*minmax_scale)(const double* x, const double* lo, const double* hi,
                       double* out, std::size_t n, bool clamp);
  // lo = min(lo, x), hi = max(hi, x)
  void (*minmax_update)(const double* x, double* lo, double* hi, std::size_t n);
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
};

const KernelTable& kernels_for(Isa isa);

// Table used by the library. Chosen once from CPU features; KEEN_SIMD=scalar
// in the environment forces the reference kernels.
const KernelTable& active();

// Overrides the active table (tests and benchmarks). Throws CapabilityError
// if the variant is unavailable on this host.
void set_active(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace keen::simd
