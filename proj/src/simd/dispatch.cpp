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

#include <atomic>
#include <cstdlib>
#include <string>

#include "keen/error.hpp"
#include "kernels_impl.hpp"

namespace keen::simd {
namespace {

bool cpu_has_avx2() {
#if KEEN_HAVE_AVX2 && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* select_default() {
  const char* forced = std::getenv("KEEN_SIMD");
  if (forced != nullptr && std::string(forced) == "scalar") return &detail::kScalarTable;
#if KEEN_HAVE_AVX2
  if (cpu_has_avx2()) return &detail::kAvx2Table;
#endif
  return &detail::kScalarTable;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{select_default()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  if (isa == Isa::kScalar) return true;
  return cpu_has_avx2();
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw CapabilityError("kernel variant '" + std::string(isa_name(isa)) +
                          "' is not available on this host");
  }
#if KEEN_HAVE_AVX2
  if (isa == Isa::kAvx2) return detail::kAvx2Table;
#endif
  return detail::kScalarTable;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void set_active(Isa isa) { active_slot().store(&kernels_for(isa)); }

}  // namespace keen::simd
