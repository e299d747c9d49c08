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

#include <string>
#include <string_view>

namespace keen::dataset {

struct NormalizeOptions {
  bool enabled = true;  // false: raw byte containment
};

// NFKC with Unicode case folding, whitespace runs collapsed to one space,
// leading/trailing punctuation and spaces stripped.
std::string normalize_text(std::string_view text, const NormalizeOptions& options = {});

// Whether normalize(needle) occurs in normalize(haystack). An empty
// normalized needle never matches.
bool normalized_contains(std::string_view haystack, std::string_view needle,
                         const NormalizeOptions& options = {});

}  // namespace keen::dataset
