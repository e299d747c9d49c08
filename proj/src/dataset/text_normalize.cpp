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

#include "keen/dataset/text_normalize.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "keen/error.hpp"

namespace keen::dataset {
namespace {

bool is_punct_or_space(UChar32 c) {
  return u_ispunct(c) || u_isUWhiteSpace(c);
}

}  // namespace

std::string normalize_text(std::string_view text, const NormalizeOptions& options) {
  if (!options.enabled) return std::string(text);
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfkc_cf = icu::Normalizer2::getNFKCCasefoldInstance(status);
  if (U_FAILURE(status)) throw ConfigError("ICU NFKC_Casefold normalizer unavailable");
  const icu::UnicodeString src = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString folded = nfkc_cf->normalize(src, status);
  if (U_FAILURE(status)) throw ConfigError("text normalization failed");

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < folded.length();) {
    const UChar32 c = folded.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && collapsed.length() > 0) collapsed.append(static_cast<UChar>(' '));
    pending_space = false;
    collapsed.append(c);
  }

  int32_t begin = 0;
  int32_t end = collapsed.length();
  while (begin < end) {
    const UChar32 c = collapsed.char32At(begin);
    if (!is_punct_or_space(c)) break;
    begin += U16_LENGTH(c);
  }
  while (end > begin) {
    const int32_t prev = collapsed.moveIndex32(end, -1);
    if (!is_punct_or_space(collapsed.char32At(prev))) break;
    end = prev;
  }
  std::string out;
  collapsed.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

bool normalized_contains(std::string_view haystack, std::string_view needle, const NormalizeOptions& options) {
  const std::string n = normalize_text(needle, options);
  if (n.empty()) return false;
  return normalize_text(haystack, options).find(n) != std::string::npos;
}

}  // namespace keen::dataset
