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

#include "keen/model/tokenizer.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <array>
#include <cstdint>
#include <limits>

#include "keen/error.hpp"
#include "keen/util/io.hpp"

namespace keen::model {
namespace {

constexpr std::array<std::string_view, MockTokenizer::kVocabSize> kMockVocab = {
    " the", " of",   " and", " in",  " France", " Paris", " born", " city",
    " is",  " king", " war", " Rome", " river", " a",     " 1769", "."};

std::uint32_t fnv1a(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string encode_utf8(UChar32 cp) {
  char buf[4];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf, len, 4, cp, err);
  if (err) return "\xEF\xBF\xBD";
  return std::string(buf, static_cast<std::size_t>(len));
}

struct CodePoint {
  UChar32 cp;
  std::size_t begin;
  std::size_t end;
};

std::vector<CodePoint> decode_utf8(std::string_view text) {
  std::vector<CodePoint> out;
  int32_t i = 0;
  const auto n = static_cast<int32_t>(text.size());
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  while (i < n) {
    const int32_t start = i;
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c < 0) c = 0xFFFD;
    out.push_back({c, static_cast<std::size_t>(start), static_cast<std::size_t>(i)});
  }
  return out;
}

bool is_letter(UChar32 c) { return (U_GET_GC_MASK(c) & U_GC_L_MASK) != 0; }
bool is_number(UChar32 c) { return (U_GET_GC_MASK(c) & U_GC_N_MASK) != 0; }
bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

}  // namespace

std::vector<TokenSpan> MockTokenizer::encode(std::string_view text) const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    // A word is an optional run of spaces followed by non-space bytes.
    std::size_t j = i;
    while (j < text.size() && is_space_byte(static_cast<unsigned char>(text[j]))) ++j;
    while (j < text.size() && !is_space_byte(static_cast<unsigned char>(text[j]))) ++j;
    for (std::size_t c = i; c < j; c += kChunkBytes) {
      const std::size_t e = std::min(j, c + kChunkBytes);
      out.push_back({static_cast<int>(fnv1a(text.substr(c, e - c)) % kVocabSize), c, e});
    }
    i = j;
  }
  return out;
}

std::string MockTokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) out += display(id);
  return out;
}

std::string_view MockTokenizer::display(int id) {
  if (id < 0 || id >= kVocabSize) throw RangeError("mock token id out of range");
  return kMockVocab[static_cast<std::size_t>(id)];
}

BpeTokenizer::BpeTokenizer(std::unordered_map<std::string, int> encoder,
                           std::vector<std::pair<std::string, std::string>> merges)
    : encoder_(std::move(encoder)) {
  int max_id = -1;
  for (const auto& [tok, id] : encoder_) max_id = std::max(max_id, id);
  decoder_.resize(static_cast<std::size_t>(max_id + 1));
  for (const auto& [tok, id] : encoder_) decoder_[static_cast<std::size_t>(id)] = tok;
  for (std::size_t r = 0; r < merges.size(); ++r) {
    ranks_.emplace(merges[r], static_cast<int>(r));
  }
  // Printable bytes map to themselves; the rest are shifted past U+0100.
  byte_to_unicode_.resize(256);
  std::array<bool, 256> direct{};
  for (int b = '!'; b <= '~'; ++b) direct[static_cast<std::size_t>(b)] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) direct[static_cast<std::size_t>(b)] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) direct[static_cast<std::size_t>(b)] = true;
  int shifted = 0;
  for (int b = 0; b < 256; ++b) {
    const UChar32 cp = direct[static_cast<std::size_t>(b)] ? b : 256 + shifted++;
    byte_to_unicode_[static_cast<std::size_t>(b)] = encode_utf8(cp);
    unicode_to_byte_[byte_to_unicode_[static_cast<std::size_t>(b)]] =
        static_cast<unsigned char>(b);
  }
}

std::unique_ptr<BpeTokenizer> BpeTokenizer::from_files(const std::filesystem::path& encoder_json,
                                                       const std::filesystem::path& vocab_bpe) {
  const auto enc = util::read_json(encoder_json);
  std::unordered_map<std::string, int> encoder;
  for (auto it = enc.begin(); it != enc.end(); ++it) encoder.emplace(it.key(), it.value().get<int>());
  std::vector<std::pair<std::string, std::string>> merges;
  const std::string text = util::read_file(vocab_bpe);
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("#version", 0) == 0) continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError("malformed merge rule in " + vocab_bpe.string(), lineno);
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return std::make_unique<BpeTokenizer>(std::move(encoder), std::move(merges));
}

std::vector<std::pair<std::size_t, std::size_t>> BpeTokenizer::pretokenize(std::string_view text) {
  // 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
  const auto cps = decode_utf8(text);
  const std::size_t n = cps.size();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  auto emit = [&](std::size_t a, std::size_t b) { out.emplace_back(cps[a].begin, cps[b - 1].end); };
  auto is_other = [](UChar32 c) { return !is_space(c) && !is_letter(c) && !is_number(c); };

  std::size_t i = 0;
  while (i < n) {
    if (cps[i].cp == '\'') {
      static constexpr std::array<std::string_view, 7> kSuffixes = {"s", "t", "re", "ve", "m", "ll", "d"};
      bool matched = false;
      for (auto suf : kSuffixes) {
        bool ok = i + suf.size() < n;
        for (std::size_t k = 0; ok && k < suf.size(); ++k) {
          ok = cps[i + 1 + k].cp == static_cast<UChar32>(suf[k]);
        }
        if (ok) {
          emit(i, i + 1 + suf.size());
          i += 1 + suf.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const std::size_t body = (cps[i].cp == ' ' && i + 1 < n) ? i + 1 : i;
    auto run = [&](auto pred) {
      std::size_t j = body;
      while (j < n && pred(cps[j].cp)) ++j;
      return j;
    };
    if (std::size_t j = run(is_letter); j > body) {
      emit(i, j);
      i = j;
      continue;
    }
    if (std::size_t j = run(is_number); j > body) {
      emit(i, j);
      i = j;
      continue;
    }
    if (std::size_t j = run(is_other); j > body) {
      emit(i, j);
      i = j;
      continue;
    }
    // Whitespace run: leave the final space for the next word when one follows.
    std::size_t j = i;
    while (j < n && is_space(cps[j].cp)) ++j;
    if (j == n || j - i == 1) {
      emit(i, j);
      i = j;
    } else {
      emit(i, j - 1);
      i = j - 1;
    }
  }
  return out;
}

std::vector<std::string> BpeTokenizer::bpe(const std::string& mapped) const {
  std::vector<std::string> word;
  for (const auto& cp : decode_utf8(mapped)) word.push_back(mapped.substr(cp.begin, cp.end - cp.begin));
  while (word.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    std::size_t best = 0;
    for (std::size_t k = 0; k + 1 < word.size(); ++k) {
      auto it = ranks_.find({word[k], word[k + 1]});
      if (it != ranks_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = k;
      }
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const std::string first = word[best];
    const std::string second = word[best + 1];
    std::vector<std::string> merged;
    for (std::size_t k = 0; k < word.size();) {
      if (k + 1 < word.size() && word[k] == first && word[k + 1] == second) {
        merged.push_back(first + second);
        k += 2;
      } else {
        merged.push_back(word[k]);
        ++k;
      }
    }
    word = std::move(merged);
  }
  return word;
}

std::vector<TokenSpan> BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenSpan> out;
  for (const auto& [begin, end] : pretokenize(text)) {
    std::string mapped;
    for (std::size_t b = begin; b < end; ++b) {
      mapped += byte_to_unicode_[static_cast<unsigned char>(text[b])];
    }
    std::size_t offset = begin;
    for (const auto& piece : bpe(mapped)) {
      auto it = encoder_.find(piece);
      if (it == encoder_.end()) throw ConfigError("BPE piece missing from encoder: " + piece);
      // Every mapped code point stands for exactly one input byte.
      const std::size_t len = decode_utf8(piece).size();
      out.push_back({it->second, offset, offset + len});
      offset += len;
    }
  }
  return out;
}

std::string BpeTokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= decoder_.size()) {
      throw RangeError("token id " + std::to_string(id) + " outside the vocabulary");
    }
    const std::string& tok = decoder_[static_cast<std::size_t>(id)];
    for (const auto& cp : decode_utf8(tok)) {
      auto it = unicode_to_byte_.find(tok.substr(cp.begin, cp.end - cp.begin));
      if (it != unicode_to_byte_.end()) out.push_back(static_cast<char>(it->second));
    }
  }
  // Byte sequences cut mid-character become U+FFFD.
  std::string valid;
  valid.reserve(out.size());
  for (const auto& cp : decode_utf8(out)) valid += encode_utf8(cp.cp);
  return valid;
}

}  // namespace keen::model
