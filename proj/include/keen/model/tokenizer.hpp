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
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace keen::model {

// One token and the byte range [begin, end) of the input it covers.
struct TokenSpan {
  int id;
  std::size_t begin;
  std::size_t end;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const int> ids) const = 0;
  virtual int vocab_size() const = 0;
  virtual std::string kind() const = 0;
};

// Tokenizer for the mock model. Text is split GPT-2 style into words that
// carry their leading space, each word is cut into chunks of at most three
// bytes, and each chunk maps to FNV-1a(chunk) mod 16. Decoding prints the
// fixed display vocabulary, so encode/decode do not round-trip.
class MockTokenizer final : public Tokenizer {
 public:
  static constexpr int kVocabSize = 16;
  static constexpr std::size_t kChunkBytes = 3;

  std::vector<TokenSpan> encode(std::string_view text) const override;
  std::string decode(std::span<const int> ids) const override;
  int vocab_size() const override { return kVocabSize; }
  std::string kind() const override { return "mock"; }

  static std::string_view display(int id);
};

// Byte-level BPE compatible with the GPT-2 encoder.json / vocab.bpe pair.
class BpeTokenizer final : public Tokenizer {
 public:
  BpeTokenizer(std::unordered_map<std::string, int> encoder,
               std::vector<std::pair<std::string, std::string>> merges);

  static std::unique_ptr<BpeTokenizer> from_files(const std::filesystem::path& encoder_json,
                                                  const std::filesystem::path& vocab_bpe);

  std::vector<TokenSpan> encode(std::string_view text) const override;
  std::string decode(std::span<const int> ids) const override;
  int vocab_size() const override { return static_cast<int>(decoder_.size()); }
  std::string kind() const override { return "bpe"; }

  // Splits text into pre-tokens with the GPT-2 pattern; returns byte ranges.
  static std::vector<std::pair<std::size_t, std::size_t>> pretokenize(std::string_view text);

 private:
  std::vector<std::string> bpe(const std::string& mapped) const;

  std::unordered_map<std::string, int> encoder_;
  std::vector<std::string> decoder_;
  std::map<std::pair<std::string, std::string>, int> ranks_;
  std::vector<std::string> byte_to_unicode_;
  std::unordered_map<std::string, unsigned char> unicode_to_byte_;
};

}  // namespace keen::model
