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

#include <stdexcept>
#include <string>

namespace keen {

// Base of every error raised by the toolkit. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KEEN_DEFINE_ERROR(Name)              \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

KEEN_DEFINE_ERROR(CapabilityError);
KEEN_DEFINE_ERROR(ShapeError);
KEEN_DEFINE_ERROR(BoundsError);
KEEN_DEFINE_ERROR(ConfigError);
KEEN_DEFINE_ERROR(EmptySupportError);
KEEN_DEFINE_ERROR(SizingError);
KEEN_DEFINE_ERROR(CoverageError);
KEEN_DEFINE_ERROR(ProvenanceError);
KEEN_DEFINE_ERROR(DivergenceError);
KEEN_DEFINE_ERROR(DegenerateInputError);
KEEN_DEFINE_ERROR(VersionError);
KEEN_DEFINE_ERROR(ChecksumError);
KEEN_DEFINE_ERROR(CompatibilityError);
KEEN_DEFINE_ERROR(RangeError);
KEEN_DEFINE_ERROR(IoError);

#undef KEEN_DEFINE_ERROR

// Raised when a subject's character span cannot be matched to tokens.
class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::size_t subject_begin,
                 std::size_t subject_end)
      : Error(what), subject_begin_(subject_begin), subject_end_(subject_end) {}

  std::size_t subject_begin() const { return subject_begin_; }
  std::size_t subject_end() const { return subject_end_; }

 private:
  std::size_t subject_begin_;
  std::size_t subject_end_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace keen
