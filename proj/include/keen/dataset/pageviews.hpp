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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keen/dataset/dataset.hpp"

namespace keen::dataset {

struct PageviewFetchOptions {
  std::string host = "wikimedia.org";
  std::string project = "en.wikipedia";
  std::string access = "all-access";
  std::string agent = "user";
  std::filesystem::path cache_dir;  // empty = default_cache_dir()
  PopularityWindow window;          // both months required
  bool allow_network = false;
};

// $KEEN_CACHE_DIR, else ~/.cache/keen.
std::filesystem::path default_cache_dir();

// "Ada Lovelace" -> "Ada_Lovelace", percent-encoding reserved bytes.
std::string article_title(std::string_view subject);

// Monthly keen.pop.v1 rows from the per-article pageview REST API. Responses
// are cached on disk; without allow_network a cache miss raises IoError.
std::vector<nlohmann::json> fetch_pageviews(std::span<const std::string> subjects,
                                            const PageviewFetchOptions& options);

// Converts one API response body into monthly rows for `subject`.
std::vector<nlohmann::json> pageview_rows(const std::string& subject, const nlohmann::json& response);

// Cache file holding the response for one subject and window.
std::filesystem::path pageview_cache_path(const std::string& subject, const PageviewFetchOptions& options);

}  // namespace keen::dataset
