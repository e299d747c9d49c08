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

#include "keen/dataset/pageviews.hpp"

#include <cstdlib>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "keen/error.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"

namespace keen::dataset {

namespace {

// "2023-01" -> "20230101".
std::string api_day(const std::string& month, bool end) {
  if (month.size() != 7 || month[4] != '-') throw ConfigError("month must look like YYYY-MM, got '" + month + "'");
  return month.substr(0, 4) + month.substr(5, 2) + (end ? "28" : "01");
}

}  // namespace

std::filesystem::path default_cache_dir() {
  if (const char* dir = std::getenv("KEEN_CACHE_DIR"); dir != nullptr && *dir != '\0') return dir;
  if (const char* home = std::getenv("HOME"); home != nullptr) return std::filesystem::path(home) / ".cache" / "keen";
  return std::filesystem::temp_directory_path() / "keen-cache";
}

std::string article_title(std::string_view subject) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : subject) {
    if (c == ' ') {
      out += '_';
    } else if (std::isalnum(c) || c == '_' || c == '-' || c == '.' || c == '(' || c == ')' || c == ',' || c == '\'' ||
               c == '!' || c == ':') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out;
}

std::filesystem::path pageview_cache_path(const std::string& subject, const PageviewFetchOptions& options) {
  const auto dir = options.cache_dir.empty() ? default_cache_dir() : options.cache_dir;
  const std::string key = options.host + "|" + options.project + "|" + options.access + "|" + options.agent + "|" +
                          subject + "|" + options.window.first_month + "|" + options.window.last_month;
  return dir / "pageviews" / (util::sha256_hex(key).substr(0, 32) + ".json");
}

std::vector<nlohmann::json> pageview_rows(const std::string& subject, const nlohmann::json& response) {
  std::vector<nlohmann::json> rows;
  if (!response.contains("items")) return rows;
  for (const auto& item : response.at("items")) {
    const auto ts = item.at("timestamp").get<std::string>();
    if (ts.size() < 6) throw ParseError("bad pageview timestamp '" + ts + "'", 0);
    rows.push_back({{"schema", "keen.pop.v1"},
                    {"subject", subject},
                    {"month", ts.substr(0, 4) + "-" + ts.substr(4, 2)},
                    {"views", item.at("views").get<std::uint64_t>()}});
  }
  return rows;
}

std::vector<nlohmann::json> fetch_pageviews(std::span<const std::string> subjects,
                                            const PageviewFetchOptions& options) {
  if (options.window.first_month.empty() || options.window.last_month.empty()) {
    throw ConfigError("pageview fetch needs both --from and --to months");
  }
  const std::string start = api_day(options.window.first_month, false);
  const std::string end = api_day(options.window.last_month, true);
  std::unique_ptr<httplib::SSLClient> client;
  std::vector<nlohmann::json> rows;
  for (const auto& subject : subjects) {
    const auto cache = pageview_cache_path(subject, options);
    nlohmann::json body;
    if (std::filesystem::exists(cache)) {
      body = util::read_json(cache);
    } else {
      if (!options.allow_network) {
        throw IoError("no cached pageviews for '" + subject + "'; pass --fetch to download");
      }
      if (!client) {
        client = std::make_unique<httplib::SSLClient>(options.host);
        client->set_follow_location(true);
        client->set_read_timeout(30, 0);
      }
      const std::string path = "/api/rest_v1/metrics/pageviews/per-article/" + options.project + "/" +
                               options.access + "/" + options.agent + "/" + article_title(subject) + "/monthly/" +
                               start + "/" + end;
      const httplib::Headers headers = {{"User-Agent", std::string("keen/") + KEEN_VERSION}};
      auto res = client->Get(path, headers);
      if (!res) throw IoError("pageview request for '" + subject + "' failed: " + httplib::to_string(res.error()));
      if (res->status == 404) {
        body = nlohmann::json::object();
      } else if (res->status != 200) {
        throw IoError("pageview request for '" + subject + "' returned HTTP " + std::to_string(res->status));
      } else {
        try {
          body = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
          throw ParseError(std::string("pageview response: ") + e.what(), 0);
        }
      }
      std::filesystem::create_directories(cache.parent_path());
      util::write_json(cache, body);
    }
    auto mine = pageview_rows(subject, body);
    rows.insert(rows.end(), mine.begin(), mine.end());
  }
  return rows;
}

}  // namespace keen::dataset
