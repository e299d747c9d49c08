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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace keen::pipeline {

std::string_view tool_version();

// UTC, second resolution, "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> model_ids;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::string tool_version;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void add_model(const std::string& model_id);
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

// Paths whose current digest differs from the recorded one (or that vanished).
std::vector<std::string> verify_manifest(const RunManifest& m);

// Append-only JSONL event log. Safe to share between threads.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::filesystem::path& path);

  bool enabled() const { return out_.is_open(); }
  void event(std::string_view stage, nlohmann::json fields = nlohmann::json::object());

 private:
  std::ofstream out_;
  std::mutex lock_;
};

// Logs {"stage", "seconds", ...} when it goes out of scope.
class StageTimer {
 public:
  StageTimer(RunLog* log, std::string stage, nlohmann::json fields = nlohmann::json::object());
  ~StageTimer();
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

  void set(const std::string& key, nlohmann::json value) { fields_[key] = std::move(value); }

 private:
  RunLog* log_;
  std::string stage_;
  nlohmann::json fields_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace keen::pipeline
