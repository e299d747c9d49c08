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

#include "keen/pipeline/manifest.hpp"

#include <ctime>

#include "keen/error.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"

namespace keen::pipeline {

std::string_view tool_version() { return KEEN_VERSION; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs[path.string()] = util::sha256_file_hex(path.string());
}

void RunManifest::add_output(const std::filesystem::path& path) {
  outputs[path.string()] = util::sha256_file_hex(path.string());
}

void RunManifest::add_model(const std::string& model_id) {
  for (const auto& m : model_ids) {
    if (m == model_id) return;
  }
  model_ids.push_back(model_id);
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"schema", "keen.manifest.v1"},
          {"command", m.command},
          {"config_hash", m.config_hash},
          {"seed", m.seed},
          {"model_ids", m.model_ids},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"tool_version", m.tool_version},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string{}) != "keen.manifest.v1") throw VersionError("not a keen.manifest.v1 file");
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.model_ids = j.at("model_ids").get<std::vector<std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) { util::write_json(path, to_json(m)); }

RunManifest read_manifest(const std::filesystem::path& path) { return manifest_from_json(util::read_json(path)); }

std::vector<std::string> verify_manifest(const RunManifest& m) {
  std::vector<std::string> bad;
  for (const auto* files : {&m.inputs, &m.outputs}) {
    for (const auto& [path, digest] : *files) {
      if (!std::filesystem::exists(path) || util::sha256_file_hex(path) != digest) bad.push_back(path);
    }
  }
  return bad;
}

RunLog::RunLog(const std::filesystem::path& path) {
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open log " + path.string());
}

void RunLog::event(std::string_view stage, nlohmann::json fields) {
  if (!out_.is_open()) return;
  fields["stage"] = stage;
  fields["time"] = utc_timestamp();
  std::lock_guard guard(lock_);
  out_ << fields.dump() << '\n';
  out_.flush();
}

StageTimer::StageTimer(RunLog* log, std::string stage, nlohmann::json fields)
    : log_(log), stage_(std::move(stage)), fields_(std::move(fields)), start_(std::chrono::steady_clock::now()) {}

StageTimer::~StageTimer() {
  if (log_ == nullptr) return;
  fields_["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  try {
    log_->event(stage_, fields_);
  } catch (...) {
  }
}

}  // namespace keen::pipeline
