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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "keen/dataset/dataset.hpp"
#include "keen/eval/eval.hpp"
#include "keen/features/features.hpp"
#include "keen/pipeline/manifest.hpp"
#include "keen/probe/probe.hpp"

namespace keen::pipeline {

// Declarative replication config (JSON). Relative paths resolve against the
// config file's directory; string values may reference ${ENV} variables.
struct ReplicateConfig {
  std::string model = "mock";
  std::filesystem::path questions;  // keen.qa.v1 items, or
  std::filesystem::path triplets;   // triplets plus templates
  std::filesystem::path templates;
  std::filesystem::path answers;     // optional; generated with the model otherwise
  std::filesystem::path popularity;  // optional keen.pop.v1 rows
  dataset::PopularityWindow popularity_window;
  std::vector<features::Variant> variants = {features::Variant::kHS, features::Variant::kVP, features::Variant::kVPk,
                                             features::Variant::kATTN, features::Variant::kFC};
  std::size_t k = 50;
  std::uint64_t seed = 0;
  probe::TrainConfig train;
  std::vector<double> learning_rates;  // empty = the standard grid
  int max_new_tokens = 16;
  int jobs = 1;

  static ReplicateConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ReplicateConfig load(const std::filesystem::path& path);
};

nlohmann::json to_json(const ReplicateConfig& c);

struct TableRow {
  std::string name;  // "HS", "VP", "VP-50", "ATTN", "FC", "Pop."
  bool available = false;
  std::string note;  // why a row is unavailable
  double learning_rate = 0.0;
  std::optional<eval::EvalReport> report;
};

struct ReplicateReport {
  std::string model_id;
  std::size_t subjects = 0;
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  std::vector<TableRow> rows;

  const TableRow* row(std::string_view name) const;
};

nlohmann::json to_json(const ReplicateReport& r);
// "variant,available,pearson_r,p_value,mse,n,learning_rate,note"
std::string table_csv(const ReplicateReport& r);

// Labels, split, features, probes and test-split reports for every variant
// plus the popularity baseline. Everything is written under out_dir; a row
// whose variant cannot run on the model is marked unavailable.
ReplicateReport replicate(const ReplicateConfig& config, const std::filesystem::path& out_dir,
                          RunLog* log = nullptr, RunManifest* manifest = nullptr);

}  // namespace keen::pipeline
