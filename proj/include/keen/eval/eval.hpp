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
#include "keen/eval/metrics.hpp"
#include "keen/probe/probe.hpp"

namespace keen::eval {

inline constexpr std::string_view kEvalSchema = "keen.eval.v1";

struct SubjectScore {
  std::string subject;
  double predicted = 0.0;
  double gold = 0.0;
};

struct EvalReport {
  std::string probe_id;
  dataset::Task task = dataset::Task::kQA;
  std::size_t n = 0;
  double pearson_r = 0.0;
  double p_value = 1.0;
  bool p_degenerate = false;
  double mse = 0.0;
  std::vector<SubjectScore> per_subject;
};

// Scores any predictor (probe or baseline) against gold labels.
EvalReport evaluate_scores(std::string probe_id, dataset::Task task, std::span<const std::string> subjects,
                           std::span<const double> predicted, std::span<const double> gold);

EvalReport evaluate(const probe::Probe& probe, const probe::Samples& data);

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

struct ScatterExport {
  LineFit trend;
  std::filesystem::path csv;
  std::filesystem::path trend_json;
};

// Writes "gold,predicted" rows and a sibling "<stem>.trend.json" holding the
// least-squares line of predicted on gold.
ScatterExport export_scatter(const EvalReport& report, const std::filesystem::path& csv_path);

}  // namespace keen::eval
