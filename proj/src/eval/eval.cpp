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

#include "keen/eval/eval.hpp"

#include <cstdio>
#include <sstream>

#include "keen/error.hpp"
#include "keen/util/io.hpp"

namespace keen::eval {
namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

EvalReport evaluate_scores(std::string probe_id, dataset::Task task, std::span<const std::string> subjects,
                           std::span<const double> predicted, std::span<const double> gold) {
  if (subjects.size() != predicted.size() || subjects.size() != gold.size()) {
    throw ShapeError("evaluation inputs have different lengths");
  }
  EvalReport r;
  r.probe_id = std::move(probe_id);
  r.task = task;
  r.n = subjects.size();
  try {
    r.pearson_r = pearson(predicted, gold);
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(std::string(e.what()) + " (evaluating '" + r.probe_id + "' on " +
                               std::to_string(r.n) + " subjects)");
  }
  const auto p = pearson_p_value(r.pearson_r, r.n);
  r.p_value = p.p;
  r.p_degenerate = p.degenerate;
  r.mse = mse(predicted, gold);
  for (std::size_t i = 0; i < r.n; ++i) r.per_subject.push_back({subjects[i], predicted[i], gold[i]});
  return r;
}

EvalReport evaluate(const probe::Probe& probe, const probe::Samples& data) {
  const auto preds = probe::predict_all(probe, data);
  return evaluate_scores(probe.id(), probe.task, data.subjects, preds, data.y);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : r.per_subject) rows.push_back({{"subject", s.subject}, {"predicted", s.predicted}, {"gold", s.gold}});
  return {{"schema", kEvalSchema},
          {"probe_id", r.probe_id},
          {"task", dataset::task_name(r.task)},
          {"n", r.n},
          {"pearson_r", r.pearson_r},
          {"p_value", r.p_value},
          {"p_value_method", "two-sided t-test, n-2 degrees of freedom"},
          {"p_value_degenerate", r.p_degenerate},
          {"mse", r.mse},
          {"per_subject", rows}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  if (j.value("schema", std::string{}) != kEvalSchema) throw VersionError("not a keen.eval.v1 report");
  EvalReport r;
  try {
    r.probe_id = j.at("probe_id").get<std::string>();
    r.task = dataset::parse_task(j.at("task").get<std::string>());
    r.n = j.at("n").get<std::size_t>();
    r.pearson_r = j.at("pearson_r").get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.p_degenerate = j.value("p_value_degenerate", false);
    r.mse = j.at("mse").get<double>();
    for (const auto& s : j.at("per_subject")) {
      r.per_subject.push_back(
          {s.at("subject").get<std::string>(), s.at("predicted").get<double>(), s.at("gold").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed evaluation report: ") + e.what());
  }
  if (r.per_subject.size() != r.n) throw ShapeError("report n does not match its per-subject rows");
  return r;
}

ScatterExport export_scatter(const EvalReport& report, const std::filesystem::path& csv_path) {
  if (report.per_subject.size() < 2) throw SizingError("scatter export needs a report with at least 2 subjects");
  std::vector<double> gold, pred;
  std::ostringstream csv;
  csv << "gold,predicted\n";
  for (const auto& s : report.per_subject) {
    gold.push_back(s.gold);
    pred.push_back(s.predicted);
    csv << format_real(s.gold) << ',' << format_real(s.predicted) << '\n';
  }
  ScatterExport out;
  out.trend = least_squares(gold, pred);
  out.csv = csv_path;
  out.trend_json = csv_path.parent_path() / (csv_path.stem().string() + ".trend.json");
  util::write_file_atomic(out.csv, csv.str());
  util::write_json(out.trend_json, {{"slope", out.trend.slope},
                                    {"intercept", out.trend.intercept},
                                    {"x", "gold"},
                                    {"y", "predicted"},
                                    {"n", report.per_subject.size()},
                                    {"probe_id", report.probe_id}});
  return out;
}

}  // namespace keen::eval
