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

// Desk-scale replication on a real decoder-only model.
//
//   KEEN_MODEL_PATH       directory with an llm.c GPT-2 checkpoint, encoder.json, vocab.bpe
//   KEEN_DESK_TRIPLETS    triplet JSONL, >= 300 subjects with >= 4 relations each
//   KEEN_DESK_POPULARITY  keen.pop.v1 rows for those subjects
//   KEEN_DESK_FROM/TO     optional popularity window (YYYY-MM)
//   KEEN_DESK_OUT         output directory (default: a temp dir)
//
// Exit 77 when the inputs are absent, otherwise the number of failed criteria.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "keen/dataset/dataset.hpp"
#include "keen/pipeline/replicate.hpp"

namespace fs = std::filesystem;
using namespace keen;

namespace {

constexpr std::size_t kMinSubjects = 300;
constexpr std::size_t kMinQuestions = 4;
constexpr double kHsMinR = 0.35;
constexpr double kVpkMaxGap = 0.15;
constexpr std::size_t kTopK = 50;

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v == nullptr ? std::string{} : std::string(v);
}

void line(bool pass, int id, const char* name, const std::string& detail) {
  std::printf("%s  %2d %-28s %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::optional<double> row_r(const pipeline::ReplicateReport& r, const std::string& name) {
  const auto* row = r.row(name);
  if (row == nullptr || !row->available || !row->report) return std::nullopt;
  return row->report->pearson_r;
}

}  // namespace

int main() {
  const std::string model_dir = env("KEEN_MODEL_PATH");
  const std::string triplets = env("KEEN_DESK_TRIPLETS");
  const std::string popularity = env("KEEN_DESK_POPULARITY");
  std::string missing;
  if (model_dir.empty() || !fs::is_directory(model_dir)) missing += " KEEN_MODEL_PATH";
  if (triplets.empty() || !fs::exists(triplets)) missing += " KEEN_DESK_TRIPLETS";
  if (popularity.empty() || !fs::exists(popularity)) missing += " KEEN_DESK_POPULARITY";
  if (!missing.empty()) {
    const std::string why = "not run: missing" + missing;
    line(false, 9, "desk-scale replication", why);
    line(false, 10, "VP-k diminishing returns", why);
    return 77;
  }

  const auto trip = dataset::load_triplets(triplets);
  std::map<std::string, std::set<std::string>> relations;
  for (const auto& t : trip) relations[t.subject].insert(t.relation);
  std::size_t eligible = 0;
  for (const auto& [s, rels] : relations) eligible += rels.size() >= kMinQuestions ? 1 : 0;
  if (eligible < kMinSubjects) {
    const std::string why = fmt("dataset has %.0f subjects with >= 4 questions, need %.0f",
                                static_cast<double>(eligible), static_cast<double>(kMinSubjects));
    line(false, 9, "desk-scale replication", why);
    line(false, 10, "VP-k diminishing returns", why);
    return 2;
  }

  pipeline::ReplicateConfig cfg;
  cfg.model = "gpt2:" + model_dir;
  cfg.triplets = triplets;
  cfg.popularity = popularity;
  cfg.popularity_window = {env("KEEN_DESK_FROM"), env("KEEN_DESK_TO")};
  cfg.variants = {features::Variant::kHS, features::Variant::kVP, features::Variant::kVPk};
  cfg.k = kTopK;
  cfg.jobs = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  const fs::path out = env("KEEN_DESK_OUT").empty() ? fs::temp_directory_path() / "keen-desk-scale" : fs::path(env("KEEN_DESK_OUT"));
  pipeline::RunLog log(out / "log.jsonl");
  const auto report = pipeline::replicate(cfg, out, &log);

  int failures = 0;
  const auto hs = row_r(report, "HS"), pop = row_r(report, "Pop."), vp = row_r(report, "VP"),
             vpk = row_r(report, "VP-" + std::to_string(kTopK));
  {
    const bool pass = hs && pop && *hs > *pop && *hs >= kHsMinR;
    failures += pass ? 0 : 1;
    line(pass, 9, "desk-scale replication",
         hs && pop ? fmt("HS r=%.3f vs Pop. r=%.3f; need HS > Pop. and HS >= %.2f", *hs, *pop, kHsMinR)
                   : std::string("HS or Pop. row unavailable"));
  }
  {
    const bool pass = vp && vpk && std::abs(*vp - *vpk) <= kVpkMaxGap;
    failures += pass ? 0 : 1;
    line(pass, 10, "VP-k diminishing returns",
         vp && vpk ? fmt("VP r=%.3f, VP-50 r=%.3f, gap %.3f", *vp, *vpk, std::abs(*vp - *vpk)) + fmt(" (<=%.2f)", kVpkMaxGap)
                   : std::string("VP or VP-50 row unavailable"));
  }
  std::printf("%zu subjects (%zu test); artifacts in %s\n", report.subjects, report.test, out.string().c_str());
  return failures;
}
