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

#include "keen/pipeline/replicate.hpp"

#include <algorithm>
#include <cstdio>

#include "keen/error.hpp"
#include "keen/eval/qa_runner.hpp"
#include "keen/model/registry.hpp"
#include "keen/util/io.hpp"

namespace keen::pipeline {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const nlohmann::json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  fs::path p = util::interpolate_env(j.at(key).get<std::string>());
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string row_name(features::Variant v, std::size_t k) {
  if (v == features::Variant::kVPk) return "VP-" + std::to_string(k);
  return std::string(features::variant_name(v));
}

std::string slug(std::string name) {
  for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (!name.empty() && name.back() == '.') name.pop_back();
  return name;
}

std::vector<features::RawFeatures> pick_columns(std::span<const features::RawFeatures> vp, std::size_t n_layers,
                                                std::size_t vocab, std::span<const int> ids) {
  std::vector<features::RawFeatures> out;
  out.reserve(vp.size());
  for (const auto& r : vp) {
    features::RawFeatures k{r.subject, {}};
    k.values.reserve(n_layers * ids.size());
    for (std::size_t l = 0; l < n_layers; ++l) {
      for (int id : ids) k.values.push_back(r.values.at(l * vocab + static_cast<std::size_t>(id)));
    }
    out.push_back(std::move(k));
  }
  return out;
}

struct Context {
  const ReplicateConfig& config;
  const model::ModelHandle& model;
  const fs::path& out;
  RunLog* log;
  RunManifest* manifest;
  std::vector<std::string> subjects;
  std::vector<dataset::KnowledgeLabel> labels;
  dataset::SplitAssignment split;

  // VP state reused by VP-k.
  std::vector<features::RawFeatures> vp_raw;
  std::optional<probe::Probe> vp_probe;

  void output(const fs::path& p) const {
    if (manifest != nullptr) manifest->add_output(p);
  }
};

probe::Samples samples_for(const Context& ctx, std::span<const features::FeatureVector> all, dataset::Split s) {
  std::vector<features::FeatureVector> picked;
  for (const auto& f : all) {
    if (ctx.split.assignment.at(f.subject) == s) picked.push_back(f);
  }
  return probe::align(picked, ctx.labels);
}

TableRow run_variant(Context& ctx, features::Variant variant) {
  const auto& cfg = ctx.config;
  TableRow row;
  row.name = row_name(variant, cfg.k);
  const std::string tag = slug(row.name);
  StageTimer timer(ctx.log, "variant", {{"variant", row.name}});

  features::ExtractOptions opt;
  opt.variant = variant;
  opt.layers = features::layers_for(variant, ctx.model.num_layers());
  opt.jobs = cfg.jobs;
  features::TokenSelection selection;
  std::vector<features::RawFeatures> raw;
  if (variant == features::Variant::kVPk) {
    if (!ctx.vp_probe) {
      const bool listed = std::find(cfg.variants.begin(), cfg.variants.end(), features::Variant::kVP) != cfg.variants.end();
      throw ConfigError(listed ? "VP-k needs the VP probe, and the VP row is unavailable"
                               : "VP-k needs the VP probe; list VP before VP-k");
    }
    selection = features::select_top_k(ctx.vp_probe->theta, cfg.k, ctx.vp_probe->id(), ctx.model.model_id());
    opt.selection = &selection;
    raw = pick_columns(ctx.vp_raw, opt.layers.size(), static_cast<std::size_t>(ctx.model.vocab_size()),
                       selection.token_ids);
    util::write_json(ctx.out / ("selection_" + tag + ".json"), features::to_json(selection));
  } else {
    StageTimer t(ctx.log, "extract", {{"variant", row.name}, {"subjects", ctx.subjects.size()}});
    raw = features::extract_raw(ctx.model, ctx.subjects, opt);
  }
  const auto cache_path = ctx.out / ("features_" + tag + ".bin");
  features::save_feature_cache(cache_path, features::make_feature_cache(ctx.model, opt, raw));
  ctx.output(cache_path);

  std::vector<features::RawFeatures> train_raw;
  for (const auto& r : raw) {
    if (ctx.split.assignment.at(r.subject) == dataset::Split::kTrain) train_raw.push_back(r);
  }
  const std::size_t dim = features::feature_dim(variant, ctx.model, opt.selection);
  auto stats = features::fit_normalizer(train_raw, variant, opt.layers, dim);
  stats.token_ids = selection.token_ids;
  const auto norm_path = ctx.out / ("norm_" + tag + ".json");
  util::write_json(norm_path, features::to_json(stats));
  ctx.output(norm_path);

  std::vector<features::FeatureVector> all;
  all.reserve(raw.size());
  for (const auto& r : raw) all.push_back(features::finalize(stats, r, ctx.model.model_id()));
  const auto train = samples_for(ctx, all, dataset::Split::kTrain);
  const auto dev = samples_for(ctx, all, dataset::Split::kDev);
  const auto test = samples_for(ctx, all, dataset::Split::kTest);

  std::vector<probe::TrainConfig> grid;
  if (cfg.learning_rates.empty()) {
    grid = probe::learning_rate_grid(cfg.train);
  } else {
    for (double lr : cfg.learning_rates) {
      auto c = cfg.train;
      c.learning_rate = lr;
      grid.push_back(c);
    }
  }
  probe::SweepResult sweep;
  {
    StageTimer t(ctx.log, "sweep", {{"variant", row.name}, {"cells", grid.size()}});
    sweep = probe::sweep(train, dev, grid, cfg.jobs);
  }
  for (const auto& cell : sweep.leaderboard) {
    nlohmann::json e = {{"variant", row.name}, {"learning_rate", cell.config.learning_rate}};
    if (cell.ok()) {
      e["val_pearson"] = cell.val_pearson();
      e["best_epoch"] = cell.result->probe.meta.best_epoch;
    } else {
      e["error"] = cell.error;
    }
    if (ctx.log != nullptr) ctx.log->event("sweep_cell", e);
  }
  probe::Probe p = sweep.best_probe();
  p.variant = variant;
  p.model_id = ctx.model.model_id();
  p.layers = opt.layers;
  p.normalizer_ref = stats.fitted_on;
  p.task = dataset::Task::kQA;
  p.token_ids = selection.token_ids;
  const auto probe_path = ctx.out / ("probe_" + tag + ".json");
  probe::save(p, probe_path);
  ctx.output(probe_path);

  row.report = eval::evaluate(p, test);
  row.learning_rate = sweep.leaderboard[sweep.best].config.learning_rate;
  row.available = true;
  const auto report_path = ctx.out / ("eval_" + tag + ".json");
  util::write_json(report_path, eval::to_json(*row.report));
  ctx.output(report_path);
  const auto scatter = eval::export_scatter(*row.report, ctx.out / ("scatter_" + tag + ".csv"));
  ctx.output(scatter.csv);
  ctx.output(scatter.trend_json);

  if (variant == features::Variant::kVP) {
    ctx.vp_raw = std::move(raw);
    ctx.vp_probe = p;
  }
  timer.set("pearson_r", row.report->pearson_r);
  return row;
}

TableRow popularity_row(const Context& ctx) {
  TableRow row;
  row.name = "Pop.";
  if (ctx.config.popularity.empty()) {
    row.note = "no popularity file configured";
    return row;
  }
  const auto test = ctx.split.subjects_in(dataset::Split::kTest);
  const auto table = dataset::ingest_popularity(ctx.config.popularity, test, ctx.config.popularity_window);
  std::map<std::string, double> gold;
  for (const auto& l : ctx.labels) gold[l.subject] = l.value;
  std::vector<std::string> subjects;
  std::vector<double> views, golds;
  for (const auto& s : test) {
    auto it = table.views.find(s);
    if (it == table.views.end()) continue;
    subjects.push_back(s);
    views.push_back(static_cast<double>(it->second));
    golds.push_back(gold.at(s));
  }
  row.report = eval::evaluate_scores("popularity", dataset::Task::kQA, subjects, views, golds);
  row.available = true;
  if (!table.missing.empty()) row.note = std::to_string(table.missing.size()) + " test subjects without views";
  const auto report_path = ctx.out / "eval_pop.json";
  util::write_json(report_path, eval::to_json(*row.report));
  ctx.output(report_path);
  const auto scatter = eval::export_scatter(*row.report, ctx.out / "scatter_pop.csv");
  ctx.output(scatter.csv);
  ctx.output(scatter.trend_json);
  return row;
}

}  // namespace

ReplicateConfig ReplicateConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ReplicateConfig c;
  try {
    if (j.contains("model")) c.model = util::interpolate_env(j.at("model").get<std::string>());
    c.questions = resolve(j, "questions", base_dir);
    c.triplets = resolve(j, "triplets", base_dir);
    c.templates = resolve(j, "templates", base_dir);
    c.answers = resolve(j, "answers", base_dir);
    c.popularity = resolve(j, "popularity", base_dir);
    c.popularity_window.first_month = j.value("popularity_from", std::string{});
    c.popularity_window.last_month = j.value("popularity_to", std::string{});
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j.at("variants")) c.variants.push_back(features::parse_variant(v.get<std::string>()));
    }
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
    if (j.contains("train")) c.train = probe::config_from_json(j.at("train"), c.train);
    c.learning_rates = j.value("learning_rates", c.learning_rates);
    c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
    c.jobs = j.value("jobs", c.jobs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed replicate config: ") + e.what());
  }
  if (c.questions.empty() && c.triplets.empty()) throw ConfigError("replicate config needs questions or triplets");
  c.train.validate();
  return c;
}

ReplicateConfig ReplicateConfig::load(const fs::path& path) {
  return from_json(util::read_json(path), path.parent_path());
}

nlohmann::json to_json(const ReplicateConfig& c) {
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : c.variants) variants.push_back(features::variant_name(v));
  return {{"model", c.model},
          {"questions", c.questions.string()},
          {"triplets", c.triplets.string()},
          {"templates", c.templates.string()},
          {"answers", c.answers.string()},
          {"popularity", c.popularity.string()},
          {"popularity_from", c.popularity_window.first_month},
          {"popularity_to", c.popularity_window.last_month},
          {"variants", variants},
          {"k", c.k},
          {"seed", c.seed},
          {"train", probe::to_json(c.train)},
          {"learning_rates", c.learning_rates},
          {"max_new_tokens", c.max_new_tokens}};
}

const TableRow* ReplicateReport::row(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

nlohmann::json to_json(const ReplicateReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"variant", row.name}, {"available", row.available}, {"note", row.note}};
    if (row.report) {
      j["pearson_r"] = row.report->pearson_r;
      j["p_value"] = row.report->p_value;
      j["mse"] = row.report->mse;
      j["n"] = row.report->n;
      j["probe_id"] = row.report->probe_id;
      if (row.name != "Pop.") j["learning_rate"] = row.learning_rate;
    }
    rows.push_back(j);
  }
  return {{"schema", "keen.replicate.v1"},
          {"model_id", r.model_id},
          {"subjects", r.subjects},
          {"split", {{"train", r.train}, {"dev", r.dev}, {"test", r.test}}},
          {"rows", rows}};
}

std::string table_csv(const ReplicateReport& r) {
  std::string out = "variant,available,pearson_r,p_value,mse,n,learning_rate,note\n";
  char buf[256];
  for (const auto& row : r.rows) {
    std::string note = row.note;
    for (auto& c : note) {
      if (c == ',' || c == '\n') c = ';';
    }
    if (row.report) {
      std::snprintf(buf, sizeof buf, "%s,1,%.6f,%.6g,%.6f,%zu,", row.name.c_str(), row.report->pearson_r,
                    row.report->p_value, row.report->mse, row.report->n);
      out += buf;
      if (row.name != "Pop.") {
        std::snprintf(buf, sizeof buf, "%g", row.learning_rate);
        out += buf;
      }
      buf[0] = ',';
      buf[1] = '\0';
    } else {
      std::snprintf(buf, sizeof buf, "%s,0,,,,,,", row.name.c_str());
    }
    out += buf;
    out += note;
    out += '\n';
  }
  return out;
}

ReplicateReport replicate(const ReplicateConfig& config, const fs::path& out_dir, RunLog* log,
                          RunManifest* manifest) {
  fs::create_directories(out_dir);
  auto model = model::load_model(config.model);
  if (manifest != nullptr) manifest->add_model(model->model_id());
  auto input = [&](const fs::path& p) {
    if (manifest != nullptr && !p.empty()) manifest->add_input(p);
  };

  std::vector<dataset::QAItem> items;
  if (!config.questions.empty()) {
    input(config.questions);
    items = dataset::load_qa_items(config.questions);
  } else {
    const auto templates = config.templates.empty() ? model::data_dir() / "templates.json" : config.templates;
    input(config.triplets);
    input(templates);
    const auto triplets = dataset::load_triplets(config.triplets);
    items = dataset::generate_questions(triplets, dataset::TemplateRegistry::load(templates));
  }
  dataset::save_qa_items(out_dir / "questions.jsonl", items);

  std::vector<dataset::AnswerRecord> answers;
  if (!config.answers.empty()) {
    input(config.answers);
    answers = dataset::load_answers(config.answers);
  } else {
    StageTimer t(log, "answer", {{"items", items.size()}});
    eval::AnswerOptions opt;
    opt.max_new_tokens = config.max_new_tokens;
    opt.jobs = config.jobs;
    answers = eval::answer_questions(*model, items, opt);
  }
  dataset::save_answers(out_dir / "answers.jsonl", answers);
  input(config.popularity);

  Context ctx{config, *model, out_dir, log, manifest, {}, {}, {}, {}, {}};
  ctx.labels = dataset::label_qa(items, answers);
  for (const auto& l : ctx.labels) ctx.subjects.push_back(l.subject);
  dataset::save_labels(out_dir / "labels.jsonl", ctx.labels);
  ctx.split = dataset::split_subjects(ctx.subjects, config.seed);
  util::write_json(out_dir / "split.json", dataset::to_json(ctx.split));
  for (const char* f : {"questions.jsonl", "answers.jsonl", "labels.jsonl", "split.json"}) ctx.output(out_dir / f);

  ReplicateReport report;
  report.model_id = model->model_id();
  report.subjects = ctx.subjects.size();
  report.train = ctx.split.count(dataset::Split::kTrain);
  report.dev = ctx.split.count(dataset::Split::kDev);
  report.test = ctx.split.count(dataset::Split::kTest);

  for (auto v : config.variants) {
    try {
      report.rows.push_back(run_variant(ctx, v));
    } catch (const Error& e) {
      TableRow row;
      row.name = row_name(v, config.k);
      row.note = e.what();
      if (log != nullptr) log->event("variant_unavailable", {{"variant", row.name}, {"reason", row.note}});
      report.rows.push_back(std::move(row));
    }
  }
  try {
    report.rows.push_back(popularity_row(ctx));
  } catch (const Error& e) {
    TableRow row;
    row.name = "Pop.";
    row.note = e.what();
    report.rows.push_back(std::move(row));
  }

  util::write_json(out_dir / "table.json", to_json(report));
  util::write_file_atomic(out_dir / "table.csv", table_csv(report));
  ctx.output(out_dir / "table.json");
  ctx.output(out_dir / "table.csv");
  return report;
}

}  // namespace keen::pipeline
