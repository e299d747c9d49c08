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

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "keen/analysis/analysis.hpp"
#include "keen/dataset/dataset.hpp"
#include "keen/dataset/pageviews.hpp"
#include "keen/error.hpp"
#include "keen/eval/eval.hpp"
#include "keen/eval/qa_runner.hpp"
#include "keen/features/features.hpp"
#include "keen/model/registry.hpp"
#include "keen/patching/patching.hpp"
#include "keen/pipeline/manifest.hpp"
#include "keen/pipeline/replicate.hpp"
#include "keen/probe/probe.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"
#include "keen/util/parallel.hpp"

namespace fs = std::filesystem;
using namespace keen;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string log_path;
  std::string command_line;
};

// One artifact-producing invocation: manifest plus JSONL log next to --out.
class Run {
 public:
  Run(const Globals& g, const CLI::App& app, const fs::path& out, bool out_is_dir = false)
      : out_(out), dir_(out_is_dir) {
    if (dir_) {
      fs::create_directories(out_);
    } else if (out_.has_parent_path()) {
      fs::create_directories(out_.parent_path());
    }
    const fs::path log = !g.log_path.empty() ? fs::path(g.log_path) : sibling("log.jsonl");
    log_ = std::make_unique<pipeline::RunLog>(log);
    m_.command = g.command_line;
    m_.config_hash = util::sha256_hex(app.config_to_str(true, false));
    m_.seed = g.seed;
    m_.tool_version = std::string(pipeline::tool_version());
    m_.started_at = pipeline::utc_timestamp();
    log_->event("start", {{"command", m_.command}});
  }

  pipeline::RunManifest& manifest() { return m_; }
  pipeline::RunLog* log() { return log_.get(); }
  void input(const fs::path& p) {
    if (!p.empty()) m_.add_input(p);
  }
  void output(const fs::path& p) { m_.add_output(p); }

  void finish() {
    m_.finished_at = pipeline::utc_timestamp();
    pipeline::write_manifest(m_, sibling("manifest.json"));
    log_->event("finish", {{"outputs", m_.outputs.size()}});
  }

 private:
  fs::path sibling(const std::string& suffix) const {
    if (dir_) return out_ / suffix;
    return fs::path(out_.string() + "." + suffix);
  }

  fs::path out_;
  bool dir_;
  pipeline::RunManifest m_;
  std::unique_ptr<pipeline::RunLog> log_;
};

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    try {
      if (dash != std::string::npos) {
        const int a = std::stoi(item.substr(0, dash)), b = std::stoi(item.substr(dash + 1));
        for (int i = a; i <= b; ++i) out.push_back(i);
      } else {
        out.push_back(std::stoi(item));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad integer list '" + s + "'");
    }
  }
  return out;
}

// Subjects from a text file (one per line) or any JSONL file with a "subject"
// field, deduplicated in order of first appearance.
std::vector<std::string> read_subjects(const fs::path& path) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto add = [&](std::string s) {
    if (!s.empty() && seen.insert(s).second) out.push_back(std::move(s));
  };
  if (path.extension() == ".jsonl") {
    for (const auto& row : util::read_jsonl(path)) add(row.at("subject").get<std::string>());
  } else {
    std::stringstream in(util::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      add(line);
    }
  }
  return out;
}

std::vector<features::FeatureVector> load_features(const fs::path& cache_path, const fs::path& norm_path,
                                                   std::span<const std::string> subjects) {
  const auto cache = features::load_feature_cache(cache_path);
  const auto stats = features::stats_from_json(util::read_json(norm_path));
  if (stats.variant != cache.variant || !(stats.layers == cache.layers)) {
    throw ProvenanceError("normalizer " + norm_path.string() + " does not match feature cache " + cache_path.string());
  }
  std::vector<features::FeatureVector> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) out.push_back(features::finalize(stats, cache.raw_for(s), cache.model_id));
  return out;
}

struct TrainingInputs {
  probe::Samples train, dev;
  features::NormalizerStats stats;
  features::FeatureCache cache;
};

probe::Samples split_samples(std::span<const features::FeatureVector> all, std::span<const dataset::KnowledgeLabel> labels,
                             const dataset::SplitAssignment& split, dataset::Split which) {
  std::vector<features::FeatureVector> picked;
  for (const auto& f : all) {
    auto it = split.assignment.find(f.subject);
    if (it != split.assignment.end() && it->second == which) picked.push_back(f);
  }
  return probe::align(picked, labels);
}

void stamp_probe(probe::Probe& p, const features::FeatureCache& cache, const features::NormalizerStats& stats,
                 dataset::Task task) {
  p.variant = cache.variant;
  p.model_id = cache.model_id;
  p.layers = cache.layers;
  p.normalizer_ref = stats.fitted_on;
  p.task = task;
  p.token_ids = cache.token_ids;
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::string>& lines) {
  std::string out = header + "\n";
  for (const auto& l : lines) out += l + "\n";
  util::write_file_atomic(path, out);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::map<std::string, double> read_scores_csv(const fs::path& path) {
  std::map<std::string, double> out;
  std::stringstream in(util::read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError(path.string() + ": expected subject,score", n);
    std::string subject = line.substr(0, comma);
    if (subject.size() >= 2 && subject.front() == '"') {
      subject = subject.substr(1, subject.size() - 2);
      std::string unq;
      for (std::size_t i = 0; i < subject.size(); ++i) {
        unq += subject[i];
        if (subject[i] == '"' && i + 1 < subject.size() && subject[i + 1] == '"') ++i;
      }
      subject = unq;
    }
    try {
      out[subject] = std::stod(line.substr(comma + 1));
    } catch (const std::logic_error&) {
      throw ParseError(path.string() + ": bad score", n);
    }
  }
  return out;
}

int resolve_token(const model::ModelHandle& m, const std::string& token) {
  if (!token.empty() && std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    return std::stoi(token);
  }
  const auto ids = m.tokenizer().encode(token);
  if (ids.size() != 1) {
    throw ConfigError("token '" + token + "' encodes to " + std::to_string(ids.size()) + " tokens; pass an id");
  }
  return ids.front().id;
}

using Action = std::function<void()>;

void add_model_commands(CLI::App& root, Globals& g, Action& action) {
  auto* model = root.add_subcommand("model", "Model fixtures and inspection")->require_subcommand(1);

  auto* mock = model->add_subcommand("make-mock", "Write the seeded mock model weights");
  auto out = std::make_shared<std::string>();
  mock->add_option("--out", *out, "Output .keenmdl path")->required();
  mock->callback([&, mock, out] {
    action = [&, mock, out] {
      Run run(g, *mock, *out);
      model::save_weights(model::make_mock_weights(model::kMockSeed), *out);
      run.output(*out);
      run.finish();
    };
  });

  auto* info = model->add_subcommand("info", "Print a model's shape and capabilities");
  auto spec = std::make_shared<std::string>();
  info->add_option("--model", *spec, "Model spec")->required();
  info->callback([&, spec] {
    action = [spec] {
      auto m = model::load_model(*spec);
      nlohmann::json caps = nlohmann::json::array();
      for (auto c : {model::Capability::kHiddenStates, model::Capability::kAttnOutputs, model::Capability::kMlpOutputs,
                     model::Capability::kUnembed, model::Capability::kFinalNorm, model::Capability::kPatching}) {
        if (m->capabilities().has(c)) caps.push_back(model::capability_name(c));
      }
      nlohmann::json j = {{"model_id", m->model_id()},
                          {"num_layers", m->num_layers()},
                          {"hidden_dim", m->hidden_dim()},
                          {"vocab_size", m->vocab_size()},
                          {"tokenizer", m->tokenizer().kind()},
                          {"capabilities", caps}};
      if (m->num_layers() >= 4) j["feature_layers"] = features::select_layers(m->num_layers()).layers;
      std::cout << j.dump(2) << "\n";
    };
  });
}

void add_dataset_commands(CLI::App& root, Globals& g, Action& action) {
  auto* ds = root.add_subcommand("dataset", "Question generation, labels, splits, popularity")->require_subcommand(1);

  {
    auto* c = ds->add_subcommand("build", "Generate QA items from triplets and templates");
    struct O {
      std::string triplets, templates, out;
      std::size_t max_variants = 8;
    };
    auto o = std::make_shared<O>();
    c->add_option("--triplets", o->triplets, "Triplet JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--templates", o->templates, "Template registry JSON (default: shipped table)");
    c->add_option("--max-variants", o->max_variants, "Question variants per item")->capture_default_str();
    c->add_option("--out", o->out, "Output keen.qa.v1 JSONL")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        const fs::path templates = o->templates.empty() ? model::data_dir() / "templates.json" : fs::path(o->templates);
        run.input(o->triplets);
        run.input(templates);
        dataset::GenerateOptions opt;
        opt.max_variants = o->max_variants;
        const auto items =
            dataset::generate_questions(dataset::load_triplets(o->triplets), dataset::TemplateRegistry::load(templates), opt);
        dataset::save_qa_items(o->out, items);
        run.log()->event("build", {{"items", items.size()}, {"subjects", dataset::subjects_of(items).size()}});
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = ds->add_subcommand("split", "Subject-disjoint 65/15/20 split");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    c->add_option("--dataset", *in, "Any JSONL with a subject field, or a subject list")->required()->check(CLI::ExistingFile);
    c->add_option("--out", *out, "Output split JSON")->required();
    c->callback([&, c, in, out] {
      action = [&, c, in, out] {
        Run run(g, *c, *out);
        run.input(*in);
        const auto split = dataset::split_subjects(read_subjects(*in), g.seed);
        util::write_json(*out, dataset::to_json(split));
        run.log()->event("split", {{"train", split.count(dataset::Split::kTrain)},
                                   {"dev", split.count(dataset::Split::kDev)},
                                   {"test", split.count(dataset::Split::kTest)}});
        run.output(*out);
        run.finish();
      };
    });
  }
  {
    auto* c = ds->add_subcommand("answer", "Greedy model answers for every question variant");
    struct O {
      std::string model, dataset, out, prompt{eval::kQaPrompt};
      int max_new_tokens = 16;
    };
    auto o = std::make_shared<O>();
    c->add_option("--model", o->model, "Model spec")->required();
    c->add_option("--dataset", o->dataset, "keen.qa.v1 JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--max-new-tokens", o->max_new_tokens, "Greedy tokens per answer")->capture_default_str();
    c->add_option("--prompt", o->prompt, "Prompt template with a [q] slot");
    c->add_option("--out", o->out, "Output answers JSONL")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        auto m = model::load_model(o->model);
        run.manifest().add_model(m->model_id());
        run.input(o->dataset);
        const auto items = dataset::load_qa_items(o->dataset);
        eval::AnswerOptions opt;
        opt.max_new_tokens = o->max_new_tokens;
        opt.prompt_template = o->prompt;
        opt.jobs = g.jobs;
        std::vector<dataset::AnswerRecord> answers;
        {
          pipeline::StageTimer t(run.log(), "answer", {{"items", items.size()}});
          answers = eval::answer_questions(*m, items, opt);
        }
        dataset::save_answers(o->out, answers);
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = ds->add_subcommand("label-qa", "Per-subject QA accuracy labels");
    struct O {
      std::string dataset, answers, out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--dataset", o->dataset, "keen.qa.v1 JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--answers", o->answers, "Answers JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output labels JSONL")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        run.input(o->dataset);
        run.input(o->answers);
        const auto items = dataset::load_qa_items(o->dataset);
        const auto answers = dataset::load_answers(o->answers);
        dataset::save_labels(o->out, dataset::label_qa(items, answers));
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = ds->add_subcommand("label-oeg", "Per-subject factuality labels from judged claims");
    auto claims = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    c->add_option("--claims", *claims, "keen.oeg.v1 claims JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--out", *out, "Output labels JSONL")->required();
    c->callback([&, c, claims, out] {
      action = [&, c, claims, out] {
        Run run(g, *c, *out);
        run.input(*claims);
        dataset::save_labels(*out, dataset::compute_oeg_labels(dataset::load_claims(*claims)));
        run.output(*out);
        run.finish();
      };
    });
  }
  {
    auto* c = ds->add_subcommand("popularity", "Total page views per subject");
    struct O {
      std::string subjects, input, from, to, cache_dir, out;
      bool fetch = false;
    };
    auto o = std::make_shared<O>();
    c->add_option("--subjects", o->subjects, "Expected subjects (text list or JSONL)")->required()->check(CLI::ExistingFile);
    c->add_option("--input", o->input, "keen.pop.v1 JSONL to ingest")->check(CLI::ExistingFile);
    c->add_flag("--fetch", o->fetch, "Allow downloads for subjects missing from the cache");
    c->add_option("--from", o->from, "First month, YYYY-MM");
    c->add_option("--to", o->to, "Last month, YYYY-MM");
    c->add_option("--cache-dir", o->cache_dir, "Pageview cache (default $KEEN_CACHE_DIR)");
    c->add_option("--out", o->out, "Output keen.pop.v1 JSONL of totals")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        run.input(o->subjects);
        const auto subjects = read_subjects(o->subjects);
        const dataset::PopularityWindow window{o->from, o->to};
        dataset::PopularityTable table;
        if (!o->input.empty()) {
          run.input(o->input);
          table = dataset::ingest_popularity(o->input, subjects, window);
        } else {
          dataset::PageviewFetchOptions opt;
          opt.window = window;
          opt.cache_dir = o->cache_dir;
          opt.allow_network = o->fetch;
          const auto rows = dataset::fetch_pageviews(subjects, opt);
          table = dataset::ingest_popularity_rows(rows, subjects, window);
        }
        std::vector<nlohmann::json> rows;
        for (const auto& [s, v] : table.views) rows.push_back({{"schema", "keen.pop.v1"}, {"subject", s}, {"views", v}});
        util::write_jsonl(o->out, rows);
        run.log()->event("popularity", {{"subjects", table.views.size()},
                                        {"missing", table.missing},
                                        {"duplicate_rows", table.duplicate_rows}});
        for (const auto& s : table.missing) std::cerr << "warning: no page views for '" << s << "'\n";
        run.output(o->out);
        run.finish();
      };
    });
  }
}

void add_features_commands(CLI::App& root, Globals& g, Action& action) {
  auto* fc = root.add_subcommand("features", "Feature extraction and normalization")->require_subcommand(1);
  {
    auto* c = fc->add_subcommand("extract", "Extract raw features into a cache");
    struct O {
      std::string model, variant, dataset, layers, selection, prompt{features::kFeaturePrompt}, out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--model", o->model, "Model spec")->required();
    c->add_option("--variant", o->variant, "HS, VP, VP-k, ATTN or FC")->required();
    c->add_option("--dataset", o->dataset, "Subjects (JSONL with a subject field, or text list)")->required()->check(CLI::ExistingFile);
    c->add_option("--layers", o->layers, "Comma list or range, e.g. 8,9,10 (default: the variant's layers)");
    c->add_option("--selection", o->selection, "Token selection JSON (VP-k)")->check(CLI::ExistingFile);
    c->add_option("--prompt", o->prompt, "Feature prompt with an [s] slot");
    c->add_option("--out", o->out, "Output KEENFTR1 cache")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        auto m = model::load_model(o->model);
        run.manifest().add_model(m->model_id());
        run.input(o->dataset);
        features::ExtractOptions opt;
        opt.variant = features::parse_variant(o->variant);
        opt.layers = o->layers.empty() ? features::layers_for(opt.variant, m->num_layers())
                                       : features::make_layer_set(parse_int_list(o->layers), m->num_layers());
        opt.prompt_template = o->prompt;
        opt.jobs = g.jobs;
        features::TokenSelection sel;
        if (opt.variant == features::Variant::kVPk) {
          if (o->selection.empty()) throw ConfigError("VP-k extraction needs --selection");
          run.input(o->selection);
          sel = features::selection_from_json(util::read_json(o->selection));
          opt.selection = &sel;
        }
        const auto subjects = read_subjects(o->dataset);
        std::vector<features::RawFeatures> raw;
        {
          pipeline::StageTimer t(run.log(), "extract",
                                 {{"variant", features::variant_name(opt.variant)}, {"subjects", subjects.size()}});
          raw = features::extract_raw(*m, subjects, opt);
        }
        features::save_feature_cache(o->out, features::make_feature_cache(*m, opt, raw));
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = fc->add_subcommand("fit-norm", "Fit min-max statistics on one split");
    struct O {
      std::string features, split_file, split{"train"}, from_vp, out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--features", o->features, "Feature cache")->required()->check(CLI::ExistingFile);
    c->add_option("--split-file", o->split_file, "Split JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--split", o->split, "Split to fit on")->capture_default_str();
    c->add_option("--from-vp", o->from_vp, "Reuse these VP statistics for a VP-k cache instead of refitting")
        ->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output normalizer JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        run.input(o->features);
        run.input(o->split_file);
        const auto cache = features::load_feature_cache(o->features);
        const auto split = dataset::split_from_json(util::read_json(o->split_file));
        const auto subjects = split.subjects_in(dataset::parse_split(o->split));
        features::NormalizerStats stats;
        if (!o->from_vp.empty()) {
          if (cache.variant != features::Variant::kVPk) throw ConfigError("--from-vp applies to VP-k caches only");
          run.input(o->from_vp);
          const auto vp = features::stats_from_json(util::read_json(o->from_vp));
          stats = features::restrict_stats(vp, features::TokenSelection{cache.token_ids, {}, cache.model_id});
        } else {
          std::vector<features::RawFeatures> raw;
          for (const auto& s : subjects) raw.push_back(cache.raw_for(s));
          stats = features::fit_normalizer(raw, cache.variant, cache.layers, cache.dim);
          stats.token_ids = cache.token_ids;
        }
        util::write_json(o->out, features::to_json(stats));
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = fc->add_subcommand("select", "Top-k tokens of a VP probe by |weight|");
    auto probe_path = std::make_shared<std::string>();
    auto k = std::make_shared<std::size_t>(50);
    auto out = std::make_shared<std::string>();
    c->add_option("--probe", *probe_path, "VP probe")->required()->check(CLI::ExistingFile);
    c->add_option("--k", *k, "Tokens to keep")->capture_default_str();
    c->add_option("--out", *out, "Output selection JSON")->required();
    c->callback([&, c, probe_path, k, out] {
      action = [&, c, probe_path, k, out] {
        Run run(g, *c, *out);
        run.input(*probe_path);
        const auto p = probe::load(*probe_path);
        if (p.variant != features::Variant::kVP) throw ProvenanceError("token selection needs a VP probe");
        util::write_json(*out, features::to_json(features::select_top_k(p.theta, *k, p.id(), p.model_id)));
        run.output(*out);
        run.finish();
      };
    });
  }
}

struct ProbeData {
  std::string task{"QA"}, variant, features, norm, labels, split_file, config;
};

void add_probe_data_options(CLI::App* c, ProbeData& o) {
  c->add_option("--task", o.task, "QA or OEG")->required();
  c->add_option("--variant", o.variant, "Expected feature variant (checked against the cache)");
  c->add_option("--features", o.features, "Feature cache")->required()->check(CLI::ExistingFile);
  c->add_option("--norm", o.norm, "Normalizer JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--labels", o.labels, "Labels JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--split-file", o.split_file, "Split JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--config", o.config, "Training config JSON")->check(CLI::ExistingFile);
}

TrainingInputs load_training(const ProbeData& o, Run& run) {
  for (const auto& p : {o.features, o.norm, o.labels, o.split_file, o.config}) run.input(p);
  TrainingInputs t;
  t.cache = features::load_feature_cache(o.features);
  t.stats = features::stats_from_json(util::read_json(o.norm));
  if (!o.variant.empty() && features::parse_variant(o.variant) != t.cache.variant) {
    throw ProvenanceError("feature cache holds " + std::string(features::variant_name(t.cache.variant)) +
                          " features, not " + o.variant);
  }
  run.manifest().add_model(t.cache.model_id);
  const auto labels = dataset::load_labels(o.labels);
  const auto split = dataset::split_from_json(util::read_json(o.split_file));
  std::vector<std::string> subjects;
  for (const auto& l : labels) {
    if (split.assignment.contains(l.subject)) subjects.push_back(l.subject);
  }
  const auto all = load_features(o.features, o.norm, subjects);
  t.train = split_samples(all, labels, split, dataset::Split::kTrain);
  t.dev = split_samples(all, labels, split, dataset::Split::kDev);
  return t;
}

void add_probe_commands(CLI::App& root, Globals& g, Action& action) {
  auto* pc = root.add_subcommand("probe", "Probe training and prediction")->require_subcommand(1);
  {
    auto* c = pc->add_subcommand("train", "Train one probe (validation on the dev split)");
    struct O : ProbeData {
      std::string out;
      double lr = 0;
      int epochs = 0;
    };
    auto o = std::make_shared<O>();
    add_probe_data_options(c, *o);
    c->add_option("--lr", o->lr, "Learning rate (overrides the config)");
    c->add_option("--epochs", o->epochs, "Maximum epochs (overrides the config)");
    c->add_option("--out", o->out, "Output probe JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        const auto data = load_training(*o, run);
        probe::TrainConfig cfg = o->config.empty() ? probe::TrainConfig{} : probe::config_from_json(util::read_json(o->config));
        cfg.seed = g.seed;
        if (o->lr > 0) cfg.learning_rate = o->lr;
        if (o->epochs > 0) cfg.max_epochs = o->epochs;
        probe::TrainResult r;
        {
          pipeline::StageTimer t(run.log(), "train", {{"train", data.train.size()}, {"dev", data.dev.size()}});
          r = probe::train(data.train, data.dev, cfg);
        }
        for (const auto& e : r.log) run.log()->event("epoch", probe::to_json(e));
        stamp_probe(r.probe, data.cache, data.stats, dataset::parse_task(o->task));
        probe::save(r.probe, o->out);
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = pc->add_subcommand("sweep", "Train over a config grid and keep the best dev Pearson");
    struct O : ProbeData {
      std::string grid, out;
    };
    auto o = std::make_shared<O>();
    add_probe_data_options(c, *o);
    c->add_option("--grid", o->grid, "Grid JSON: list of configs or {\"learning_rates\": [...]}")->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output best probe JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        const auto data = load_training(*o, run);
        probe::TrainConfig base = o->config.empty() ? probe::TrainConfig{} : probe::config_from_json(util::read_json(o->config));
        base.seed = g.seed;
        std::vector<probe::TrainConfig> grid;
        if (o->grid.empty()) {
          grid = probe::learning_rate_grid(base);
        } else {
          run.input(o->grid);
          const auto j = util::read_json(o->grid);
          if (j.is_array()) {
            for (const auto& cj : j) grid.push_back(probe::config_from_json(cj, base));
          } else {
            for (double lr : j.at("learning_rates").get<std::vector<double>>()) {
              auto cfg = base;
              cfg.learning_rate = lr;
              grid.push_back(cfg);
            }
          }
        }
        probe::SweepResult r;
        {
          pipeline::StageTimer t(run.log(), "sweep", {{"cells", grid.size()}});
          r = probe::sweep(data.train, data.dev, grid, g.jobs);
        }
        nlohmann::json board = nlohmann::json::array();
        for (const auto& cell : r.leaderboard) {
          nlohmann::json e = {{"config", probe::to_json(cell.config)}, {"ok", cell.ok()}};
          if (cell.ok()) {
            e["val_pearson"] = cell.val_pearson();
            e["best_epoch"] = cell.result->probe.meta.best_epoch;
          } else {
            e["error"] = cell.error;
          }
          board.push_back(e);
        }
        auto best = r.best_probe();
        stamp_probe(best, data.cache, data.stats, dataset::parse_task(o->task));
        probe::save(best, o->out);
        const fs::path board_path = o->out + ".leaderboard.json";
        util::write_json(board_path, {{"best", r.best}, {"cells", board}});
        run.output(o->out);
        run.output(board_path);
        run.finish();
      };
    });
  }
  {
    auto* c = pc->add_subcommand("predict", "Score subjects with a trained probe");
    struct O {
      std::string probe, features, norm, subjects, out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--probe", o->probe, "Probe JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--features", o->features, "Feature cache")->required()->check(CLI::ExistingFile);
    c->add_option("--norm", o->norm, "Normalizer JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--subjects", o->subjects, "Subjects to score (text list or JSONL)")->required()->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output CSV subject,score")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        for (const auto& p : {o->probe, o->features, o->norm, o->subjects}) run.input(p);
        const auto p = probe::load(o->probe);
        const auto subjects = read_subjects(o->subjects);
        const auto fv = load_features(o->features, o->norm, subjects);
        std::vector<std::string> lines;
        for (const auto& f : fv) lines.push_back(csv_field(f.subject) + "," + fmt(probe::predict(p, f)));
        write_csv(o->out, "subject,score", lines);
        run.output(o->out);
        run.finish();
      };
    });
  }
}

void add_eval_commands(CLI::App& root, Globals& g, Action& action) {
  auto* ec = root.add_subcommand("eval", "Correlation reports")->require_subcommand(1);
  {
    auto* c = ec->add_subcommand("run", "Evaluate a probe, or a baseline score file, on one split");
    struct O {
      std::string probe, features, norm, scores, baseline_name{"popularity"}, labels, split_file, split{"test"}, task{"QA"},
          out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--probe", o->probe, "Probe JSON")->check(CLI::ExistingFile);
    c->add_option("--features", o->features, "Feature cache")->check(CLI::ExistingFile);
    c->add_option("--norm", o->norm, "Normalizer JSON")->check(CLI::ExistingFile);
    c->add_option("--scores", o->scores, "Baseline scores: keen.pop.v1 JSONL or subject,score CSV")->check(CLI::ExistingFile);
    c->add_option("--baseline-name", o->baseline_name, "Report id for --scores")->capture_default_str();
    c->add_option("--labels", o->labels, "Labels JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--split-file", o->split_file, "Split JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--split", o->split, "Split to evaluate")->capture_default_str();
    c->add_option("--task", o->task, "Task of a baseline report")->capture_default_str();
    c->add_option("--out", o->out, "Output keen.eval.v1 JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        for (const auto& p : {o->probe, o->features, o->norm, o->scores, o->labels, o->split_file}) run.input(p);
        const auto labels = dataset::load_labels(o->labels);
        const auto split = dataset::split_from_json(util::read_json(o->split_file));
        const auto which = dataset::parse_split(o->split);
        eval::EvalReport report;
        if (!o->probe.empty()) {
          if (o->features.empty() || o->norm.empty()) throw CLI::ValidationError("--probe needs --features and --norm");
          const auto p = probe::load(o->probe);
          run.manifest().add_model(p.model_id);
          std::vector<std::string> subjects;
          for (const auto& l : labels) {
            auto it = split.assignment.find(l.subject);
            if (it != split.assignment.end() && it->second == which) subjects.push_back(l.subject);
          }
          const auto fv = load_features(o->features, o->norm, subjects);
          report = eval::evaluate(p, probe::align(fv, labels));
        } else if (!o->scores.empty()) {
          std::map<std::string, double> scores;
          if (fs::path(o->scores).extension() == ".jsonl") {
            for (const auto& row : util::read_jsonl(o->scores)) {
              scores[row.at("subject").get<std::string>()] = row.at("views").get<double>();
            }
          } else {
            scores = read_scores_csv(o->scores);
          }
          std::vector<std::string> subjects;
          std::vector<double> pred, gold;
          std::size_t missing = 0;
          for (const auto& l : labels) {
            auto it = split.assignment.find(l.subject);
            if (it == split.assignment.end() || it->second != which) continue;
            auto s = scores.find(l.subject);
            if (s == scores.end()) {
              ++missing;
              continue;
            }
            subjects.push_back(l.subject);
            pred.push_back(s->second);
            gold.push_back(l.value);
          }
          if (missing > 0) run.log()->event("baseline_missing", {{"subjects", missing}});
          report = eval::evaluate_scores(o->baseline_name, dataset::parse_task(o->task), subjects, pred, gold);
        } else {
          throw CLI::ValidationError("pass --probe or --scores");
        }
        util::write_json(o->out, eval::to_json(report));
        std::printf("r=%.4f p=%.3g mse=%.4f n=%zu\n", report.pearson_r, report.p_value, report.mse, report.n);
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = ec->add_subcommand("scatter", "Export gold/predicted pairs and the trend line");
    auto report = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    c->add_option("--report", *report, "keen.eval.v1 JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--out", *out, "Output CSV")->required();
    c->callback([&, c, report, out] {
      action = [&, c, report, out] {
        Run run(g, *c, *out);
        run.input(*report);
        const auto ex = eval::export_scatter(eval::report_from_json(util::read_json(*report)), *out);
        std::printf("slope=%.4f intercept=%.4f\n", ex.trend.slope, ex.trend.intercept);
        run.output(ex.csv);
        run.output(ex.trend_json);
        run.finish();
      };
    });
  }
}

void add_analyze_commands(CLI::App& root, Globals& g, Action& action) {
  auto* ac = root.add_subcommand("analyze", "Hedging, token, cluster and fine-tuning analyses")->require_subcommand(1);
  {
    auto* c = ac->add_subcommand("hedging", "Correlate probe scores with the fraction of hedged answers");
    struct O {
      std::string answers, scores, phrases, out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--answers", o->answers, "Answers JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--scores", o->scores, "subject,score CSV from probe predict")->required()->check(CLI::ExistingFile);
    c->add_option("--phrases", o->phrases, "Hedging phrase JSON (default: shipped list)")->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output JSON (a .csv with per-subject rows is written alongside)")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        const fs::path phrases = o->phrases.empty() ? model::data_dir() / "hedging_phrases.json" : fs::path(o->phrases);
        for (const auto& p : {o->answers, o->scores}) run.input(p);
        run.input(phrases);
        const auto cfg = analysis::HedgingConfig::load(phrases);
        std::map<std::string, std::vector<std::string>> responses;
        std::vector<std::string> order;
        for (const auto& a : dataset::load_answers(o->answers)) {
          if (!responses.contains(a.subject)) order.push_back(a.subject);
          auto& r = responses[a.subject];
          r.insert(r.end(), a.outputs.begin(), a.outputs.end());
        }
        const auto scores = read_scores_csv(o->scores);
        std::vector<double> keen, hedge;
        std::vector<std::string> lines;
        for (const auto& s : order) {
          auto it = scores.find(s);
          if (it == scores.end()) continue;
          keen.push_back(it->second);
          hedge.push_back(analysis::hedging_fraction(responses[s], cfg));
          lines.push_back(csv_field(s) + "," + fmt(keen.back()) + "," + fmt(hedge.back()));
        }
        const auto summary = analysis::hedging_correlation(keen, hedge);
        util::write_json(o->out, analysis::to_json(summary));
        const fs::path csv = fs::path(o->out).replace_extension(".csv");
        write_csv(csv, "subject,keen_score,hedging_fraction", lines);
        run.output(o->out);
        run.output(csv);
        run.finish();
      };
    });
  }
  {
    auto* c = ac->add_subcommand("tokens", "Median ranks of positive- and negative-weight VP tokens");
    struct O {
      std::string model, probe, features, norm, labels, out;
      std::size_t k = 50;
    };
    auto o = std::make_shared<O>();
    c->add_option("--model", o->model, "Model spec (for token strings)");
    c->add_option("--probe", o->probe, "VP probe")->required()->check(CLI::ExistingFile);
    c->add_option("--features", o->features, "VP feature cache")->required()->check(CLI::ExistingFile);
    c->add_option("--norm", o->norm, "VP normalizer")->required()->check(CLI::ExistingFile);
    c->add_option("--labels", o->labels, "QA labels JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--k", o->k, "Influential tokens")->capture_default_str();
    c->add_option("--out", o->out, "Output JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        for (const auto& p : {o->probe, o->features, o->norm, o->labels}) run.input(p);
        const auto p = probe::load(o->probe);
        if (p.variant != features::Variant::kVP) throw ProvenanceError("token analysis needs a VP probe");
        const auto labels = dataset::load_labels(o->labels);
        std::vector<std::string> subjects;
        for (const auto& l : labels) subjects.push_back(l.subject);
        const auto fv = load_features(o->features, o->norm, subjects);
        const auto sel = analysis::split_by_sign(p.theta, o->k);
        std::vector<analysis::TokenRankProfile> profiles;
        for (std::size_t i = 0; i < fv.size(); ++i) {
          if (sel.positive.empty() || sel.negative.empty()) throw SizingError("top-k tokens all share one sign");
          profiles.push_back(analysis::token_rank_profile(labels[i].subject, labels[i].value, fv[i].values, sel.positive,
                                                          sel.negative));
        }
        std::shared_ptr<model::ModelHandle> m;
        if (!o->model.empty()) {
          m = model::load_model(o->model);
          run.manifest().add_model(m->model_id());
        }
        const auto report = analysis::summarize_ranks(std::move(profiles));
        util::write_json(o->out, analysis::to_json(report, sel, m ? &m->tokenizer() : nullptr));
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = ac->add_subcommand("clusters", "Subjects with a high normalized logit for one token");
    struct O {
      std::string model, token, features, norm, labels, out;
      double threshold = 0.65;
    };
    auto o = std::make_shared<O>();
    c->add_option("--model", o->model, "Model spec (to resolve token strings)");
    c->add_option("--token", o->token, "Token id or single-token string")->required();
    c->add_option("--threshold", o->threshold, "Minimum normalized logit")->capture_default_str();
    c->add_option("--features", o->features, "VP feature cache")->required()->check(CLI::ExistingFile);
    c->add_option("--norm", o->norm, "VP normalizer")->required()->check(CLI::ExistingFile);
    c->add_option("--labels", o->labels, "QA labels JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        for (const auto& p : {o->features, o->norm, o->labels}) run.input(p);
        int token = 0;
        if (!o->model.empty()) {
          auto m = model::load_model(o->model);
          run.manifest().add_model(m->model_id());
          token = resolve_token(*m, o->token);
        } else {
          token = parse_int_list(o->token).at(0);
        }
        const auto labels = dataset::load_labels(o->labels);
        std::vector<std::string> subjects;
        std::vector<double> qa;
        for (const auto& l : labels) subjects.push_back(l.subject), qa.push_back(l.value);
        const auto fv = load_features(o->features, o->norm, subjects);
        if (!fv.empty() && fv.front().variant != features::Variant::kVP) throw ProvenanceError("clusters need VP features");
        std::vector<std::vector<double>> values;
        for (const auto& f : fv) values.push_back(f.values);
        const auto report = analysis::cluster_report(subjects, values, qa, token, o->threshold);
        util::write_json(o->out, analysis::to_json(report));
        run.output(o->out);
        run.finish();
      };
    });
  }
  {
    auto* c = ac->add_subcommand("delta", "Probe scores and QA accuracy before and after fine-tuning");
    struct O {
      std::string before, after, probe, norm, dataset, answers_before, answers_after, targets, out;
    };
    auto o = std::make_shared<O>();
    c->add_option("--before", o->before, "Model spec before fine-tuning")->required();
    c->add_option("--after", o->after, "Model spec after fine-tuning")->required();
    c->add_option("--probe", o->probe, "Probe trained on the before model")->required()->check(CLI::ExistingFile);
    c->add_option("--norm", o->norm, "The probe's normalizer")->required()->check(CLI::ExistingFile);
    c->add_option("--dataset", o->dataset, "keen.qa.v1 JSONL")->required()->check(CLI::ExistingFile);
    c->add_option("--answers-before", o->answers_before, "Answers of the before model")->required()->check(CLI::ExistingFile);
    c->add_option("--answers-after", o->answers_after, "Answers of the after model")->required()->check(CLI::ExistingFile);
    c->add_option("--targets", o->targets, "Fine-tuning target subjects")->check(CLI::ExistingFile);
    c->add_option("--out", o->out, "Output JSON")->required();
    c->callback([&, c, o] {
      action = [&, c, o] {
        Run run(g, *c, o->out);
        for (const auto& p : {o->probe, o->norm, o->dataset, o->answers_before, o->answers_after, o->targets}) run.input(p);
        auto before = model::load_model(o->before);
        auto after = model::load_model(o->after);
        run.manifest().add_model(before->model_id());
        run.manifest().add_model(after->model_id());
        const auto p = probe::load(o->probe);
        const auto stats = features::stats_from_json(util::read_json(o->norm));
        const auto items = dataset::load_qa_items(o->dataset);
        const auto ab = dataset::load_answers(o->answers_before);
        const auto aa = dataset::load_answers(o->answers_after);
        const auto subjects = dataset::subjects_of(items);
        analysis::DeltaInputs in;
        in.probe = &p;
        in.stats = &stats;
        in.subjects = subjects;
        if (!o->targets.empty()) {
          for (auto& s : read_subjects(o->targets)) in.targets.insert(s);
        }
        in.items = items;
        in.answers_before = ab;
        in.answers_after = aa;
        in.jobs = g.jobs;
        util::write_json(o->out, analysis::to_json(analysis::delta_report(*before, *after, in)));
        run.output(o->out);
        run.finish();
      };
    });
  }
}

void add_patch_commands(CLI::App& root, Globals& g, Action& action) {
  auto* pc = root.add_subcommand("patch", "Activation patching")->require_subcommand(1);
  auto* c = pc->add_subcommand("run", "Patched QA accuracy per subject");
  struct O {
    std::string mode, source, target, layers, questions, out;
    int target_layer = 0;
    int max_new_tokens = 16;
    std::vector<std::string> subjects;
  };
  auto o = std::make_shared<O>();
  c->add_option("--mode", o->mode, "ft-subj or pt-layer")->required()->check(CLI::IsMember({"ft-subj", "pt-layer"}));
  c->add_option("--source", o->source, "Source model spec")->required();
  c->add_option("--target", o->target, "Target model spec")->required();
  c->add_option("--layers", o->layers, "Source layers, e.g. 20,21,22,23 (default: scaled band)");
  c->add_option("--target-layer", o->target_layer, "Target layer (default: L-1)");
  c->add_option("--max-new-tokens", o->max_new_tokens, "Greedy tokens per answer")->capture_default_str();
  c->add_option("--questions", o->questions, "keen.qa.v1 JSONL")->required()->check(CLI::ExistingFile);
  c->add_option("--subject", o->subjects, "Restrict to these subjects");
  c->add_option("--out", o->out, "Output keen.patch.v1 JSON")->required();
  c->callback([&, c, o] {
    action = [&, c, o] {
      Run run(g, *c, o->out);
      run.input(o->questions);
      auto source = model::load_model(o->source);
      auto target = o->target == o->source ? source : model::load_model(o->target);
      run.manifest().add_model(source->model_id());
      run.manifest().add_model(target->model_id());
      auto protocol = patching::default_protocol(patching::parse_mode(o->mode), target->num_layers());
      if (!o->layers.empty()) protocol.source_layers = parse_int_list(o->layers);
      if (o->target_layer > 0) protocol.target_layer = o->target_layer;
      protocol.max_new_tokens = o->max_new_tokens;
      patching::validate(protocol, *source, *target);

      const auto items = dataset::load_qa_items(o->questions);
      std::vector<std::string> subjects = o->subjects.empty() ? dataset::subjects_of(items) : o->subjects;
      std::vector<std::optional<patching::PatchedQAResult>> results(subjects.size());
      std::vector<std::string> errors(subjects.size());
      util::parallel_for(subjects.size(), g.jobs, [&](std::size_t i) {
        std::vector<dataset::QAItem> mine;
        for (const auto& it : items) {
          if (it.subject == subjects[i]) mine.push_back(it);
        }
        try {
          results[i] = patching::patched_qa_accuracy(protocol, *source, *target, subjects[i], mine);
        } catch (const Error& e) {
          errors[i] = e.what();
        }
      });
      nlohmann::json out = {{"schema", patching::kPatchSchema},
                            {"mode", o->mode},
                            {"source", source->model_id()},
                            {"target", target->model_id()},
                            {"source_layers", protocol.source_layers},
                            {"target_layer", protocol.target_layer}};
      nlohmann::json rs = nlohmann::json::array();
      double patched = 0, unpatched = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (!results[i]) {
          std::cerr << "warning: " << subjects[i] << ": " << errors[i] << "\n";
          run.log()->event("patch_skipped", {{"subject", subjects[i]}, {"reason", errors[i]}});
          continue;
        }
        rs.push_back(patching::to_json(*results[i]));
        patched += results[i]->patched_accuracy;
        unpatched += results[i]->unpatched_accuracy;
        ++n;
      }
      if (n == 0) throw EmptySupportError("no subject could be patched");
      out["results"] = rs;
      out["mean_patched_accuracy"] = patched / static_cast<double>(n);
      out["mean_unpatched_accuracy"] = unpatched / static_cast<double>(n);
      util::write_json(o->out, out);
      std::printf("subjects=%zu unpatched=%.4f patched=%.4f\n", n, unpatched / n, patched / n);
      run.output(o->out);
      run.finish();
    };
  });
}

void add_replicate_command(CLI::App& root, Globals& g, Action& action) {
  auto* c = root.add_subcommand("replicate", "Full pipeline: labels, split, every variant, baselines");
  auto config = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  c->add_option("--config", *config, "Replicate config JSON")->required()->check(CLI::ExistingFile);
  c->add_option("--out", *out, "Output directory")->required();
  c->callback([&, c, config, out] {
    action = [&, c, config, out] {
      Run run(g, *c, *out, true);
      run.input(*config);
      auto cfg = pipeline::ReplicateConfig::load(*config);
      if (c->get_parent()->count("--seed") > 0) cfg.seed = g.seed;
      if (c->get_parent()->count("--jobs") > 0) cfg.jobs = g.jobs;
      run.manifest().seed = cfg.seed;
      run.manifest().config_hash = util::sha256_hex(pipeline::to_json(cfg).dump());
      const auto report = pipeline::replicate(cfg, *out, run.log(), &run.manifest());
      std::cout << pipeline::table_csv(report);
      run.finish();
    };
  });
}

void add_manifest_command(CLI::App& root, Action& action) {
  auto* mc = root.add_subcommand("manifest", "Run manifests")->require_subcommand(1);
  auto* c = mc->add_subcommand("verify", "Re-hash every file a manifest records");
  auto path = std::make_shared<std::string>();
  c->add_option("manifest", *path, "Manifest JSON")->required()->check(CLI::ExistingFile);
  c->callback([&, path] {
    action = [path] {
      const auto bad = pipeline::verify_manifest(pipeline::read_manifest(*path));
      for (const auto& b : bad) std::cerr << "mismatch: " << b << "\n";
      if (!bad.empty()) throw IoError(std::to_string(bad.size()) + " files differ from the manifest");
      std::cout << "ok\n";
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimate model knowledge about entities from internal representations", "keen"};
  app.set_version_flag("--version", std::string("keen ") + std::string(pipeline::tool_version()));
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  for (int i = 0; i < argc; ++i) g.command_line += (i ? " " : "") + std::string(argv[i]);
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--log", g.log_path, "JSONL log file (default: next to --out)");

  Action action;
  add_model_commands(app, g, action);
  add_dataset_commands(app, g, action);
  add_features_commands(app, g, action);
  add_probe_commands(app, g, action);
  add_eval_commands(app, g, action);
  add_analyze_commands(app, g, action);
  add_patch_commands(app, g, action);
  add_replicate_command(app, g, action);
  add_manifest_command(app, action);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (action) action();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const keen::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
