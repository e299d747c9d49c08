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

#include "keen/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "keen/error.hpp"
#include "keen/eval/metrics.hpp"
#include "keen/simd/kernels.hpp"
#include "keen/util/hash.hpp"
#include "keen/util/io.hpp"
#include "keen/util/parallel.hpp"
#include "keen/util/rng.hpp"

namespace keen::probe {
namespace {

std::string encode_weights(const std::vector<double>& theta) {
  std::vector<std::uint8_t> bytes(theta.size() * sizeof(double));
  if (!theta.empty()) std::memcpy(bytes.data(), theta.data(), bytes.size());
  return util::base64_encode(bytes);
}

nlohmann::json metadata_json(const Probe& p) {
  const auto& m = p.meta;
  return {{"variant", features::variant_name(p.variant)},
          {"model_id", p.model_id},
          {"layers", p.layers.layers},
          {"normalizer_ref", p.normalizer_ref},
          {"task", dataset::task_name(p.task)},
          {"token_ids", p.token_ids},
          {"dim", p.theta.size()},
          {"training",
           {{"seed", m.seed},
            {"epochs_run", m.epochs_run},
            {"best_epoch", m.best_epoch},
            {"best_val_pearson", m.best_val_pearson},
            {"learning_rate", m.learning_rate},
            {"batch_size", m.batch_size},
            {"weight_decay", m.weight_decay},
            {"beta1", m.beta1},
            {"beta2", m.beta2},
            {"epsilon", m.epsilon}}},
          {"assumptions", {"optimizer moment parameters beta1, beta2, epsilon are library defaults"}}};
}

struct Evaluation {
  double loss = 0.0;
  double pearson = 0.0;
  bool degenerate = false;
};

Evaluation evaluate_split(std::span<const double> theta, const Samples& data) {
  Evaluation e;
  std::vector<double> preds(data.size());
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds[i] = predict(theta, data.row(i));
    const double d = data.y[i] - preds[i];
    s += d * d;
  }
  e.loss = data.size() == 0 ? 0.0 : s / static_cast<double>(data.size());
  try {
    e.pearson = eval::pearson(preds, data.y);
  } catch (const DegenerateInputError&) {
    e.degenerate = true;
    e.pearson = 0.0;
  }
  return e;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive and finite");
  };
  positive(learning_rate, "learning_rate");
  positive(epsilon, "epsilon");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0,1)");
  }
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs}, {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},   {"beta1", c.beta1},           {"beta2", c.beta2},
          {"epsilon", c.epsilon},             {"seed", c.seed},             {"eval_every", c.eval_every}};
}

TrainConfig config_from_json(const nlohmann::json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  return c;
}

Samples make_samples(std::vector<std::string> subjects, std::size_t dim, std::vector<double> x,
                     std::vector<double> y) {
  if (y.size() != subjects.size() || x.size() != subjects.size() * dim) {
    throw ShapeError("samples: inconsistent sizes");
  }
  return {std::move(subjects), dim, std::move(x), std::move(y)};
}

Samples align(std::span<const features::FeatureVector> features, std::span<const dataset::KnowledgeLabel> labels) {
  std::map<std::string, double> by_subject;
  for (const auto& l : labels) {
    if (!by_subject.emplace(l.subject, l.value).second) {
      throw AlignmentError("subject '" + l.subject + "' has two labels", 0, 0);
    }
  }
  Samples s;
  s.dim = features.empty() ? 0 : features.front().values.size();
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.values.size() != s.dim) throw ShapeError("feature vectors have mixed dimensions");
    auto it = by_subject.find(f.subject);
    if (it == by_subject.end()) throw AlignmentError("subject '" + f.subject + "' has no label", 0, 0);
    if (!seen.insert(f.subject).second) {
      throw AlignmentError("subject '" + f.subject + "' has two feature vectors", 0, 0);
    }
    s.subjects.push_back(f.subject);
    s.x.insert(s.x.end(), f.values.begin(), f.values.end());
    s.y.push_back(it->second);
  }
  return s;
}

double sigmoid(double x) {
  constexpr double kLo = std::numeric_limits<double>::min();
  constexpr double kHi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    p = e / (1.0 + e);
  }
  return std::clamp(p, kLo, kHi);
}

double predict(std::span<const double> theta, std::span<const double> z) {
  if (theta.size() != z.size()) {
    throw ShapeError("probe has dimension " + std::to_string(theta.size()) + ", feature vector " +
                     std::to_string(z.size()));
  }
  return sigmoid(simd::dot(theta, z));
}

double predict(const Probe& probe, const features::FeatureVector& z) {
  if (z.variant != probe.variant) {
    throw ProvenanceError("probe expects " + std::string(features::variant_name(probe.variant)) + " features, got " +
                          std::string(features::variant_name(z.variant)));
  }
  if (!probe.normalizer_ref.empty() && !z.normalizer_ref.empty() && probe.normalizer_ref != z.normalizer_ref) {
    throw ProvenanceError("feature vector for '" + z.subject +
                          "' was normalized with different statistics than the probe");
  }
  return predict(probe.theta, z.values);
}

std::vector<double> predict_all(const Probe& probe, const Samples& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = predict(probe.theta, data.row(i));
  return out;
}

double loss_and_gradient(std::span<const double> theta, const Samples& data, std::span<const std::size_t> rows,
                         std::span<double> grad) {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  if (rows.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  for (std::size_t r : rows) {
    const auto z = data.row(r);
    const double p = sigmoid(simd::dot(theta, z));
    const double err = data.y[r] - p;
    total += err * err;
    if (!grad.empty()) simd::axpy(-2.0 * err * p * (1.0 - p) * inv_n, z, grad);
  }
  return total * inv_n;
}

double loss(std::span<const double> theta, const Samples& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss_and_gradient(theta, data, rows, {});
}

TrainResult train(const Samples& train_set, const Samples& val_set, const TrainConfig& config) {
  config.validate();
  const std::size_t d = train_set.dim;
  if (d == 0 || train_set.size() == 0) throw SizingError("empty training set");
  if (val_set.dim != d) throw ShapeError("validation features have a different dimension");
  if (val_set.size() < 3) throw SizingError("validation set needs at least 3 subjects");
  {
    std::set<std::string> train_subjects(train_set.subjects.begin(), train_set.subjects.end());
    for (const auto& s : val_set.subjects) {
      if (train_subjects.contains(s)) throw AlignmentError("subject '" + s + "' is in both train and validation", 0, 0);
    }
  }

  util::Rng rng(config.seed);
  std::vector<double> theta(d);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (auto& t : theta) t = rng.uniform(-bound, bound);

  std::vector<double> m(d, 0.0), v(d, 0.0), grad(d);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::vector<double> best_theta = theta;
  double best = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  auto record = [&](int epoch) {
    const Evaluation val = evaluate_split(theta, val_set);
    LogEntry e{epoch, loss(theta, train_set), val.loss, val.pearson, val.degenerate};
    if (!std::isfinite(e.train_loss)) throw DivergenceError("training loss is not finite at epoch " + std::to_string(epoch));
    result.log.push_back(e);
    if (e.val_pearson >= best) {
      best = e.val_pearson;
      best_theta = theta;
      best_epoch = epoch;
    }
  };
  record(0);

  const double lr = config.learning_rate;
  std::int64_t step = 0;
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(start + bs, order.size());
      const double batch_loss = loss_and_gradient(theta, train_set, std::span(order).subspan(start, end - start), grad);
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training loss is not finite at epoch " + std::to_string(epoch));
      }
      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < d; ++i) {
        theta[i] -= lr * config.weight_decay * theta[i];
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon);
      }
    }
    for (double t : theta) {
      if (!std::isfinite(t)) throw DivergenceError("probe weights are not finite at epoch " + std::to_string(epoch));
    }
    if (epoch % config.eval_every == 0 || epoch == config.max_epochs) record(epoch);
  }

  Probe& p = result.probe;
  p.theta = std::move(best_theta);
  p.meta = {config.seed,  config.max_epochs,        best_epoch,   best,         config.learning_rate,
            config.batch_size, config.weight_decay, config.beta1, config.beta2, config.epsilon};
  return result;
}

std::string Probe::id() const {
  return util::sha256_hex(metadata_json(*this).dump() + encode_weights(theta)).substr(0, 16);
}

nlohmann::json to_json(const Probe& probe) {
  nlohmann::json meta = metadata_json(probe);
  const std::string weights = encode_weights(probe.theta);
  return {{"version", kProbeFormatVersion},
          {"metadata", meta},
          {"weights", weights},
          {"checksum", util::sha256_hex(meta.dump() + weights)}};
}

Probe probe_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("version") || !j.at("version").is_number_integer()) {
    throw VersionError("probe file has no format version");
  }
  const int version = j.at("version").get<int>();
  if (version != kProbeFormatVersion) {
    throw VersionError("probe format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kProbeFormatVersion) + ")");
  }
  try {
    const auto& meta = j.at("metadata");
    const auto weights = j.at("weights").get<std::string>();
    if (util::sha256_hex(meta.dump() + weights) != j.at("checksum").get<std::string>()) {
      throw ChecksumError("probe checksum does not match its contents");
    }
    Probe p;
    const auto bytes = util::base64_decode(weights);
    const auto dim = meta.at("dim").get<std::size_t>();
    if (bytes.size() != dim * sizeof(double)) throw ChecksumError("probe weight block has the wrong length");
    p.theta.resize(dim);
    if (dim > 0) std::memcpy(p.theta.data(), bytes.data(), bytes.size());
    p.variant = features::parse_variant(meta.at("variant").get<std::string>());
    p.model_id = meta.at("model_id").get<std::string>();
    p.layers.layers = meta.at("layers").get<std::vector<int>>();
    p.normalizer_ref = meta.at("normalizer_ref").get<std::string>();
    p.task = dataset::parse_task(meta.at("task").get<std::string>());
    p.token_ids = meta.at("token_ids").get<std::vector<int>>();
    const auto& t = meta.at("training");
    p.meta = {t.at("seed").get<std::uint64_t>(),  t.at("epochs_run").get<int>(),     t.at("best_epoch").get<int>(),
              t.at("best_val_pearson").get<double>(), t.at("learning_rate").get<double>(),
              t.at("batch_size").get<int>(),      t.at("weight_decay").get<double>(), t.at("beta1").get<double>(),
              t.at("beta2").get<double>(),        t.at("epsilon").get<double>()};
    for (double v : p.theta) {
      if (!std::isfinite(v)) throw ChecksumError("probe weights are not finite");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(std::string("malformed probe file: ") + e.what());
  }
}

void save(const Probe& probe, const std::filesystem::path& path) { util::write_json(path, to_json(probe)); }

Probe load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(util::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError("probe file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return probe_from_json(j);
}

nlohmann::json to_json(const LogEntry& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_loss", e.val_loss},
          {"val_pearson", e.val_pearson},
          {"degenerate", e.degenerate}};
}

SweepResult sweep(const Samples& train_set, const Samples& val_set, std::span<const TrainConfig> grid, int jobs) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  SweepResult out;
  out.leaderboard.resize(grid.size());
  auto run_cell = [&](std::size_t i) {
    SweepCell& cell = out.leaderboard[i];
    cell.config = grid[i];
    try {
      cell.result = train(train_set, val_set, grid[i]);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  };
  util::parallel_for(grid.size(), jobs, run_cell);
  bool any = false;
  for (std::size_t i = 0; i < out.leaderboard.size(); ++i) {
    const auto& c = out.leaderboard[i];
    if (!c.ok()) continue;
    if (!any || c.val_pearson() > out.leaderboard[out.best].val_pearson()) out.best = i;
    any = true;
  }
  if (!any) throw DivergenceError("every sweep cell failed; first error: " + out.leaderboard.front().error);
  return out;
}

std::vector<TrainConfig> learning_rate_grid(const TrainConfig& base) {
  std::vector<TrainConfig> grid;
  for (double lr : kLearningRateGrid) {
    TrainConfig c = base;
    c.learning_rate = lr;
    grid.push_back(c);
  }
  return grid;
}

}  // namespace keen::probe
