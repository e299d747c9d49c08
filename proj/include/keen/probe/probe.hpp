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
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "keen/dataset/dataset.hpp"
#include "keen/features/features.hpp"

namespace keen::probe {

inline constexpr int kProbeFormatVersion = 1;

// The learning-rate grid used for probe sweeps.
inline constexpr double kLearningRateGrid[] = {1e-3, 5e-3, 5e-4, 1e-4, 1e-5, 5e-5};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_pearson = 0.0;
  double learning_rate = 0.0;
  int batch_size = 0;
  double weight_decay = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double epsilon = 0.0;
  bool operator==(const TrainingMeta&) const = default;
};

struct Probe {
  std::vector<double> theta;
  features::Variant variant = features::Variant::kHS;
  std::string model_id;
  features::LayerSet layers;
  std::string normalizer_ref;
  dataset::Task task = dataset::Task::kQA;
  std::vector<int> token_ids;  // VP-k selection
  TrainingMeta meta;

  std::size_t dim() const { return theta.size(); }
  // Content hash over weights and metadata.
  std::string id() const;
  bool operator==(const Probe&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 100;
  int batch_size = 32;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int eval_every = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {});

// Row-major design matrix with targets, one row per subject.
struct Samples {
  std::vector<std::string> subjects;
  std::size_t dim = 0;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return subjects.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
};

// Pairs feature vectors with labels by subject. Throws AlignmentError when a
// subject lacks a label or appears twice.
Samples align(std::span<const features::FeatureVector> features, std::span<const dataset::KnowledgeLabel> labels);
Samples make_samples(std::vector<std::string> subjects, std::size_t dim, std::vector<double> x, std::vector<double> y);

double sigmoid(double x);

// Mean of (y - sigmoid(theta . z))^2 over the rows, with the gradient in grad
// when non-empty.
double loss_and_gradient(std::span<const double> theta, const Samples& data, std::span<const std::size_t> rows,
                         std::span<double> grad);
double loss(std::span<const double> theta, const Samples& data);

struct LogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_pearson = 0.0;  // 0 when degenerate
  bool degenerate = false;
};

struct TrainResult {
  Probe probe;
  std::vector<LogEntry> log;
};

// Mini-batch AdamW on the MSE loss, returning the checkpoint with the highest
// validation Pearson (ties go to the later epoch).
TrainResult train(const Samples& train_set, const Samples& val_set, const TrainConfig& config);

double predict(std::span<const double> theta, std::span<const double> z);
double predict(const Probe& probe, const features::FeatureVector& z);
std::vector<double> predict_all(const Probe& probe, const Samples& data);

nlohmann::json to_json(const Probe& probe);
Probe probe_from_json(const nlohmann::json& j);
void save(const Probe& probe, const std::filesystem::path& path);
Probe load(const std::filesystem::path& path);

nlohmann::json to_json(const LogEntry& e);

struct SweepCell {
  TrainConfig config;
  std::optional<TrainResult> result;
  std::string error;

  bool ok() const { return result.has_value(); }
  double val_pearson() const { return ok() ? result->probe.meta.best_val_pearson : 0.0; }
};

struct SweepResult {
  std::vector<SweepCell> leaderboard;  // grid order
  std::size_t best = 0;

  const Probe& best_probe() const { return leaderboard.at(best).result->probe; }
};

// Trains one probe per configuration, running up to jobs cells at once. Cell
// failures are recorded, not rethrown; throws only when every cell failed.
SweepResult sweep(const Samples& train_set, const Samples& val_set, std::span<const TrainConfig> grid, int jobs = 1);

std::vector<TrainConfig> learning_rate_grid(const TrainConfig& base);

}  // namespace keen::probe
