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
#include <memory>
#include <string>

#include "keen/model/model_handle.hpp"
#include "keen/model/transformer.hpp"

namespace keen::model {

inline constexpr std::uint64_t kMockSeed = 1729;

// The fixed 4-layer, d=8, |V|=16 pre-norm transformer used by every numeric
// oracle. Deterministic in the seed.
TransformerWeights make_mock_weights(std::uint64_t seed = kMockSeed);

// Copy of `base` with block `layer` (1-based) MLP weights shifted by
// scale * N(0, 1) noise. The model id records the perturbation.
TransformerWeights perturb_block(const TransformerWeights& base, int layer, double scale, std::uint64_t seed);

// Location of the checked-in mock fixture: $KEEN_DATA_DIR/mock_model.keenmdl,
// falling back to the source tree's data directory.
std::filesystem::path data_dir();
std::filesystem::path mock_fixture_path();

// Mock model handle. Loads the fixture when present, otherwise regenerates
// the identical weights from the seed.
std::shared_ptr<ModelHandle> make_mock_model(CapabilitySet capabilities = CapabilitySet::all());
std::shared_ptr<ModelHandle> make_model(TransformerWeights weights, CapabilitySet capabilities = CapabilitySet::all());

// Resolves a model spec:
//   mock                          the fixture model
//   mock-nohooks                  mock without attention/MLP capture
//   mock-perturbed:L:SCALE:SEED   mock with block L perturbed
//   keenmdl:PATH | PATH.keenmdl   KEENMDL1 weights with the mock tokenizer
//   gpt2:DIR                      llm.c checkpoint (DIR/model.bin or the
//                                 first *.bin) with DIR/encoder.json and
//                                 DIR/vocab.bpe
// Relative paths are resolved against $KEEN_MODEL_PATH when set.
std::shared_ptr<ModelHandle> load_model(const std::string& spec);

}  // namespace keen::model
