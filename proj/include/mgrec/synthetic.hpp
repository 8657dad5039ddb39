/*
 * Copyright 2026 The mgrec Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <mgrec/common.hpp>
#include <mgrec/dataset.hpp>

#include <filesystem>
#include <vector>

namespace mgrec {

// Users and items are split into `clusters` groups. Each user interacts with
// `perUser` items of its own group, plus `crossLinks` items drawn from other
// groups. Item features are the group centroid plus gaussian noise.
struct SyntheticSpec {
  size_t numUsers = 50;
  size_t numItems = 30;
  size_t clusters = 3;
  size_t perUser = 8;
  size_t crossLinks = 0;
  size_t visualDim = 8;
  size_t textualDim = 6;
  double featureNoise = 0.3;
  uint64_t seed = 1;
};

struct SyntheticData {
  RawInteractions raw;
  std::vector<std::string> itemTokens;
  std::vector<Matrix> features;  // visual, textual; rows follow itemTokens
  std::vector<size_t> userCluster;
  std::vector<size_t> itemCluster;
};

SyntheticData makeSynthetic(const SyntheticSpec& spec);

// 50 users, 30 items, 3 preference groups; 7 in-group and 3 out-of-group
// interactions per user.
SyntheticSpec plantedPreferenceSpec(uint64_t seed = 1);
// 120 users, 60 items, 4 groups with some cross-group noise.
SyntheticSpec clusteredSpec(uint64_t seed = 1);

struct SyntheticFixture {
  InteractionDataset dataset;
  std::vector<ModalityFeatures> features;
};

// Splits with the default ratios and aligns the features.
SyntheticFixture materialize(const SyntheticData& data, uint64_t splitSeed);

// interactions.tsv, visual.mmft, textual.mmft (+ token sidecars).
void writeSynthetic(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace mgrec
