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
#include <mgrec/config.hpp>
#include <mgrec/dataset.hpp>
#include <mgrec/eval.hpp>
#include <mgrec/model.hpp>
#include <mgrec/objective.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mgrec {

// Uniform(+-sqrt(6 / (rows + cols))) per table; alpha = beta = 0.5.
void xavierInit(ModelParameters& params, uint64_t seed);

// Shapes from the dataset/features and config, then xavierInit.
ModelParameters initParameters(const InteractionDataset& dataset,
                               std::span<const ModalityFeatures> features,
                               const TrainConfig& config);

// Draws a train interaction uniformly, then a negative uniformly among the
// items the user has not interacted with in train (rejection sampling).
class TripletSampler {
 public:
  explicit TripletSampler(const InteractionDataset& dataset);

  TripletBatch sample(size_t batchSize, std::mt19937_64& rng) const;
  // Users who interacted with the whole catalog and are never sampled.
  const IndexList& skippedUsers() const { return skippedUsers_; }

 private:
  const InteractionDataset& dataset_;
  std::vector<std::pair<uint32_t, uint32_t>> pairs_;
  IndexList skippedUsers_;
};

TripletBatch sampleTriplets(const InteractionDataset& dataset,
                            size_t batchSize, std::mt19937_64& rng);

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState forParameters(ModelParameters& params);
};

// Bias-corrected Adam. Throws NonFiniteGradient (leaving params untouched)
// if any gradient coordinate is not finite.
void adamStep(ModelParameters& params, GradientSet& grads, AdamState& state,
              double lr);

struct EpochRecord {
  size_t epoch = 0;
  LossReport loss;  // mean over the epoch's batches
  std::map<size_t, double> valRecall;
  std::map<size_t, double> valNdcg;
  double seconds = 0;
};

struct FitResult {
  ModelParameters best;
  uint64_t bestStep = 0;
  std::vector<EpochRecord> history;
  size_t bestEpoch = 0;
  double bestValRecall = -1;
  bool diverged = false;
  std::string stopReason;
};

using EpochCallback =
  std::function<void(const EpochRecord&, const ModelParameters&)>;

// Trains until `patience` epochs pass without a validation Recall@20
// improvement (or max_epochs), returning the best-validation parameters.
FitResult fit(const InteractionDataset& dataset, const GraphContext& ctx,
              std::span<const ModalityFeatures> features,
              const TrainConfig& config, const EpochCallback& onEpoch = {});

FitResult fit(const InteractionDataset& dataset,
              std::span<const ModalityFeatures> features,
              const TrainConfig& config, const EpochCallback& onEpoch = {});

// JSON-lines record: epoch, rec_loss, cl_loss_<m>, reg, total, val metrics.
std::string historyLine(const EpochRecord& record,
                        std::span<const Modality> modalities);

struct GridSpec {
  std::vector<double> lambda;
  std::vector<double> lambda_c;
  std::vector<size_t> k;
  std::vector<double> tau;
};

struct GridPoint {
  double lambda = 0;
  double lambda_c = 0;
  size_t k = 0;
  double tau = 0;
};

// Cartesian product in (lambda, lambda_c, k, tau) order; an empty axis
// takes the base config's value.
std::vector<GridPoint> enumerateGrid(const GridSpec& spec,
                                     const TrainConfig& base);

struct GridRow {
  size_t index = 0;  // position in enumeration order
  GridPoint point;
  uint64_t seed = 0;
  double bestValRecall = 0;
  double bestValNdcg = 0;
  size_t bestEpoch = 0;
  size_t epochsRun = 0;
  bool best = false;
};

struct GridResult {
  std::vector<GridRow> rows;  // ranked by validation Recall@20
};

// Combination i trains with seed base.seed + i.
GridResult gridSearch(const InteractionDataset& dataset,
                      std::span<const ModalityFeatures> features,
                      const TrainConfig& base, const GridSpec& spec,
                      size_t workers = 1);

std::string gridTable(const GridResult& result);

// A checkpoint directory: one float64 MMFT file per embedding/projection
// table plus manifest.json holding alpha, beta, the step and the config.
struct Checkpoint {
  ModelParameters params;
  TrainConfig config;
  uint64_t step = 0;
  size_t bestEpoch = 0;
  double bestValRecall = 0;
};

void writeCheckpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& dir);
Checkpoint readCheckpoint(const std::filesystem::path& dir);

}  // namespace mgrec
