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
#include <mgrec/model.hpp>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mgrec {

struct Triplet {
  uint32_t user = 0;
  uint32_t pos = 0;
  uint32_t neg = 0;
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  size_t size() const { return triplets.size(); }
};

// Which nodes form the InfoNCE candidate pool. Users and items are always
// pooled separately.
enum class PoolMode {
  InBatch,  // users / items that appear in the batch
  Full,     // every user / every item
};

// Mean divides the BPR, regularisation and contrastive sums by the batch
// size; Sum leaves them as plain sums.
enum class Reduction { Mean, Sum };

struct ObjectiveConfig {
  double lambda = 1e-2;    // L2 strength
  double lambdaC = 1e-2;   // contrastive weight
  double tau = 0.2;        // InfoNCE temperature
  PoolMode pool = PoolMode::InBatch;
  Reduction reduction = Reduction::Mean;
  // Regularise every trainable tensor (including alpha, beta) instead of the
  // layer-0 rows of batch participants.
  bool regAllParams = false;
};

struct LossReport {
  double recLoss = 0;              // BPR + regularisation
  double regLoss = 0;              // the regularisation part of recLoss
  std::vector<double> clLoss;      // per modality
  double total = 0;
};

// -log(sigmoid(x)) without overflow.
double negLogSigmoid(double x);

// (sum_b -log sigmoid(pos_b - neg_b) + lambda * regSquaredNorm), divided by
// the batch size under Reduction::Mean.
double bprLoss(std::span<const double> scoresPos,
               std::span<const double> scoresNeg, double regSquaredNorm,
               double lambda, Reduction reduction = Reduction::Mean);

// -sum_{n in pool} log softmax_{n'}(ego_n . neighbor_n' / tau)[n], computed
// with log-sum-exp. The pool indexes rows of `ego` / `neighbor`.
double infonceLoss(const Matrix& ego, const Matrix& neighbor,
                   std::span<const uint32_t> pool, double tau);

// Same loss; also adds scale * dLoss/dego and scale * dLoss/dneighbor into
// the given buffers.
double infonceLossWithGrad(const Matrix& ego, const Matrix& neighbor,
                           std::span<const uint32_t> pool, double tau,
                           double scale, Matrix& dEgo, Matrix& dNeighbor);

// Row indices (into the stacked user+item layout) of the user and item
// contrastive pools.
std::pair<IndexList, IndexList> contrastivePools(const TripletBatch& batch,
                                                 size_t numUsers,
                                                 size_t numItems, PoolMode mode);

LossReport totalLoss(const TripletBatch& batch, const ForwardTrace& trace,
                     const ModelParameters& params, const ObjectiveConfig& cfg);

// Exact gradients of totalLoss w.r.t. every tensor in `params`, by reverse
// accumulation through the stored trace.
GradientSet backward(const TripletBatch& batch, const ForwardTrace& trace,
                     const ModelParameters& params, const GraphContext& ctx,
                     const ObjectiveConfig& cfg, LossReport* report = nullptr);

// A small fully specified problem for gradient verification.
struct GradcheckInstance {
  InteractionDataset dataset;
  std::vector<ModalityFeatures> features;
  GraphContext context;
  ModelParameters params;
  TripletBatch batch;
  ObjectiveConfig objective;
  size_t numLayers = 3;
};

// 6 users, 8 items, two modalities, d=4, L=3, k=2, tau=0.2, lambda=1e-3,
// lambda_c=1e-2, full contrastive pools.
GradcheckInstance defaultGradcheckInstance(uint64_t seed = 7,
                                           bool featureProjection = false);

struct TensorCheck {
  std::string name;
  size_t coordinates = 0;
  double maxRelError = 0;
  double maxAbsError = 0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  double maxRelError = 0;
  bool passed = true;
  double seconds = 0;
};

// Relative error used per coordinate: |a - f| / max(|a|, |f|, 1e-6).
double gradientRelError(double analytic, double numeric);

// Central finite differences over every coordinate. `mutate` may alter the
// analytic gradients before comparison (used to test the harness itself).
GradcheckReport finiteDiffCheck(
  const GradcheckInstance& instance, double h, double tolerance,
  const std::function<void(GradientSet&)>& mutate = {});

}  // namespace mgrec
