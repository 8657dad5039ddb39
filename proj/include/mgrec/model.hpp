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
#include <mgrec/graphs.hpp>

#include <span>
#include <string>
#include <vector>

namespace mgrec {

// Trainable state. Item layer-0 rows come from `itemEmbed[m]`, or from
// features[m] * projection[m] in feature-projection mode.
struct ModelParameters {
  std::vector<Modality> modalities;
  size_t dim = 0;
  std::vector<Matrix> userEmbed;   // per modality: num_users x dim
  std::vector<Matrix> itemEmbed;   // per modality: num_items x dim
  std::vector<Matrix> projection;  // per modality: feature_dim x dim
  std::vector<double> alpha;       // item-item graph weights
  std::vector<double> beta;        // modality fusion weights

  bool featureProjection() const { return !projection.empty(); }
  size_t numModalities() const { return modalities.size(); }
  size_t parameterCount() const;
  bool allFinite() const;

  // Same shapes, all zeros.
  ModelParameters zerosLike() const;

  // Flat views of every tensor, in a fixed order. alpha and beta appear as
  // tensors named "alpha" and "beta".
  struct TensorView {
    std::string name;
    double* data = nullptr;
    size_t size = 0;
  };
  std::vector<TensorView> tensors();
};

using GradientSet = ModelParameters;

// Shapes only; values are zero. `featureDims` selects projection mode.
ModelParameters makeParameters(std::span<const Modality> modalities,
                               size_t numUsers, size_t numItems, size_t dim,
                               std::span<const size_t> featureDims = {});

// Everything the forward pass reads besides the parameters.
struct GraphContext {
  BipartiteAdjacency adjacency;
  ItemItemGraphs itemGraphs;
  ItemGraphFusion fusion;
  std::vector<Matrix> features;  // only needed in projection mode
  size_t numUsers = 0;
  size_t numItems = 0;
};

GraphContext buildContext(const InteractionDataset& dataset,
                          std::span<const ModalityFeatures> features, size_t k,
                          bool normalizeItemGraphs);

struct FusedEmbeddings {
  Matrix users;  // num_users x (M * dim)
  Matrix items;  // num_items x (M * dim)
};

struct ForwardTrace {
  size_t numUsers = 0;
  size_t numItems = 0;
  size_t numLayers = 0;
  // layers[m][l]: (num_users + num_items) x dim, users first.
  std::vector<std::vector<Matrix>> layers;
  std::vector<Matrix> neighbor;    // mean of layers 1..L
  std::vector<Matrix> modalFinal;  // sum of layers 0..L
  Matrix itemsBeforeGraph;         // beta-weighted item concat, pre item graph
  FusedEmbeddings fused;

  const Matrix& ego(size_t m) const { return layers.at(m).at(0); }
};

// Fills layers and modalFinal.
ForwardTrace propagate(const ModelParameters& params,
                       const BipartiteAdjacency& adjacency, size_t numLayers,
                       std::span<const Matrix> features = {});

// Fills trace.neighbor. Throws when the trace has no neighbor layers.
void splitEgoNeighbor(ForwardTrace& trace);

// Concatenates beta_m * modalFinal[m] and applies E_i <- E_i + S E_i.
void fuse(ForwardTrace& trace, const ModelParameters& params,
          const SparseGraph& itemGraph);

// propagate + splitEgoNeighbor (when L >= 1) + fuse with the alpha-fused
// item graph.
ForwardTrace forward(const ModelParameters& params, const GraphContext& ctx,
                     size_t numLayers);

double score(const FusedEmbeddings& fused, size_t user, size_t item);

}  // namespace mgrec
