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

#include <mgrec/model.hpp>

#include <cmath>

namespace mgrec {

size_t ModelParameters::parameterCount() const {
  size_t n = alpha.size() + beta.size();
  for (const auto* group : {&userEmbed, &itemEmbed, &projection}) {
    for (const auto& t : *group) {
      n += static_cast<size_t>(t.size());
    }
  }
  return n;
}

bool ModelParameters::allFinite() const {
  for (const auto* group : {&userEmbed, &itemEmbed, &projection}) {
    for (const auto& t : *group) {
      if (!t.allFinite()) {
        return false;
      }
    }
  }
  for (const auto* s : {&alpha, &beta}) {
    for (double v : *s) {
      if (!std::isfinite(v)) {
        return false;
      }
    }
  }
  return true;
}

std::vector<ModelParameters::TensorView> ModelParameters::tensors() {
  std::vector<TensorView> views;
  for (size_t m = 0; m < modalities.size(); ++m) {
    const std::string code(modalityCode(modalities[m]));
    views.push_back({"user_embed[" + code + "]", userEmbed[m].data(),
                     static_cast<size_t>(userEmbed[m].size())});
    if (featureProjection()) {
      views.push_back({"projection[" + code + "]", projection[m].data(),
                       static_cast<size_t>(projection[m].size())});
    } else {
      views.push_back({"item_embed[" + code + "]", itemEmbed[m].data(),
                       static_cast<size_t>(itemEmbed[m].size())});
    }
  }
  views.push_back({"alpha", alpha.data(), alpha.size()});
  views.push_back({"beta", beta.data(), beta.size()});
  return views;
}

ModelParameters ModelParameters::zerosLike() const {
  ModelParameters z = *this;
  for (auto* group : {&z.userEmbed, &z.itemEmbed, &z.projection}) {
    for (auto& t : *group) {
      t.setZero();
    }
  }
  std::fill(z.alpha.begin(), z.alpha.end(), 0.0);
  std::fill(z.beta.begin(), z.beta.end(), 0.0);
  return z;
}

ModelParameters makeParameters(std::span<const Modality> modalities,
                               size_t numUsers, size_t numItems, size_t dim,
                               std::span<const size_t> featureDims) {
  if (modalities.empty()) {
    throw Error("model needs at least one modality");
  }
  if (!featureDims.empty() && featureDims.size() != modalities.size()) {
    throw Error("feature dims must match modality count");
  }
  ModelParameters p;
  p.modalities.assign(modalities.begin(), modalities.end());
  p.dim = dim;
  const auto d = static_cast<Eigen::Index>(dim);
  for (size_t m = 0; m < modalities.size(); ++m) {
    p.userEmbed.push_back(Matrix::Zero(static_cast<Eigen::Index>(numUsers), d));
    if (featureDims.empty()) {
      p.itemEmbed.push_back(Matrix::Zero(static_cast<Eigen::Index>(numItems), d));
    } else {
      p.projection.push_back(
        Matrix::Zero(static_cast<Eigen::Index>(featureDims[m]), d));
    }
  }
  p.alpha.assign(modalities.size(), 0.0);
  p.beta.assign(modalities.size(), 0.0);
  return p;
}

GraphContext buildContext(const InteractionDataset& dataset,
                          std::span<const ModalityFeatures> features, size_t k,
                          bool normalizeItemGraphs) {
  GraphContext ctx;
  ctx.numUsers = dataset.numUsers;
  ctx.numItems = dataset.numItems;
  ctx.adjacency = buildBipartite(dataset);
  ctx.itemGraphs = buildItemGraphs(features, k, normalizeItemGraphs);
  ctx.fusion = ItemGraphFusion(ctx.itemGraphs);
  for (const auto& f : features) {
    if (static_cast<size_t>(f.matrix.rows()) != dataset.numItems) {
      throw Error("feature matrix rows do not match item count");
    }
    ctx.features.push_back(f.matrix);
  }
  return ctx;
}

ForwardTrace propagate(const ModelParameters& params,
                       const BipartiteAdjacency& adjacency, size_t numLayers,
                       std::span<const Matrix> features) {
  ForwardTrace t;
  t.numUsers = adjacency.userToItem.rows;
  t.numItems = adjacency.userToItem.cols;
  t.numLayers = numLayers;
  const auto nu = static_cast<Eigen::Index>(t.numUsers);
  const auto ni = static_cast<Eigen::Index>(t.numItems);
  const auto d = static_cast<Eigen::Index>(params.dim);
  t.layers.resize(params.numModalities());
  t.modalFinal.resize(params.numModalities());
  for (size_t m = 0; m < params.numModalities(); ++m) {
    if (params.userEmbed[m].rows() != nu || params.userEmbed[m].cols() != d) {
      throw Error("propagate: user embedding shape does not match adjacency");
    }
    Matrix layer0(nu + ni, d);
    layer0.topRows(nu) = params.userEmbed[m];
    if (params.featureProjection()) {
      if (features.size() != params.numModalities() ||
          features[m].rows() != ni ||
          features[m].cols() != params.projection[m].rows()) {
        throw Error("propagate: features do not match projection shapes");
      }
      layer0.bottomRows(ni) = features[m] * params.projection[m];
    } else {
      if (params.itemEmbed[m].rows() != ni || params.itemEmbed[m].cols() != d) {
        throw Error("propagate: item embedding shape does not match adjacency");
      }
      layer0.bottomRows(ni) = params.itemEmbed[m];
    }
    auto& layers = t.layers[m];
    layers.reserve(numLayers + 1);
    layers.push_back(std::move(layer0));
    for (size_t l = 1; l <= numLayers; ++l) {
      const Matrix& prev = layers.back();
      Matrix next(nu + ni, d);
      next.topRows(nu) = spmvMulti(adjacency.userToItem, prev.bottomRows(ni));
      next.bottomRows(ni) = spmvMulti(adjacency.itemToUser, prev.topRows(nu));
      layers.push_back(std::move(next));
    }
    Matrix sum = layers[0];
    for (size_t l = 1; l <= numLayers; ++l) {
      sum += layers[l];
    }
    t.modalFinal[m] = std::move(sum);
  }
  return t;
}

void splitEgoNeighbor(ForwardTrace& trace) {
  if (trace.numLayers == 0) {
    throw Error("split_ego_neighbor: no neighbor layers (L = 0)");
  }
  trace.neighbor.resize(trace.layers.size());
  const double inv = 1.0 / static_cast<double>(trace.numLayers);
  for (size_t m = 0; m < trace.layers.size(); ++m) {
    Matrix sum = trace.layers[m][1];
    for (size_t l = 2; l <= trace.numLayers; ++l) {
      sum += trace.layers[m][l];
    }
    trace.neighbor[m] = inv * sum;
  }
}

void fuse(ForwardTrace& trace, const ModelParameters& params,
          const SparseGraph& itemGraph) {
  const auto nu = static_cast<Eigen::Index>(trace.numUsers);
  const auto ni = static_cast<Eigen::Index>(trace.numItems);
  const auto d = static_cast<Eigen::Index>(params.dim);
  const auto numModalities = static_cast<Eigen::Index>(params.numModalities());
  if (trace.modalFinal.size() != params.numModalities()) {
    throw Error("fuse: trace has no per-modality readout");
  }
  if (itemGraph.rows != trace.numItems || itemGraph.cols != trace.numItems) {
    throw Error("fuse: item graph shape does not match item count");
  }
  trace.fused.users.resize(nu, numModalities * d);
  trace.itemsBeforeGraph.resize(ni, numModalities * d);
  for (Eigen::Index m = 0; m < numModalities; ++m) {
    const double b = params.beta[static_cast<size_t>(m)];
    const Matrix& fin = trace.modalFinal[static_cast<size_t>(m)];
    trace.fused.users.middleCols(m * d, d) = b * fin.topRows(nu);
    trace.itemsBeforeGraph.middleCols(m * d, d) = b * fin.bottomRows(ni);
  }
  trace.fused.items = trace.itemsBeforeGraph;
  spmvAccumulate(itemGraph, trace.itemsBeforeGraph, trace.fused.items);
}

ForwardTrace forward(const ModelParameters& params, const GraphContext& ctx,
                     size_t numLayers) {
  ForwardTrace t =
    propagate(params, ctx.adjacency, numLayers,
              params.featureProjection() ? std::span<const Matrix>(ctx.features)
                                         : std::span<const Matrix>());
  if (numLayers > 0) {
    splitEgoNeighbor(t);
  }
  fuse(t, params, ctx.fusion.fused(params.alpha));
  return t;
}

double score(const FusedEmbeddings& fused, size_t user, size_t item) {
  if (user >= static_cast<size_t>(fused.users.rows()) ||
      item >= static_cast<size_t>(fused.items.rows())) {
    throw Error("score: index out of range");
  }
  return fused.users.row(static_cast<Eigen::Index>(user))
    .dot(fused.items.row(static_cast<Eigen::Index>(item)));
}

}  // namespace mgrec
