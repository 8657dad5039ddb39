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

#include <mgrec/graphs.hpp>
#include <mgrec/model.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace mgrec {
namespace {

namespace fs = std::filesystem;

TEST(Graphs, BipartiteMatchesDenseNormalization) {
  std::mt19937_64 rng(1);
  const InteractionDataset ds = oracle::randomDataset(9, 7, 0.3, rng);
  const BipartiteAdjacency adj = buildBipartite(ds);
  const Matrix dense = oracle::denseNormalizedAdjacency(ds);
  EXPECT_LT((adj.userToItem.toDense() - dense.topRightCorner(9, 7)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_TRUE(adj.itemToUser == adj.userToItem.transpose());
}

TEST(Graphs, BipartiteRejectsIsolatedNodes) {
  std::mt19937_64 rng(1);
  InteractionDataset ds = oracle::randomDataset(4, 4, 0.5, rng);
  ds.numItems = 5;
  ds.items = IdMap({"a", "b", "c", "d", "e"});
  EXPECT_THROW(buildBipartite(ds), Error);
}

TEST(Graphs, CosineTopKMatchesBruteForceWithTies) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const size_t n = 20 + seed * 7;
    Matrix f = oracle::randomMatrix(n, 5, rng);
    // Duplicated and scaled rows create exact ties.
    f.row(3) = f.row(1);
    f.row(4) = 2.0 * f.row(1);
    const size_t k = 1 + seed % 5;
    const SparseGraph g = cosineTopK(f, k, 8);
    EXPECT_EQ(oracle::edgeMap(g), oracle::bruteTopK(f, k)) << "seed " << seed;
  }
}

TEST(Graphs, CosineTopKErrors) {
  std::mt19937_64 rng(0);
  const Matrix f = oracle::randomMatrix(5, 3, rng);
  EXPECT_THROW(cosineTopK(f, 5), Error);
  EXPECT_EQ(cosineTopK(f, 4).nnz(), 20u);
}

TEST(Graphs, NormalizationClipsNegativesAndIsSymmetricForSymmetricInput) {
  const SparseGraph g = SparseGraph::fromRows(
    3, {{{1, 2.0}, {2, -1.0}}, {{0, 2.0}, {2, 1.0}}, {{0, -1.0}, {1, 1.0}}});
  const Matrix n = normalizeItemGraph(g).toDense();
  EXPECT_EQ(n(0, 2), 0.0);
  EXPECT_NEAR(n(0, 1), 2.0 / std::sqrt(2.0 * 3.0), 1e-15);
  EXPECT_NEAR((n - n.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  const SparseGraph isolated = SparseGraph::fromRows(2, {{{1, -1.0}}, {}});
  EXPECT_EQ(normalizeItemGraph(isolated).toDense().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Graphs, SpmvMatchesDense) {
  std::mt19937_64 rng(5);
  const Matrix f = oracle::randomMatrix(30, 4, rng);
  const SparseGraph g = cosineTopK(f, 4);
  const Matrix x = oracle::randomMatrix(30, 3, rng);
  EXPECT_LT((spmvMulti(g, x) - g.toDense() * x).cwiseAbs().maxCoeff(), 1e-14);
  Matrix out = Matrix::Ones(30, 3);
  spmvAccumulate(g, x, out, 0.5);
  EXPECT_LT((out - (Matrix::Ones(30, 3) + 0.5 * g.toDense() * x)).cwiseAbs().maxCoeff(), 1e-14);
  Matrix wrong(29, 3);
  EXPECT_THROW(spmvMulti(g, wrong), Error);
}

TEST(Graphs, CsrgRoundTripAndCorruptionDetected) {
  std::mt19937_64 rng(6);
  const SparseGraph g = normalizeItemGraph(cosineTopK(oracle::randomMatrix(25, 6, rng), 3));
  const fs::path path = fs::temp_directory_path() / "mgrec_test_graph.csrg";
  writeGraph(path, g);
  const SparseGraph back = readGraph(path);
  EXPECT_EQ(back.rowPtr, g.rowPtr);
  EXPECT_EQ(back.colIdx, g.colIdx);
  for (size_t e = 0; e < g.nnz(); ++e)
    EXPECT_EQ(back.values[e], static_cast<double>(static_cast<float>(g.values[e])));
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[30] ^= 1;
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
  }
  EXPECT_THROW(readGraph(path), Error);
}

std::vector<ModalityFeatures> randomFeatures(size_t items, std::mt19937_64& rng) {
  return {{Modality::Visual, oracle::randomMatrix(items, 6, rng, 0.0, 1.0)},
          {Modality::Textual, oracle::randomMatrix(items, 4, rng, -1.0, 1.0)}};
}

TEST(Graphs, ItemGraphsFrozenAndFusionMatchesDense) {
  std::mt19937_64 rng(8);
  auto features = randomFeatures(15, rng);
  ItemItemGraphs graphs = buildItemGraphs(features, 3, true);
  EXPECT_NO_THROW(graphs.verifyFrozen());
  const std::vector<double> alpha{0.3, 1.7};
  const Matrix dense = 0.3 * graphs.graphs[0].toDense() + 1.7 * graphs.graphs[1].toDense();
  EXPECT_LT((fuseItemGraphs(graphs, alpha).toDense() - dense).cwiseAbs().maxCoeff(), 1e-15);
  const ItemGraphFusion fusion(graphs);
  EXPECT_LT((fusion.fusedTranspose(alpha).toDense() - dense.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  const Matrix dOut = oracle::randomMatrix(15, 3, rng);
  const Matrix input = oracle::randomMatrix(15, 3, rng);
  for (size_t m = 0; m < 2; ++m) {
    const double expected = (dOut.transpose() * graphs.graphs[m].toDense() * input).trace();
    EXPECT_NEAR(fusion.weightGradient(m, dOut, input), expected, 1e-12);
  }
  graphs.graphs[0].values[0] += 1e-3;
  EXPECT_THROW(graphs.verifyFrozen(), Error);
}

TEST(Model, SparsePropagationMatchesDenseOracle) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const size_t nu = 5 + seed % 20, ni = 5 + (seed * 3) % 20;
    const InteractionDataset ds = oracle::randomDataset(nu, ni, 0.2, rng);
    ModelParameters p = makeParameters(std::vector<Modality>{Modality::Visual}, nu, ni, 3);
    p.userEmbed[0] = oracle::randomMatrix(nu, 3, rng);
    p.itemEmbed[0] = oracle::randomMatrix(ni, 3, rng);
    const ForwardTrace t = propagate(p, buildBipartite(ds), 4);
    Matrix layer0(nu + ni, 3);
    layer0 << p.userEmbed[0], p.itemEmbed[0];
    const auto layers = oracle::denseLayers(oracle::denseNormalizedAdjacency(ds), layer0, 4);
    for (size_t l = 0; l <= 4; ++l)
      EXPECT_LT((t.layers[0][l] - layers[l]).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Model, EgoNeighborSplitAndReadout) {
  std::mt19937_64 rng(3);
  const InteractionDataset ds = oracle::randomDataset(6, 5, 0.4, rng);
  ModelParameters p = makeParameters(std::vector<Modality>{Modality::Visual}, 6, 5, 2);
  p.userEmbed[0] = oracle::randomMatrix(6, 2, rng);
  p.itemEmbed[0] = oracle::randomMatrix(5, 2, rng);
  ForwardTrace t = propagate(p, buildBipartite(ds), 3);
  splitEgoNeighbor(t);
  const Matrix mean = (t.layers[0][1] + t.layers[0][2] + t.layers[0][3]) / 3.0;
  EXPECT_LT((t.neighbor[0] - mean).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((t.modalFinal[0] - (t.ego(0) + 3.0 * mean)).cwiseAbs().maxCoeff(), 1e-12);
  ForwardTrace flat = propagate(p, buildBipartite(ds), 0);
  EXPECT_THROW(splitEgoNeighbor(flat), Error);
}

TEST(Model, FusionMatchesDenseFormula) {
  std::mt19937_64 rng(4);
  const InteractionDataset ds = oracle::randomDataset(7, 9, 0.3, rng);
  const auto features = randomFeatures(9, rng);
  const GraphContext ctx = buildContext(ds, features, 3, true);
  ModelParameters p = makeParameters(std::vector<Modality>{Modality::Visual, Modality::Textual}, 7, 9, 3);
  for (size_t m = 0; m < 2; ++m) {
    p.userEmbed[m] = oracle::randomMatrix(7, 3, rng);
    p.itemEmbed[m] = oracle::randomMatrix(9, 3, rng);
  }
  p.alpha = {0.4, 0.9};
  p.beta = {1.3, 0.2};
  const ForwardTrace t = forward(p, ctx, 2);
  const Matrix s = 0.4 * ctx.itemGraphs.graphs[0].toDense() + 0.9 * ctx.itemGraphs.graphs[1].toDense();
  Matrix items(9, 6), users(7, 6);
  for (size_t m = 0; m < 2; ++m) {
    users.middleCols(3 * m, 3) = p.beta[m] * t.modalFinal[m].topRows(7);
    items.middleCols(3 * m, 3) = p.beta[m] * t.modalFinal[m].bottomRows(9);
  }
  EXPECT_LT((t.fused.users - users).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((t.fused.items - (items + s * items)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(score(t.fused, 2, 5), t.fused.users.row(2).dot(t.fused.items.row(5)), 1e-15);
}

TEST(Model, ProjectionModeUsesFeatures) {
  std::mt19937_64 rng(9);
  const InteractionDataset ds = oracle::randomDataset(5, 6, 0.4, rng);
  const auto features = randomFeatures(6, rng);
  const GraphContext ctx = buildContext(ds, features, 2, true);
  const std::vector<size_t> dims{6, 4};
  ModelParameters p = makeParameters(std::vector<Modality>{Modality::Visual, Modality::Textual}, 5, 6, 3, dims);
  ASSERT_TRUE(p.featureProjection());
  p.projection[0] = oracle::randomMatrix(6, 3, rng);
  p.projection[1] = oracle::randomMatrix(4, 3, rng);
  const ForwardTrace t = forward(p, ctx, 1);
  EXPECT_LT((t.ego(1).bottomRows(6) - features[1].matrix * p.projection[1]).cwiseAbs().maxCoeff(), 1e-15);
}

}  // namespace
}  // namespace mgrec
