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
#include <span>
#include <string>
#include <vector>

namespace mgrec {

// Compressed sparse row matrix. Column indices are strictly increasing
// within each row.
struct SparseGraph {
  uint32_t rows = 0;
  uint32_t cols = 0;
  std::vector<uint64_t> rowPtr{0};
  std::vector<uint32_t> colIdx;
  std::vector<double> values;

  static SparseGraph zeros(uint32_t rows, uint32_t cols);
  // Builds from per-row (column, value) lists; columns need not be sorted
  // but must be unique within a row.
  static SparseGraph fromRows(
    uint32_t cols, std::vector<std::vector<std::pair<uint32_t, double>>> rows);

  size_t nnz() const { return colIdx.size(); }
  SparseGraph transpose() const;
  Matrix toDense() const;
  void validate() const;
};

bool operator==(const SparseGraph& a, const SparseGraph& b);

// Hash over the exact in-memory content (shape, pattern, float64 values).
std::string graphHash(const SparseGraph& g);

struct BipartiteAdjacency {
  SparseGraph userToItem;  // num_users x num_items
  SparseGraph itemToUser;  // transpose
};

// Train edges weighted 1 / sqrt(deg(u) deg(i)).
BipartiteAdjacency buildBipartite(const InteractionDataset& dataset);

// Exact cosine of two rows: sequential dot product over sequential norms.
double cosineSimilarity(std::span<const double> a, std::span<const double> b);

// Row-wise top-k cosine neighbours (self excluded, ties to the smaller
// index). Candidate scores are computed blockwise; the final weights are the
// exact cosines from cosineSimilarity().
SparseGraph cosineTopK(const Matrix& features, size_t k,
                       size_t blockRows = 1024);

// Clips negative weights to zero, then w_ij / sqrt(d_i d_j) with d the
// weighted row degree. Entries touching a zero-degree row become zero.
SparseGraph normalizeItemGraph(const SparseGraph& g);

// Frozen per-modality item-item graphs.
struct ItemItemGraphs {
  std::vector<Modality> modalities;
  std::vector<SparseGraph> graphs;
  size_t k = 0;
  bool normalized = true;
  std::vector<std::string> hashes;  // recorded at construction

  // Throws if any graph no longer matches its recorded hash.
  void verifyFrozen() const;
};

ItemItemGraphs buildItemGraphs(std::span<const ModalityFeatures> features,
                               size_t k, bool normalize);

// Sum_m alpha_m S_m over the union sparsity pattern, with the transpose and
// the per-modality contributions kept aligned so gradients w.r.t. alpha can
// be read off directly.
class ItemGraphFusion {
 public:
  ItemGraphFusion() = default;
  explicit ItemGraphFusion(const ItemItemGraphs& graphs);

  size_t numModalities() const { return modalityValues_.size(); }
  uint32_t numItems() const { return pattern_.rows; }

  SparseGraph fused(std::span<const double> alpha) const;
  SparseGraph fusedTranspose(std::span<const double> alpha) const;

  // sum over stored (r, c) of S_m(r, c) * <dOut.row(r), input.row(c)>
  double weightGradient(size_t modality, const Matrix& dOut,
                        const Matrix& input) const;

 private:
  SparseGraph pattern_;
  SparseGraph transposePattern_;
  std::vector<uint64_t> transposeSource_;  // transpose entry -> pattern entry
  std::vector<std::vector<double>> modalityValues_;
};

SparseGraph fuseItemGraphs(const ItemItemGraphs& graphs,
                           std::span<const double> alpha);

// out = g * x
Matrix spmvMulti(const SparseGraph& g, ConstMatrixRef x);
// out += scale * g * x
void spmvAccumulate(const SparseGraph& g, ConstMatrixRef x, MatrixRef out,
                    double scale = 1.0);

// Binary CSR file: magic "CSRG", u32 rows, cols, nnz; u64 row_ptr[rows+1];
// u32 col_idx[nnz]; f32 values[nnz]; then the 40-character content hash of
// everything before it.
void writeGraph(const std::filesystem::path& path, const SparseGraph& g);
SparseGraph readGraph(const std::filesystem::path& path);
void writeGraphTsv(const std::filesystem::path& path, const SparseGraph& g);

}  // namespace mgrec
