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

#include <mgrec/io.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace mgrec {

namespace {

// Slack for candidate selection from blockwise scores before exact rescoring.
constexpr double kCandidateSlack = 1e-9;

template <typename T>
void append(std::string& out, const T& value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T extract(std::string_view bytes, size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) {
    throw Error("truncated CSRG file");
  }
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

SparseGraph SparseGraph::zeros(uint32_t rows, uint32_t cols) {
  SparseGraph g;
  g.rows = rows;
  g.cols = cols;
  g.rowPtr.assign(size_t{rows} + 1, 0);
  return g;
}

SparseGraph SparseGraph::fromRows(
  uint32_t cols, std::vector<std::vector<std::pair<uint32_t, double>>> rows) {
  SparseGraph g = zeros(static_cast<uint32_t>(rows.size()), cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    auto& row = rows[r];
    std::sort(row.begin(), row.end());
    for (size_t j = 0; j < row.size(); ++j) {
      if (row[j].first >= cols || (j > 0 && row[j].first == row[j - 1].first)) {
        throw Error("SparseGraph::fromRows: bad or duplicate column");
      }
      g.colIdx.push_back(row[j].first);
      g.values.push_back(row[j].second);
    }
    g.rowPtr[r + 1] = g.colIdx.size();
  }
  return g;
}

SparseGraph SparseGraph::transpose() const {
  SparseGraph t = zeros(cols, rows);
  std::vector<uint64_t> count(size_t{cols} + 1, 0);
  for (uint32_t c : colIdx) {
    ++count[c + 1];
  }
  std::partial_sum(count.begin(), count.end(), t.rowPtr.begin());
  t.colIdx.resize(nnz());
  t.values.resize(nnz());
  std::vector<uint64_t> next(t.rowPtr.begin(), t.rowPtr.end() - 1);
  for (uint32_t r = 0; r < rows; ++r) {
    for (uint64_t e = rowPtr[r]; e < rowPtr[r + 1]; ++e) {
      const uint64_t dst = next[colIdx[e]]++;
      t.colIdx[dst] = r;
      t.values[dst] = values[e];
    }
  }
  return t;
}

Matrix SparseGraph::toDense() const {
  Matrix d = Matrix::Zero(rows, cols);
  for (uint32_t r = 0; r < rows; ++r) {
    for (uint64_t e = rowPtr[r]; e < rowPtr[r + 1]; ++e) {
      d(r, colIdx[e]) = values[e];
    }
  }
  return d;
}

void SparseGraph::validate() const {
  if (rowPtr.size() != size_t{rows} + 1 || rowPtr.front() != 0 ||
      rowPtr.back() != colIdx.size() || values.size() != colIdx.size()) {
    throw Error("SparseGraph: inconsistent CSR arrays");
  }
  for (uint32_t r = 0; r < rows; ++r) {
    if (rowPtr[r] > rowPtr[r + 1]) {
      throw Error("SparseGraph: row_ptr not monotone");
    }
    for (uint64_t e = rowPtr[r]; e < rowPtr[r + 1]; ++e) {
      if (colIdx[e] >= cols || (e > rowPtr[r] && colIdx[e] <= colIdx[e - 1])) {
        throw Error("SparseGraph: column indices must be strictly increasing");
      }
      if (!std::isfinite(values[e])) {
        throw Error("SparseGraph: non-finite value");
      }
    }
  }
}

bool operator==(const SparseGraph& a, const SparseGraph& b) {
  return a.rows == b.rows && a.cols == b.cols && a.rowPtr == b.rowPtr &&
         a.colIdx == b.colIdx && a.values == b.values;
}

std::string graphHash(const SparseGraph& g) {
  std::string bytes;
  append(bytes, g.rows);
  append(bytes, g.cols);
  for (auto v : g.rowPtr) append(bytes, v);
  for (auto v : g.colIdx) append(bytes, v);
  for (auto v : g.values) append(bytes, v);
  return io::contentHash(bytes);
}

BipartiteAdjacency buildBipartite(const InteractionDataset& dataset) {
  std::vector<size_t> itemDeg(dataset.numItems, 0);
  for (const auto& items : dataset.train) {
    for (uint32_t i : items) {
      ++itemDeg[i];
    }
  }
  BipartiteAdjacency adj;
  auto& g = adj.userToItem;
  g = SparseGraph::zeros(static_cast<uint32_t>(dataset.numUsers),
                         static_cast<uint32_t>(dataset.numItems));
  for (size_t u = 0; u < dataset.numUsers; ++u) {
    const auto& items = dataset.train[u];
    if (items.empty()) {
      throw Error("build_bipartite: user " + std::to_string(u) +
                  " has zero train degree");
    }
    const double du = static_cast<double>(items.size());
    for (uint32_t i : items) {
      g.colIdx.push_back(i);
      g.values.push_back(1.0 / std::sqrt(du * static_cast<double>(itemDeg[i])));
    }
    g.rowPtr[u + 1] = g.colIdx.size();
  }
  for (size_t i = 0; i < dataset.numItems; ++i) {
    if (itemDeg[i] == 0) {
      throw Error("build_bipartite: item " + std::to_string(i) +
                  " has zero train degree");
    }
  }
  adj.itemToUser = g.transpose();
  return adj;
}

double cosineSimilarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0;
  double na = 0;
  double nb = 0;
  for (size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
  }
  for (size_t j = 0; j < a.size(); ++j) {
    na += a[j] * a[j];
  }
  for (size_t j = 0; j < b.size(); ++j) {
    nb += b[j] * b[j];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

SparseGraph cosineTopK(const Matrix& features, size_t k, size_t blockRows) {
  const auto n = static_cast<size_t>(features.rows());
  if (k == 0) {
    throw Error("cosine_topk: k must be >= 1");
  }
  if (k >= n) {
    throw Error("cosine_topk: k (" + std::to_string(k) +
                ") must be smaller than the number of items (" +
                std::to_string(n) + ")");
  }
  blockRows = std::max<size_t>(1, blockRows);
  const Eigen::VectorXd norms = features.rowwise().norm();
  if ((norms.array() == 0.0).any()) {
    throw Error("cosine_topk: zero feature row");
  }
  const Matrix unit = norms.cwiseInverse().asDiagonal() * features;
  const auto rowOf = [&](size_t i) {
    return std::span<const double>(features.row(static_cast<Eigen::Index>(i)).data(),
                                   static_cast<size_t>(features.cols()));
  };

  std::vector<std::vector<std::pair<uint32_t, double>>> rows(n);
  for (size_t start = 0; start < n; start += blockRows) {
    const size_t count = std::min(blockRows, n - start);
    const Matrix approx =
      unit.middleRows(static_cast<Eigen::Index>(start),
                      static_cast<Eigen::Index>(count)) *
      unit.transpose();
#pragma omp parallel for schedule(dynamic, 16)
    for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(count); ++b) {
      const size_t i = start + static_cast<size_t>(b);
      std::vector<double> scores;
      scores.reserve(n - 1);
      for (size_t j = 0; j < n; ++j) {
        if (j != i) {
          scores.push_back(approx(b, static_cast<Eigen::Index>(j)));
        }
      }
      std::nth_element(scores.begin(), scores.begin() + static_cast<long>(k - 1),
                       scores.end(), std::greater<>());
      const double threshold = scores[k - 1] - kCandidateSlack;
      std::vector<std::pair<double, uint32_t>> cand;
      for (size_t j = 0; j < n; ++j) {
        if (j != i && approx(b, static_cast<Eigen::Index>(j)) >= threshold) {
          cand.emplace_back(cosineSimilarity(rowOf(i), rowOf(j)),
                            static_cast<uint32_t>(j));
        }
      }
      std::sort(cand.begin(), cand.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
      });
      auto& out = rows[i];
      for (size_t t = 0; t < k; ++t) {
        out.emplace_back(cand[t].second, cand[t].first);
      }
    }
  }
  return SparseGraph::fromRows(static_cast<uint32_t>(n), std::move(rows));
}

SparseGraph normalizeItemGraph(const SparseGraph& g) {
  SparseGraph out = g;
  for (auto& v : out.values) {
    v = std::max(v, 0.0);
  }
  std::vector<double> deg(out.rows, 0.0);
  for (uint32_t r = 0; r < out.rows; ++r) {
    for (uint64_t e = out.rowPtr[r]; e < out.rowPtr[r + 1]; ++e) {
      deg[r] += out.values[e];
    }
  }
  for (uint32_t r = 0; r < out.rows; ++r) {
    for (uint64_t e = out.rowPtr[r]; e < out.rowPtr[r + 1]; ++e) {
      const uint32_t c = out.colIdx[e];
      const double dc = c < out.rows ? deg[c] : 0.0;
      out.values[e] = (deg[r] > 0 && dc > 0)
                        ? out.values[e] / std::sqrt(deg[r] * dc)
                        : 0.0;
    }
  }
  return out;
}

void ItemItemGraphs::verifyFrozen() const {
  for (size_t m = 0; m < graphs.size(); ++m) {
    if (graphHash(graphs[m]) != hashes.at(m)) {
      throw Error("item-item graph for " +
                  std::string(modalityName(modalities[m])) +
                  " changed after construction");
    }
  }
}

ItemItemGraphs buildItemGraphs(std::span<const ModalityFeatures> features,
                               size_t k, bool normalize) {
  ItemItemGraphs out;
  out.k = k;
  out.normalized = normalize;
  for (const auto& f : features) {
    SparseGraph g = cosineTopK(f.matrix, k);
    if (normalize) {
      g = normalizeItemGraph(g);
    }
    out.modalities.push_back(f.modality);
    out.hashes.push_back(graphHash(g));
    out.graphs.push_back(std::move(g));
  }
  return out;
}

ItemGraphFusion::ItemGraphFusion(const ItemItemGraphs& graphs) {
  if (graphs.graphs.empty()) {
    throw Error("item graph fusion needs at least one graph");
  }
  const uint32_t n = graphs.graphs.front().rows;
  for (const auto& g : graphs.graphs) {
    if (g.rows != n || g.cols != n) {
      throw Error("fuse_item_graphs: shape mismatch between modality graphs");
    }
  }
  pattern_ = SparseGraph::zeros(n, n);
  const size_t numModalities = graphs.graphs.size();
  modalityValues_.resize(numModalities);
  for (uint32_t r = 0; r < n; ++r) {
    std::vector<uint32_t> cols;
    for (const auto& g : graphs.graphs) {
      cols.insert(cols.end(), g.colIdx.begin() + static_cast<long>(g.rowPtr[r]),
                  g.colIdx.begin() + static_cast<long>(g.rowPtr[r + 1]));
    }
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    for (size_t m = 0; m < numModalities; ++m) {
      const auto& g = graphs.graphs[m];
      uint64_t e = g.rowPtr[r];
      for (uint32_t c : cols) {
        double v = 0.0;
        if (e < g.rowPtr[r + 1] && g.colIdx[e] == c) {
          v = g.values[e++];
        }
        modalityValues_[m].push_back(v);
      }
    }
    pattern_.colIdx.insert(pattern_.colIdx.end(), cols.begin(), cols.end());
    pattern_.rowPtr[r + 1] = pattern_.colIdx.size();
  }
  pattern_.values.assign(pattern_.nnz(), 0.0);

  // Transpose with a map back to pattern entries.
  SparseGraph indexed = pattern_;
  for (size_t e = 0; e < indexed.nnz(); ++e) {
    indexed.values[e] = static_cast<double>(e);
  }
  transposePattern_ = indexed.transpose();
  transposeSource_.resize(transposePattern_.nnz());
  for (size_t e = 0; e < transposePattern_.nnz(); ++e) {
    transposeSource_[e] = static_cast<uint64_t>(transposePattern_.values[e]);
  }
}

SparseGraph ItemGraphFusion::fused(std::span<const double> alpha) const {
  if (alpha.size() != modalityValues_.size()) {
    throw Error("fuse_item_graphs: alpha size does not match modality count");
  }
  SparseGraph g = pattern_;
  for (size_t e = 0; e < g.nnz(); ++e) {
    double v = 0.0;
    for (size_t m = 0; m < alpha.size(); ++m) {
      v += alpha[m] * modalityValues_[m][e];
    }
    g.values[e] = v;
  }
  return g;
}

SparseGraph ItemGraphFusion::fusedTranspose(std::span<const double> alpha) const {
  const SparseGraph forward = fused(alpha);
  SparseGraph t = transposePattern_;
  for (size_t e = 0; e < t.nnz(); ++e) {
    t.values[e] = forward.values[transposeSource_[e]];
  }
  return t;
}

double ItemGraphFusion::weightGradient(size_t modality, const Matrix& dOut,
                                       const Matrix& input) const {
  const auto& vals = modalityValues_.at(modality);
  double total = 0.0;
  for (uint32_t r = 0; r < pattern_.rows; ++r) {
    for (uint64_t e = pattern_.rowPtr[r]; e < pattern_.rowPtr[r + 1]; ++e) {
      if (vals[e] != 0.0) {
        total += vals[e] * dOut.row(r).dot(input.row(pattern_.colIdx[e]));
      }
    }
  }
  return total;
}

SparseGraph fuseItemGraphs(const ItemItemGraphs& graphs,
                           std::span<const double> alpha) {
  return ItemGraphFusion(graphs).fused(alpha);
}

void spmvAccumulate(const SparseGraph& g, ConstMatrixRef x, MatrixRef out,
                    double scale) {
  if (static_cast<Eigen::Index>(g.cols) != x.rows() ||
      static_cast<Eigen::Index>(g.rows) != out.rows() ||
      x.cols() != out.cols()) {
    throw Error("spmv_multi: dimension mismatch (graph " +
                std::to_string(g.rows) + "x" + std::to_string(g.cols) +
                ", input " + std::to_string(x.rows()) + "x" +
                std::to_string(x.cols()) + ")");
  }
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(g.rows); ++r) {
    for (uint64_t e = g.rowPtr[r]; e < g.rowPtr[r + 1]; ++e) {
      out.row(r) += (scale * g.values[e]) * x.row(g.colIdx[e]);
    }
  }
}

Matrix spmvMulti(const SparseGraph& g, ConstMatrixRef x) {
  Matrix out = Matrix::Zero(g.rows, x.cols());
  spmvAccumulate(g, x, out);
  return out;
}

void writeGraph(const std::filesystem::path& path, const SparseGraph& g) {
  g.validate();
  std::string bytes = "CSRG";
  append(bytes, g.rows);
  append(bytes, g.cols);
  if (g.nnz() > UINT32_MAX) {
    throw Error("graph too large for CSRG format");
  }
  append(bytes, static_cast<uint32_t>(g.nnz()));
  for (auto v : g.rowPtr) append(bytes, v);
  for (auto v : g.colIdx) append(bytes, v);
  for (auto v : g.values) append(bytes, static_cast<float>(v));
  bytes += io::contentHash(bytes);
  io::writeFileAtomic(path, bytes);
}

SparseGraph readGraph(const std::filesystem::path& path) {
  const std::string bytes = io::readFile(path);
  constexpr size_t kHashLen = 40;
  if (bytes.size() < 16 + kHashLen || bytes.compare(0, 4, "CSRG") != 0) {
    throw Error(path.string() + ": not a CSRG graph file");
  }
  const std::string_view payload(bytes.data(), bytes.size() - kHashLen);
  if (io::contentHash(payload) != bytes.substr(bytes.size() - kHashLen)) {
    throw Error(path.string() + ": content hash mismatch");
  }
  size_t off = 4;
  SparseGraph g;
  g.rows = extract<uint32_t>(payload, off);
  g.cols = extract<uint32_t>(payload, off);
  const auto nnz = extract<uint32_t>(payload, off);
  g.rowPtr.resize(size_t{g.rows} + 1);
  for (auto& v : g.rowPtr) v = extract<uint64_t>(payload, off);
  g.colIdx.resize(nnz);
  for (auto& v : g.colIdx) v = extract<uint32_t>(payload, off);
  g.values.resize(nnz);
  for (auto& v : g.values) v = extract<float>(payload, off);
  if (off != payload.size()) {
    throw Error(path.string() + ": trailing bytes in CSRG payload");
  }
  g.validate();
  return g;
}

void writeGraphTsv(const std::filesystem::path& path, const SparseGraph& g) {
  std::ostringstream out;
  out.precision(17);
  for (uint32_t r = 0; r < g.rows; ++r) {
    for (uint64_t e = g.rowPtr[r]; e < g.rowPtr[r + 1]; ++e) {
      out << r << '\t' << g.colIdx[e] << '\t' << g.values[e] << '\n';
    }
  }
  io::writeFileAtomic(path, out.str());
}

}  // namespace mgrec
