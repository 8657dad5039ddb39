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

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace mgrec {

struct Interaction {
  std::string user;
  std::string item;
  std::optional<int64_t> timestamp;
};

struct RawInteractions {
  std::vector<Interaction> records;
  // Number of duplicate (user, item) lines folded away during ingestion.
  size_t duplicatesCollapsed = 0;
};

// Parses a TSV stream `user \t item [\t rating] [\t timestamp]`. A header
// line is recognised by a non-numeric rating/timestamp field. Duplicate pairs
// keep the earliest timestamp.
RawInteractions parseInteractions(std::istream& in, const std::string& source);
RawInteractions loadInteractions(const std::filesystem::path& path);

// Maximal k-core of the bipartite interaction graph (iterative peeling).
RawInteractions kcoreFilter(const RawInteractions& raw, size_t k = 5);

// Dense token <-> index bijection.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> tokens);

  size_t size() const { return tokens_.size(); }
  const std::string& token(uint32_t index) const { return tokens_.at(index); }
  std::optional<uint32_t> find(const std::string& token) const;
  uint32_t at(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, uint32_t> index_;
};

struct InteractionDataset {
  size_t numUsers = 0;
  size_t numItems = 0;
  UserItemLists train;
  UserItemLists val;
  UserItemLists test;
  IdMap users;
  IdMap items;
  std::vector<std::string> warnings;

  size_t trainSize() const;
  size_t numInteractions() const;
  // 1 - interactions / (users * items)
  double sparsity() const;
  // Throws if any documented invariant is broken.
  void validate() const;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Counts for one user with `n` interactions: test = floor(n * test ratio),
// raised to 1 when n >= 2; val = floor(n * val ratio); train gets the rest.
struct SplitCounts {
  size_t train = 0;
  size_t val = 0;
  size_t test = 0;
};
SplitCounts splitCounts(size_t n, const SplitRatios& ratios);

// Per-user random split. IDs are assigned in lexicographic token order.
InteractionDataset split(const RawInteractions& raw, const SplitRatios& ratios,
                         uint64_t seed);

struct ModalityFeatures {
  Modality modality = Modality::Visual;
  Matrix matrix;  // num_items x dim, rows in dataset item order

  size_t dim() const { return static_cast<size_t>(matrix.cols()); }
};

// Reorders a token-labelled feature matrix into dataset item order and
// checks it: every dataset item present, finite values, no all-zero row.
ModalityFeatures alignFeatures(const Matrix& matrix,
                               const std::vector<std::string>& rowTokens,
                               Modality modality,
                               const InteractionDataset& dataset);
// Reads an MMFT matrix and its `.tokens` sidecar.
ModalityFeatures loadFeatures(const std::filesystem::path& path,
                              Modality modality,
                              const InteractionDataset& dataset);

// train.tsv / val.tsv / test.tsv of dense index pairs plus id_map.jsonl.
void writeSplitManifest(const InteractionDataset& dataset,
                        const std::filesystem::path& dir);
InteractionDataset readSplitManifest(const std::filesystem::path& dir);

}  // namespace mgrec
