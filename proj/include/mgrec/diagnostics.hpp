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
#include <mgrec/model.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mgrec {

// Cosine-based spread of a set of embedding rows. Rows are compared after
// normalisation; a zero row has cosine 0 with everything.
struct Dispersion {
  double meanPairwiseCosineDistance = 0;  // mean of 1 - cos over row pairs
  double meanNearestNeighborSimilarity = 0;
  size_t rows = 0;
  size_t pairsUsed = 0;
  bool exact = false;
};

struct DispersionReport {
  Dispersion all;
  std::optional<Dispersion> users;
  std::optional<Dispersion> items;
};

// Exact all-pairs statistics when rows <= exactLimit; otherwise
// `samplePairs` uniformly drawn distinct pairs (and up to `samplePairs`
// rows for the nearest-neighbour statistic).
Dispersion dispersion(const Matrix& embeddings, size_t samplePairs,
                      uint64_t seed, size_t exactLimit = 2000);

// Dispersion of the whole matrix plus the user block (rows < numUsers) and
// item block.
DispersionReport dispersionReport(const Matrix& embeddings, size_t numUsers,
                                  size_t samplePairs, uint64_t seed,
                                  size_t exactLimit = 2000);

struct VariantComparison {
  DispersionReport a;
  DispersionReport b;
  double deltaDistance = 0;  // a - b
  double deltaNearestNeighbor = 0;
  double deltaUserDistance = 0;
  double deltaItemDistance = 0;
  std::string verdict;
};

VariantComparison compareVariants(const Matrix& a, const Matrix& b,
                                  size_t numUsers, size_t samplePairs,
                                  uint64_t seed, size_t exactLimit = 2000);

std::string dispersionJson(const DispersionReport& report);
std::string comparisonJson(const VariantComparison& comparison);

// Selector grammar: "fused", or "<ego|neighbor|modal_final>:<v|t>".
// Returns the (users + items) x width matrix the selector names.
Matrix selectEmbeddings(const ForwardTrace& trace,
                        const ModelParameters& params,
                        const std::string& selector);

// Writes <dir>/<selector with ':' -> '_'>.mmft plus a token sidecar whose
// rows read "u:<token>" then "i:<token>".
std::filesystem::path exportEmbeddings(const ForwardTrace& trace,
                                       const ModelParameters& params,
                                       const InteractionDataset& dataset,
                                       const std::string& selector,
                                       const std::filesystem::path& dir);

}  // namespace mgrec
