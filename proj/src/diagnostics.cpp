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

#include <mgrec/diagnostics.hpp>

#include <mgrec/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace mgrec {

namespace {

Matrix normalizedRows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > 0) {
      out.row(r) /= n;
    }
  }
  return out;
}

// Rounding can push the dot product of unit rows just past +-1.
double clampCosine(double c) { return std::clamp(c, -1.0, 1.0); }

nlohmann::json toJson(const Dispersion& d) {
  return {{"mean_pairwise_cosine_distance", d.meanPairwiseCosineDistance},
          {"mean_nearest_neighbor_similarity", d.meanNearestNeighborSimilarity},
          {"rows", d.rows},
          {"pairs_used", d.pairsUsed},
          {"exact", d.exact}};
}

nlohmann::json toJson(const DispersionReport& r) {
  nlohmann::json j;
  j["all"] = toJson(r.all);
  if (r.users) j["users"] = toJson(*r.users);
  if (r.items) j["items"] = toJson(*r.items);
  return j;
}

}  // namespace

Dispersion dispersion(const Matrix& embeddings, size_t samplePairs,
                      uint64_t seed, size_t exactLimit) {
  const auto n = static_cast<size_t>(embeddings.rows());
  if (n < 2) {
    throw Error("dispersion: need at least 2 rows");
  }
  if (samplePairs == 0) {
    throw Error("dispersion: sample_pairs must be >= 1");
  }
  const Matrix unit = normalizedRows(embeddings);
  Dispersion d;
  d.rows = n;
  if (n <= exactLimit) {
    d.exact = true;
    const Matrix sim = unit * unit.transpose();
    double sum = 0.0;
    double nnSum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double s = clampCosine(
          sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        best = std::max(best, s);
        if (j > i) {
          sum += 1.0 - s;
        }
      }
      nnSum += best;
    }
    d.pairsUsed = n * (n - 1) / 2;
    d.meanPairwiseCosineDistance = sum / static_cast<double>(d.pairsUsed);
    d.meanNearestNeighborSimilarity = nnSum / static_cast<double>(n);
    return d;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, n - 1);
  double sum = 0.0;
  for (size_t s = 0; s < samplePairs; ++s) {
    const size_t i = pick(rng);
    size_t j = pick(rng);
    while (j == i) {
      j = pick(rng);
    }
    sum += 1.0 - clampCosine(unit.row(static_cast<Eigen::Index>(i))
                               .dot(unit.row(static_cast<Eigen::Index>(j))));
  }
  d.pairsUsed = samplePairs;
  d.meanPairwiseCosineDistance = sum / static_cast<double>(samplePairs);

  const size_t probes = std::min(samplePairs, n);
  double nnSum = 0.0;
  for (size_t s = 0; s < probes; ++s) {
    const auto i = static_cast<Eigen::Index>(probes == n ? s : pick(rng));
    Eigen::VectorXd sims = unit * unit.row(i).transpose();
    sims(i) = -std::numeric_limits<double>::infinity();
    nnSum += clampCosine(sims.maxCoeff());
  }
  d.meanNearestNeighborSimilarity = nnSum / static_cast<double>(probes);
  return d;
}

DispersionReport dispersionReport(const Matrix& embeddings, size_t numUsers,
                                  size_t samplePairs, uint64_t seed,
                                  size_t exactLimit) {
  DispersionReport r;
  r.all = dispersion(embeddings, samplePairs, seed, exactLimit);
  const auto nu = static_cast<Eigen::Index>(numUsers);
  const auto ni = embeddings.rows() - nu;
  if (nu >= 2) {
    r.users = dispersion(embeddings.topRows(nu), samplePairs, seed, exactLimit);
  }
  if (ni >= 2) {
    r.items = dispersion(embeddings.bottomRows(ni), samplePairs, seed, exactLimit);
  }
  return r;
}

VariantComparison compareVariants(const Matrix& a, const Matrix& b,
                                  size_t numUsers, size_t samplePairs,
                                  uint64_t seed, size_t exactLimit) {
  if (a.rows() != b.rows()) {
    throw Error("compare_variants: models embed different node counts (" +
                std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) +
                ")");
  }
  if (a.cols() != b.cols()) {
    throw Error("compare_variants: embedding widths differ (" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) +
                ")");
  }
  VariantComparison c;
  c.a = dispersionReport(a, numUsers, samplePairs, seed, exactLimit);
  c.b = dispersionReport(b, numUsers, samplePairs, seed, exactLimit);
  c.deltaDistance =
    c.a.all.meanPairwiseCosineDistance - c.b.all.meanPairwiseCosineDistance;
  c.deltaNearestNeighbor = c.a.all.meanNearestNeighborSimilarity -
                           c.b.all.meanNearestNeighborSimilarity;
  if (c.a.users && c.b.users) {
    c.deltaUserDistance = c.a.users->meanPairwiseCosineDistance -
                          c.b.users->meanPairwiseCosineDistance;
  }
  if (c.a.items && c.b.items) {
    c.deltaItemDistance = c.a.items->meanPairwiseCosineDistance -
                          c.b.items->meanPairwiseCosineDistance;
  }
  c.verdict = c.deltaDistance > 0   ? "a more dispersed"
              : c.deltaDistance < 0 ? "b more dispersed"
                                    : "equal";
  return c;
}

std::string dispersionJson(const DispersionReport& report) {
  return toJson(report).dump(2) + "\n";
}

std::string comparisonJson(const VariantComparison& c) {
  nlohmann::json j;
  j["a"] = toJson(c.a);
  j["b"] = toJson(c.b);
  j["delta_mean_pairwise_cosine_distance"] = c.deltaDistance;
  j["delta_mean_nearest_neighbor_similarity"] = c.deltaNearestNeighbor;
  j["delta_user_distance"] = c.deltaUserDistance;
  j["delta_item_distance"] = c.deltaItemDistance;
  j["verdict"] = c.verdict;
  return j.dump(2) + "\n";
}

Matrix selectEmbeddings(const ForwardTrace& trace,
                        const ModelParameters& params,
                        const std::string& selector) {
  if (selector == "fused") {
    Matrix out(trace.fused.users.rows() + trace.fused.items.rows(),
               trace.fused.users.cols());
    out.topRows(trace.fused.users.rows()) = trace.fused.users;
    out.bottomRows(trace.fused.items.rows()) = trace.fused.items;
    return out;
  }
  const auto colon = selector.find(':');
  if (colon == std::string::npos) {
    throw Error("bad embedding selector '" + selector +
                "' (fused | ego:v | neighbor:t | modal_final:v ...)");
  }
  const std::string kind = selector.substr(0, colon);
  const Modality modality = parseModality(selector.substr(colon + 1));
  const auto it =
    std::find(params.modalities.begin(), params.modalities.end(), modality);
  if (it == params.modalities.end()) {
    throw Error("model has no " + std::string(modalityName(modality)) +
                " modality");
  }
  const auto m = static_cast<size_t>(it - params.modalities.begin());
  if (kind == "ego") {
    return trace.ego(m);
  }
  if (kind == "neighbor") {
    if (trace.neighbor.size() <= m) {
      throw Error("no neighbor embeddings: the model has L = 0");
    }
    return trace.neighbor[m];
  }
  if (kind == "modal_final") {
    return trace.modalFinal.at(m);
  }
  throw Error("bad embedding selector kind '" + kind + "'");
}

std::filesystem::path exportEmbeddings(const ForwardTrace& trace,
                                       const ModelParameters& params,
                                       const InteractionDataset& dataset,
                                       const std::string& selector,
                                       const std::filesystem::path& dir) {
  const Matrix m = selectEmbeddings(trace, params, selector);
  std::string name = selector;
  std::replace(name.begin(), name.end(), ':', '_');
  const auto path = dir / (name + ".mmft");
  std::vector<std::string> tokens;
  tokens.reserve(dataset.numUsers + dataset.numItems);
  for (const auto& t : dataset.users.tokens()) tokens.push_back("u:" + t);
  for (const auto& t : dataset.items.tokens()) tokens.push_back("i:" + t);
  io::writeMatrix(path, m);
  io::writeTokens(io::tokenSidecar(path), tokens);
  return path;
}

}  // namespace mgrec
