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

#include <mgrec/synthetic.hpp>

#include <mgrec/io.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace mgrec {

namespace {

std::string padded(char prefix, size_t i) {
  std::string digits = std::to_string(i);
  return std::string(1, prefix) + std::string(4 - std::min<size_t>(4, digits.size()), '0') + digits;
}

}  // namespace

SyntheticSpec plantedPreferenceSpec(uint64_t seed) {
  SyntheticSpec s;
  s.perUser = 7;
  s.crossLinks = 3;
  s.seed = seed;
  return s;
}

SyntheticSpec clusteredSpec(uint64_t seed) {
  SyntheticSpec s;
  s.numUsers = 120;
  s.numItems = 60;
  s.clusters = 4;
  s.perUser = 8;
  s.crossLinks = 2;
  s.featureNoise = 0.5;
  s.seed = seed;
  return s;
}

SyntheticData makeSynthetic(const SyntheticSpec& spec) {
  if (spec.clusters == 0 || spec.numItems < spec.clusters ||
      spec.numUsers < spec.clusters) {
    throw Error("synthetic: need at least one user and item per cluster");
  }
  std::mt19937_64 rng(spec.seed);
  SyntheticData d;
  std::vector<std::vector<size_t>> members(spec.clusters);
  for (size_t i = 0; i < spec.numItems; ++i) {
    d.itemCluster.push_back(i % spec.clusters);
    members[i % spec.clusters].push_back(i);
    d.itemTokens.push_back(padded('i', i));
  }
  for (const auto& group : members) {
    if (group.size() < spec.perUser) {
      throw Error("synthetic: clusters too small for per_user interactions");
    }
  }

  std::uniform_int_distribution<size_t> anyItem(0, spec.numItems - 1);
  for (size_t u = 0; u < spec.numUsers; ++u) {
    const size_t c = u % spec.clusters;
    d.userCluster.push_back(c);
    std::vector<size_t> pool = members[c];
    std::shuffle(pool.begin(), pool.end(), rng);
    std::set<size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.perUser));
    size_t cross = 0;
    while (cross < spec.crossLinks) {
      const size_t i = anyItem(rng);
      if (d.itemCluster[i] != c && chosen.insert(i).second) {
        ++cross;
      }
    }
    int64_t ts = 0;
    for (size_t i : chosen) {
      d.raw.records.push_back({padded('u', u), d.itemTokens[i], ts++});
    }
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t dim : {spec.visualDim, spec.textualDim}) {
    Matrix centroids(spec.clusters, dim);
    for (Eigen::Index r = 0; r < centroids.rows(); ++r) {
      for (Eigen::Index c = 0; c < centroids.cols(); ++c) {
        centroids(r, c) = gauss(rng);
      }
    }
    Matrix f(spec.numItems, dim);
    for (size_t i = 0; i < spec.numItems; ++i) {
      for (size_t c = 0; c < dim; ++c) {
        f(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          centroids(static_cast<Eigen::Index>(d.itemCluster[i]),
                    static_cast<Eigen::Index>(c)) +
          spec.featureNoise * gauss(rng);
      }
    }
    d.features.push_back(std::move(f));
  }
  return d;
}

SyntheticFixture materialize(const SyntheticData& data, uint64_t splitSeed) {
  SyntheticFixture fx;
  fx.dataset = split(data.raw, SplitRatios{}, splitSeed);
  fx.features.push_back(
    alignFeatures(data.features[0], data.itemTokens, Modality::Visual, fx.dataset));
  fx.features.push_back(
    alignFeatures(data.features[1], data.itemTokens, Modality::Textual, fx.dataset));
  return fx;
}

void writeSynthetic(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string tsv = "user\titem\trating\ttimestamp\n";
  for (const auto& r : data.raw.records) {
    tsv += r.user + "\t" + r.item + "\t1\t" + std::to_string(r.timestamp.value_or(0)) + "\n";
  }
  io::writeFileAtomic(dir / "interactions.tsv", tsv);
  const char* names[] = {"visual.mmft", "textual.mmft"};
  for (size_t m = 0; m < 2; ++m) {
    io::writeMatrix(dir / names[m], data.features[m]);
    io::writeTokens(io::tokenSidecar(dir / names[m]), data.itemTokens);
  }
}

}  // namespace mgrec
