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

#include <mgrec/dataset.hpp>

#include <mgrec/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace mgrec {

namespace {

std::vector<std::string_view> splitTabs(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

bool isNumber(std::string_view s) {
  if (s.empty()) {
    return false;
  }
  double value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::optional<int64_t> parseTimestamp(std::string_view s) {
  int64_t value = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec == std::errc() && res.ptr == s.data() + s.size()) {
    return value;
  }
  // Some dumps store seconds as a float.
  if (isNumber(s)) {
    double d = 0;
    std::from_chars(s.data(), s.data() + s.size(), d);
    return static_cast<int64_t>(d);
  }
  return std::nullopt;
}

bool earlier(const std::optional<int64_t>& a, const std::optional<int64_t>& b) {
  if (!a) {
    return false;
  }
  return !b || *a < *b;
}

std::string lineError(const std::string& source, size_t lineNo,
                      const std::string& what) {
  return source + ":" + std::to_string(lineNo) + ": " + what;
}

}  // namespace

RawInteractions parseInteractions(std::istream& in, const std::string& source) {
  RawInteractions raw;
  std::map<std::pair<std::string, std::string>, size_t> seen;
  std::string line;
  size_t lineNo = 0;
  bool firstContentLine = true;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = splitTabs(line);
    if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
      throw Error(lineError(source, lineNo,
                            "malformed line: expected user<TAB>item"));
    }
    if (firstContentLine) {
      firstContentLine = false;
      const bool header = std::any_of(
        fields.begin() + 2, fields.end(),
        [](std::string_view f) { return !isNumber(f); });
      if (header) {
        continue;
      }
    }
    Interaction rec{std::string(fields[0]), std::string(fields[1]),
                    std::nullopt};
    if (fields.size() >= 3 && !isNumber(fields[2])) {
      throw Error(lineError(source, lineNo, "malformed rating field"));
    }
    if (fields.size() >= 4) {
      rec.timestamp = parseTimestamp(fields[3]);
      if (!rec.timestamp) {
        throw Error(lineError(source, lineNo, "malformed timestamp field"));
      }
    }
    auto key = std::make_pair(rec.user, rec.item);
    auto it = seen.find(key);
    if (it != seen.end()) {
      ++raw.duplicatesCollapsed;
      auto& kept = raw.records[it->second];
      if (earlier(rec.timestamp, kept.timestamp)) {
        kept.timestamp = rec.timestamp;
      }
      continue;
    }
    seen.emplace(std::move(key), raw.records.size());
    raw.records.push_back(std::move(rec));
  }
  if (raw.records.empty()) {
    throw Error(source + ": zero records");
  }
  return raw;
}

RawInteractions loadInteractions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open interactions file: " + path.string());
  }
  return parseInteractions(in, path.string());
}

RawInteractions kcoreFilter(const RawInteractions& raw, size_t k) {
  if (k == 0) {
    throw Error("k-core: k must be >= 1");
  }
  std::unordered_map<std::string, size_t> userDeg;
  std::unordered_map<std::string, size_t> itemDeg;
  for (const auto& r : raw.records) {
    ++userDeg[r.user];
    ++itemDeg[r.item];
  }
  std::vector<bool> alive(raw.records.size(), true);
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < raw.records.size(); ++i) {
      if (!alive[i]) {
        continue;
      }
      const auto& r = raw.records[i];
      if (userDeg[r.user] < k || itemDeg[r.item] < k) {
        alive[i] = false;
        --userDeg[r.user];
        --itemDeg[r.item];
        changed = true;
      }
    }
  }
  RawInteractions out;
  out.duplicatesCollapsed = raw.duplicatesCollapsed;
  for (size_t i = 0; i < raw.records.size(); ++i) {
    if (alive[i]) {
      out.records.push_back(raw.records[i]);
    }
  }
  if (out.records.empty()) {
    throw Error("dataset vanishes under " + std::to_string(k) + "-core");
  }
  return out;
}

IdMap::IdMap(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<uint32_t>(i)).second) {
      throw Error("duplicate token in id map: " + tokens_[i]);
    }
  }
}

std::optional<uint32_t> IdMap::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

uint32_t IdMap::at(const std::string& token) const {
  auto idx = find(token);
  if (!idx) {
    throw Error("unknown token: " + token);
  }
  return *idx;
}

size_t InteractionDataset::trainSize() const {
  size_t n = 0;
  for (const auto& items : train) {
    n += items.size();
  }
  return n;
}

size_t InteractionDataset::numInteractions() const {
  size_t n = 0;
  for (size_t u = 0; u < numUsers; ++u) {
    n += train[u].size() + val[u].size() + test[u].size();
  }
  return n;
}

double InteractionDataset::sparsity() const {
  return 1.0 - static_cast<double>(numInteractions()) /
                 (static_cast<double>(numUsers) * static_cast<double>(numItems));
}

void InteractionDataset::validate() const {
  if (train.size() != numUsers || val.size() != numUsers ||
      test.size() != numUsers) {
    throw Error("dataset: split vectors do not match user count");
  }
  if (users.size() != numUsers || items.size() != numItems) {
    throw Error("dataset: id maps do not match counts");
  }
  for (size_t u = 0; u < numUsers; ++u) {
    if (train[u].empty()) {
      throw Error("dataset: user " + users.token(u) + " has no train items");
    }
    std::vector<uint32_t> all;
    for (const auto* part : {&train[u], &val[u], &test[u]}) {
      if (!std::is_sorted(part->begin(), part->end())) {
        throw Error("dataset: unsorted item list for user " + users.token(u));
      }
      for (uint32_t i : *part) {
        if (i >= numItems) {
          throw Error("dataset: item index out of range");
        }
      }
      all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
      throw Error("dataset: splits overlap for user " + users.token(u));
    }
  }
}

SplitCounts splitCounts(size_t n, const SplitRatios& ratios) {
  SplitCounts c;
  c.test = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.test));
  c.val = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios.val));
  if (c.test == 0 && n >= 2 && ratios.test > 0) {
    c.test = 1;
  }
  while (c.test + c.val >= n && c.val > 0) {
    --c.val;
  }
  while (c.test + c.val >= n && c.test > 0) {
    --c.test;
  }
  c.train = n - c.test - c.val;
  return c;
}

InteractionDataset split(const RawInteractions& raw, const SplitRatios& ratios,
                         uint64_t seed) {
  if (ratios.train <= 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw Error("split ratios must be nonnegative, train > 0, summing to 1");
  }
  std::vector<std::string> userTokens;
  std::vector<std::string> itemTokens;
  for (const auto& r : raw.records) {
    userTokens.push_back(r.user);
    itemTokens.push_back(r.item);
  }
  for (auto* v : {&userTokens, &itemTokens}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  InteractionDataset ds;
  ds.users = IdMap(std::move(userTokens));
  ds.items = IdMap(std::move(itemTokens));
  ds.numUsers = ds.users.size();
  ds.numItems = ds.items.size();

  UserItemLists byUser(ds.numUsers);
  for (const auto& r : raw.records) {
    byUser[ds.users.at(r.user)].push_back(ds.items.at(r.item));
  }
  ds.train.resize(ds.numUsers);
  ds.val.resize(ds.numUsers);
  ds.test.resize(ds.numUsers);

  std::mt19937_64 rng(seed);
  for (size_t u = 0; u < ds.numUsers; ++u) {
    auto& items = byUser[u];
    std::sort(items.begin(), items.end());
    std::shuffle(items.begin(), items.end(), rng);
    const SplitCounts c = splitCounts(items.size(), ratios);
    if (items.size() < 3) {
      ds.warnings.push_back("user " + ds.users.token(u) + " has only " +
                            std::to_string(items.size()) +
                            " interactions; val/test may be empty");
    }
    auto first = items.begin();
    ds.test[u].assign(first, first + c.test);
    ds.val[u].assign(first + c.test, first + c.test + c.val);
    ds.train[u].assign(first + c.test + c.val, items.end());
  }

  // An item whose interactions all landed in val/test would be isolated in
  // the train graph. Swap one of them with a train item of the same user that
  // keeps a train degree >= 1 afterwards.
  std::vector<size_t> itemDeg(ds.numItems, 0);
  for (const auto& items : ds.train) {
    for (uint32_t i : items) ++itemDeg[i];
  }
  size_t repaired = 0;
  for (uint32_t item = 0; item < ds.numItems; ++item) {
    for (size_t u = 0; u < ds.numUsers && itemDeg[item] == 0; ++u) {
      for (auto* held : {&ds.val[u], &ds.test[u]}) {
        auto slot = std::find(held->begin(), held->end(), item);
        if (slot == held->end()) continue;
        auto donor = std::find_if(ds.train[u].begin(), ds.train[u].end(),
                                  [&](uint32_t j) { return itemDeg[j] >= 2; });
        if (donor == ds.train[u].end()) continue;
        --itemDeg[*donor];
        ++itemDeg[item];
        std::swap(*slot, *donor);
        ++repaired;
        break;
      }
    }
  }
  if (repaired > 0) {
    ds.warnings.push_back(std::to_string(repaired) +
                          " held-out interactions swapped into train so that "
                          "every item keeps a train interaction");
  }
  for (size_t u = 0; u < ds.numUsers; ++u) {
    for (auto* part : {&ds.train[u], &ds.val[u], &ds.test[u]}) {
      std::sort(part->begin(), part->end());
    }
  }
  ds.validate();
  return ds;
}

ModalityFeatures alignFeatures(const Matrix& matrix,
                               const std::vector<std::string>& rowTokens,
                               Modality modality,
                               const InteractionDataset& dataset) {
  if (static_cast<size_t>(matrix.rows()) != rowTokens.size()) {
    throw Error("feature row-count mismatch: matrix has " +
                std::to_string(matrix.rows()) + " rows but sidecar lists " +
                std::to_string(rowTokens.size()) + " tokens");
  }
  if (rowTokens.size() < dataset.numItems) {
    throw Error("feature row-count mismatch: " +
                std::to_string(rowTokens.size()) + " rows for " +
                std::to_string(dataset.numItems) + " items");
  }
  std::unordered_map<std::string, size_t> rowOf;
  for (size_t r = 0; r < rowTokens.size(); ++r) {
    if (!rowOf.emplace(rowTokens[r], r).second) {
      throw Error("feature sidecar repeats token " + rowTokens[r]);
    }
  }
  ModalityFeatures out;
  out.modality = modality;
  out.matrix.resize(static_cast<Eigen::Index>(dataset.numItems), matrix.cols());
  for (size_t i = 0; i < dataset.numItems; ++i) {
    auto it = rowOf.find(dataset.items.token(i));
    if (it == rowOf.end()) {
      throw Error("feature file has no row for item " + dataset.items.token(i));
    }
    const auto src = matrix.row(static_cast<Eigen::Index>(it->second));
    if (!src.allFinite()) {
      throw Error("non-finite feature value in row " +
                  std::to_string(it->second) + " (item " +
                  dataset.items.token(i) + ")");
    }
    if ((src.array() == 0.0).all()) {
      throw Error("all-zero feature row " + std::to_string(it->second) +
                  " (item " + dataset.items.token(i) + ")");
    }
    out.matrix.row(static_cast<Eigen::Index>(i)) = src;
  }
  return out;
}

ModalityFeatures loadFeatures(const std::filesystem::path& path,
                              Modality modality,
                              const InteractionDataset& dataset) {
  return alignFeatures(io::readMatrix(path),
                       io::readTokens(io::tokenSidecar(path)), modality,
                       dataset);
}

namespace {

std::string pairsTsv(const UserItemLists& lists) {
  std::string out;
  for (size_t u = 0; u < lists.size(); ++u) {
    for (uint32_t i : lists[u]) {
      out += std::to_string(u);
      out += '\t';
      out += std::to_string(i);
      out += '\n';
    }
  }
  return out;
}

UserItemLists readPairs(const std::filesystem::path& path, size_t numUsers,
                        size_t numItems) {
  UserItemLists lists(numUsers);
  std::istringstream in(io::readFile(path));
  std::string line;
  size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (line.empty()) {
      continue;
    }
    const auto fields = splitTabs(line);
    unsigned long u = 0;
    unsigned long i = 0;
    if (fields.size() != 2 ||
        std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(),
                        u).ec != std::errc() ||
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(),
                        i).ec != std::errc() ||
        u >= numUsers || i >= numItems) {
      throw Error(lineError(path.string(), lineNo, "bad index pair"));
    }
    lists[u].push_back(static_cast<uint32_t>(i));
  }
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
  }
  return lists;
}

}  // namespace

void writeSplitManifest(const InteractionDataset& dataset,
                        const std::filesystem::path& dir) {
  io::writeFileAtomic(dir / "train.tsv", pairsTsv(dataset.train));
  io::writeFileAtomic(dir / "val.tsv", pairsTsv(dataset.val));
  io::writeFileAtomic(dir / "test.tsv", pairsTsv(dataset.test));
  std::string ids;
  for (size_t u = 0; u < dataset.numUsers; ++u) {
    ids += nlohmann::json{{"kind", "user"}, {"index", u},
                          {"token", dataset.users.token(u)}}.dump();
    ids += '\n';
  }
  for (size_t i = 0; i < dataset.numItems; ++i) {
    ids += nlohmann::json{{"kind", "item"}, {"index", i},
                          {"token", dataset.items.token(i)}}.dump();
    ids += '\n';
  }
  io::writeFileAtomic(dir / "id_map.jsonl", ids);
}

InteractionDataset readSplitManifest(const std::filesystem::path& dir) {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::istringstream in(io::readFile(dir / "id_map.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto j = nlohmann::json::parse(line);
    auto& target = j.at("kind") == "user" ? users : items;
    const auto index = j.at("index").get<size_t>();
    if (index != target.size()) {
      throw Error("id_map.jsonl: indices must be dense and ordered");
    }
    target.push_back(j.at("token").get<std::string>());
  }
  InteractionDataset ds;
  ds.users = IdMap(std::move(users));
  ds.items = IdMap(std::move(items));
  ds.numUsers = ds.users.size();
  ds.numItems = ds.items.size();
  ds.train = readPairs(dir / "train.tsv", ds.numUsers, ds.numItems);
  ds.val = readPairs(dir / "val.tsv", ds.numUsers, ds.numItems);
  ds.test = readPairs(dir / "test.tsv", ds.numUsers, ds.numItems);
  ds.validate();
  return ds;
}

}  // namespace mgrec
