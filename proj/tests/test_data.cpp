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

#include <mgrec/config.hpp>
#include <mgrec/dataset.hpp>
#include <mgrec/io.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

namespace mgrec {
namespace {

namespace fs = std::filesystem;

fs::path scratchDir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mgrec_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Io, MatrixRoundTripFloat64IsBitwise) {
  std::mt19937_64 rng(3);
  const Matrix m = oracle::randomMatrix(7, 5, rng);
  const Matrix back = io::decodeMatrix(io::encodeMatrix(m, io::DType::Float64), "mem");
  EXPECT_EQ(0, std::memcmp(m.data(), back.data(), sizeof(double) * 35));
}

TEST(Io, MatrixRoundTripFloat32RoundsOnce) {
  std::mt19937_64 rng(4);
  const Matrix m = oracle::randomMatrix(4, 3, rng);
  const Matrix back = io::decodeMatrix(io::encodeMatrix(m), "mem");
  for (Eigen::Index r = 0; r < 4; ++r)
    for (Eigen::Index c = 0; c < 3; ++c)
      EXPECT_EQ(back(r, c), static_cast<double>(static_cast<float>(m(r, c))));
}

TEST(Io, RejectsBadMagicAndTruncation) {
  std::string bytes = io::encodeMatrix(Matrix::Ones(2, 2));
  EXPECT_THROW(io::decodeMatrix(bytes.substr(0, bytes.size() - 1), "x"), Error);
  bytes[0] = 'X';
  EXPECT_THROW(io::decodeMatrix(bytes, "x"), Error);
}

TEST(Io, ContentHashMatchesGitBlobHash) {
  // `printf 'hello\n' | git hash-object --stdin`
  EXPECT_EQ(io::contentHash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(io::contentHash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST(Io, AtomicWriteReplacesContent) {
  const fs::path dir = scratchDir("atomic");
  io::writeFileAtomic(dir / "f.txt", "one");
  io::writeFileAtomic(dir / "f.txt", "two");
  EXPECT_EQ(io::readFile(dir / "f.txt"), "two");
  size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(Dataset, ParsesHeaderRatingsAndCollapsesDuplicates) {
  std::istringstream in(
    "user\titem\trating\ttimestamp\n"
    "a\tx\t5\t30\n"
    "a\tx\t4\t10\n"
    "b\ty\t3\t20\n");
  const RawInteractions raw = parseInteractions(in, "mem");
  ASSERT_EQ(raw.records.size(), 2u);
  EXPECT_EQ(raw.duplicatesCollapsed, 1u);
  EXPECT_EQ(raw.records[0].timestamp.value(), 10);
}

TEST(Dataset, MalformedLineNamesLineNumber) {
  std::istringstream in("a\tx\nbroken\n");
  try {
    parseInteractions(in, "f.tsv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
  std::istringstream empty("");
  EXPECT_THROW(parseInteractions(empty, "e.tsv"), Error);
}

TEST(Dataset, KcoreMatchesBruteForcePeeling) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution edge(0.25);
    RawInteractions raw;
    std::set<std::pair<std::string, std::string>> edges;
    for (int u = 0; u < 30; ++u)
      for (int i = 0; i < 25; ++i)
        if (edge(rng)) {
          raw.records.push_back({"u" + std::to_string(u), "i" + std::to_string(i), {}});
          edges.insert({"u" + std::to_string(u), "i" + std::to_string(i)});
        }
    const size_t k = 3 + seed % 4;
    const auto expected = oracle::bruteKcore(edges, k);
    if (expected.empty()) {
      EXPECT_THROW(kcoreFilter(raw, k), Error);
      continue;
    }
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& r : kcoreFilter(raw, k).records) got.insert({r.user, r.item});
    EXPECT_EQ(got, expected) << "seed " << seed;
  }
}

TEST(Dataset, KcoreIsIdempotentAndRejectsZero) {
  RawInteractions raw;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 6; ++i)
      raw.records.push_back({"u" + std::to_string(u), "i" + std::to_string(i), {}});
  const auto once = kcoreFilter(raw, 5);
  EXPECT_EQ(kcoreFilter(once, 5).records.size(), once.records.size());
  EXPECT_THROW(kcoreFilter(raw, 0), Error);
}

TEST(Dataset, SplitCountsFollowFloorWithTestPriority) {
  auto c = splitCounts(10, {});
  EXPECT_EQ(c.train, 8u);
  EXPECT_EQ(c.val, 1u);
  EXPECT_EQ(c.test, 1u);
  c = splitCounts(5, {});
  EXPECT_EQ(c.train, 4u);
  EXPECT_EQ(c.val, 0u);
  EXPECT_EQ(c.test, 1u);
  c = splitCounts(1, {});
  EXPECT_EQ(c.train, 1u);
  EXPECT_EQ(c.test, 0u);
  for (size_t n = 1; n < 200; ++n) {
    c = splitCounts(n, {});
    EXPECT_EQ(c.train + c.val + c.test, n);
    EXPECT_GE(c.train, 1u);
  }
}

RawInteractions denseRaw(size_t users, size_t items, std::mt19937_64& rng,
                         double density) {
  std::bernoulli_distribution edge(density);
  RawInteractions raw;
  for (size_t u = 0; u < users; ++u)
    for (size_t i = 0; i < items; ++i)
      if (edge(rng) || i == u % items)
        raw.records.push_back({"u" + std::to_string(u), "i" + std::to_string(i), {}});
  return raw;
}

TEST(Dataset, SplitPartitionsEachUserAndIsSeedDeterministic) {
  std::mt19937_64 rng(11);
  const RawInteractions raw = denseRaw(40, 30, rng, 0.4);
  const InteractionDataset a = split(raw, {}, 5);
  const InteractionDataset b = split(raw, {}, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  size_t total = 0;
  for (size_t u = 0; u < a.numUsers; ++u) {
    total += a.train[u].size() + a.val[u].size() + a.test[u].size();
  }
  EXPECT_EQ(total, raw.records.size());
  EXPECT_NO_THROW(a.validate());
  const InteractionDataset c = split(raw, {}, 6);
  EXPECT_NE(a.test, c.test);
}

TEST(Dataset, SplitKeepsEveryItemInTrain) {
  // Item "z" is seen by a single user, so a plain random split often holds
  // it out entirely.
  for (uint64_t seed = 0; seed < 30; ++seed) {
    RawInteractions raw;
    for (const char* u : {"a", "b"})
      for (int i = 0; i < 10; ++i) raw.records.push_back({u, "i" + std::to_string(i), {}});
    raw.records.push_back({"a", "z", {}});
    const InteractionDataset ds = split(raw, {}, seed);
    std::vector<size_t> deg(ds.numItems, 0);
    for (const auto& items : ds.train)
      for (uint32_t i : items) ++deg[i];
    EXPECT_EQ(std::count(deg.begin(), deg.end(), 0u), 0) << "seed " << seed;
  }
}

TEST(Dataset, SplitIdsAreLexicographic) {
  RawInteractions raw;
  for (const char* u : {"zed", "amy", "kim"})
    for (const char* i : {"q", "b", "m"}) raw.records.push_back({u, i, {}});
  const InteractionDataset ds = split(raw, {}, 1);
  EXPECT_EQ(ds.users.token(0), "amy");
  EXPECT_EQ(ds.users.token(2), "zed");
  EXPECT_EQ(ds.items.token(0), "b");
}

TEST(Dataset, FeatureAlignmentReordersAndValidates) {
  RawInteractions raw;
  for (const char* u : {"u1", "u2"})
    for (const char* i : {"a", "b"}) raw.records.push_back({u, i, {}});
  const InteractionDataset ds = split(raw, {}, 1);
  Matrix f(3, 2);
  f << 1, 2, 3, 4, 5, 6;
  const auto aligned = alignFeatures(f, {"extra", "b", "a"}, Modality::Visual, ds);
  EXPECT_EQ(aligned.matrix(0, 0), 5);  // item "a"
  EXPECT_EQ(aligned.matrix(1, 0), 3);  // item "b"
  EXPECT_THROW(alignFeatures(f, {"x", "y", "a"}, Modality::Visual, ds), Error);
  Matrix bad = f;
  bad(1, 1) = std::nan("");
  try {
    alignFeatures(bad, {"extra", "b", "a"}, Modality::Visual, ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
  Matrix zero = f;
  zero.row(2).setZero();
  EXPECT_THROW(alignFeatures(zero, {"extra", "b", "a"}, Modality::Visual, ds), Error);
  EXPECT_THROW(alignFeatures(f, {"b", "a"}, Modality::Visual, ds), Error);
}

TEST(Dataset, SplitManifestRoundTrip) {
  std::mt19937_64 rng(2);
  const InteractionDataset ds = split(denseRaw(12, 9, rng, 0.5), {}, 3);
  const fs::path dir = scratchDir("manifest");
  writeSplitManifest(ds, dir);
  const InteractionDataset back = readSplitManifest(dir);
  EXPECT_EQ(back.train, ds.train);
  EXPECT_EQ(back.val, ds.val);
  EXPECT_EQ(back.test, ds.test);
  EXPECT_EQ(back.users.tokens(), ds.users.tokens());
  EXPECT_EQ(back.items.tokens(), ds.items.tokens());
}

TEST(Config, PrecedenceIsDefaultsThenFileThenFlags) {
  const ConfigMap file = parseConfigText("lr = 0.01\n# comment\nk = 7\n", "f");
  const TrainConfig c = resolveConfig(file, {{"lr", "0.5"}, {"lambda-c", "0"}});
  EXPECT_EQ(c.lr, 0.5);
  EXPECT_EQ(c.k, 7u);
  EXPECT_EQ(c.lambda_c, 0.0);
  EXPECT_EQ(c.d, 64u);
}

TEST(Config, ListsEveryOffendingKey) {
  try {
    resolveConfig({{"lr", "abc"}, {"bogus", "1"}}, {{"tau", "-1"}});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string all = e.what();
    EXPECT_NE(all.find("lr"), std::string::npos) << all;
    EXPECT_NE(all.find("bogus"), std::string::npos) << all;
    EXPECT_NE(all.find("tau"), std::string::npos) << all;
    EXPECT_GE(e.problems().size(), 3u);
  }
}

TEST(Config, MapRoundTrip) {
  TrainConfig c;
  c.lr = 0.123456789;
  c.cl_pool = PoolMode::Full;
  c.L = 2;
  ConfigMap entries;
  for (const auto& [k, v] : c.toMap()) entries.emplace_back(k, v);
  const TrainConfig back = resolveConfig(entries, {});
  EXPECT_EQ(back.toMap(), c.toMap());
  EXPECT_EQ(back.lr, c.lr);
}

}  // namespace
}  // namespace mgrec
