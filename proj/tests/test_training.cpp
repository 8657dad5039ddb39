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

#include <mgrec/cli.hpp>
#include <mgrec/diagnostics.hpp>
#include <mgrec/io.hpp>
#include <mgrec/synthetic.hpp>
#include <mgrec/trainer.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
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

TrainConfig smallConfig() {
  TrainConfig c;
  c.d = 8;
  c.L = 2;
  c.k = 3;
  c.lr = 1e-2;
  c.batch_size = 64;
  c.max_epochs = 15;
  c.patience = 5;
  c.seed = 3;
  return c;
}

TEST(Trainer, XavierBoundsAndDeterminism) {
  ModelParameters a = makeParameters(std::vector<Modality>{Modality::Visual}, 30, 20, 10);
  ModelParameters b = a;
  xavierInit(a, 5);
  xavierInit(b, 5);
  EXPECT_EQ(a.userEmbed[0], b.userEmbed[0]);
  const double bound = std::sqrt(6.0 / 40.0);
  EXPECT_LE(a.userEmbed[0].cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(a.userEmbed[0].cwiseAbs().maxCoeff(), 0.8 * bound);
  EXPECT_EQ(a.alpha[0], 0.5);
  EXPECT_EQ(a.beta[0], 0.5);
}

TEST(Trainer, AdamMinimizesQuadraticAndFirstStepIsLr) {
  ModelParameters p = makeParameters(std::vector<Modality>{Modality::Visual}, 2, 2, 2);
  xavierInit(p, 1);
  const ModelParameters start = p;
  AdamState state = AdamState::forParameters(p);
  auto gradient = [](ModelParameters& q) {
    GradientSet g = q.zerosLike();
    auto qt = q.tensors();
    auto gt = g.tensors();
    for (size_t t = 0; t < qt.size(); ++t)
      for (size_t i = 0; i < qt[t].size; ++i) gt[t].data[i] = 2 * qt[t].data[i];
    return g;
  };
  GradientSet g = gradient(p);
  adamStep(p, g, state, 0.01);
  ModelParameters s = start;
  auto pt = p.tensors();
  auto st = s.tensors();
  for (size_t t = 0; t < pt.size(); ++t)
    for (size_t i = 0; i < pt[t].size; ++i)
      EXPECT_NEAR(std::abs(pt[t].data[i] - st[t].data[i]), 0.01, 1e-6);
  for (int step = 0; step < 3000; ++step) {
    GradientSet gi = gradient(p);
    adamStep(p, gi, state, 0.01);
  }
  for (const auto& t : p.tensors())
    for (size_t i = 0; i < t.size; ++i) EXPECT_NEAR(t.data[i], 0.0, 1e-2);
}

TEST(Trainer, AdamRejectsNonFiniteGradient) {
  ModelParameters p = makeParameters(std::vector<Modality>{Modality::Visual}, 2, 2, 2);
  xavierInit(p, 1);
  const ModelParameters before = p;
  AdamState state = AdamState::forParameters(p);
  GradientSet g = p.zerosLike();
  g.userEmbed[0](1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(adamStep(p, g, state, 0.1), NonFiniteGradient);
  EXPECT_EQ(p.userEmbed[0], before.userEmbed[0]);
}

TEST(Trainer, SamplerIsUniformAndNeverReturnsPositives) {
  std::mt19937_64 rng(4);
  const InteractionDataset ds = oracle::randomDataset(12, 10, 0.3, rng);
  std::map<std::pair<uint32_t, uint32_t>, size_t> pairCount;
  std::map<uint32_t, size_t> negCount;  // user 0 only
  std::mt19937_64 srng(9);
  const TripletSampler sampler(ds);
  const size_t draws = 200000;
  for (const auto& t : sampler.sample(draws, srng).triplets) {
    ASSERT_TRUE(std::binary_search(ds.train[t.user].begin(), ds.train[t.user].end(), t.pos));
    ASSERT_FALSE(std::binary_search(ds.train[t.user].begin(), ds.train[t.user].end(), t.neg));
    ++pairCount[{t.user, t.pos}];
    if (t.user == 0) ++negCount[t.neg];
  }
  // Chi-square against uniform over train pairs; bound at mean + 5 sd.
  const double pairs = static_cast<double>(ds.trainSize());
  const double expected = draws / pairs;
  double chi = 0;
  for (size_t u = 0; u < ds.numUsers; ++u)
    for (uint32_t i : ds.train[u]) {
      const double o = static_cast<double>(pairCount[{static_cast<uint32_t>(u), i}]);
      chi += (o - expected) * (o - expected) / expected;
    }
  EXPECT_LT(chi, (pairs - 1) + 5 * std::sqrt(2 * (pairs - 1)));
  const double negatives = static_cast<double>(ds.numItems - ds.train[0].size());
  size_t user0 = 0;
  for (const auto& [i, c] : negCount) user0 += c;
  double chiNeg = 0;
  for (uint32_t i = 0; i < ds.numItems; ++i) {
    if (std::binary_search(ds.train[0].begin(), ds.train[0].end(), i)) continue;
    const double e = static_cast<double>(user0) / negatives;
    const double o = static_cast<double>(negCount[i]);
    chiNeg += (o - e) * (o - e) / e;
  }
  EXPECT_LT(chiNeg, (negatives - 1) + 5 * std::sqrt(2 * (negatives - 1)));
}

TEST(Trainer, SamplerSkipsUsersWithFullCatalog) {
  std::mt19937_64 rng(4);
  InteractionDataset ds = oracle::randomDataset(5, 6, 0.3, rng);
  ds.train[2] = {0, 1, 2, 3, 4, 5};
  const TripletSampler sampler(ds);
  EXPECT_EQ(sampler.skippedUsers(), IndexList{2});
  std::mt19937_64 srng(1);
  for (const auto& t : sampler.sample(2000, srng).triplets) EXPECT_NE(t.user, 2u);
}

SyntheticFixture smallFixture(uint64_t seed = 1) {
  return materialize(makeSynthetic(plantedPreferenceSpec(seed)), seed);
}

TEST(Trainer, FitIsBitwiseDeterministic) {
  const SyntheticFixture fx = smallFixture();
  const FitResult a = fit(fx.dataset, fx.features, smallConfig());
  const FitResult b = fit(fx.dataset, fx.features, smallConfig());
  EXPECT_EQ(a.best.userEmbed[1], b.best.userEmbed[1]);
  EXPECT_EQ(a.best.alpha, b.best.alpha);
  EXPECT_EQ(a.bestEpoch, b.bestEpoch);
  EXPECT_FALSE(a.history.empty());
  EXPECT_FALSE(a.diverged);
}

TEST(Trainer, PatienceZeroRunsOneEpoch) {
  const SyntheticFixture fx = smallFixture();
  TrainConfig c = smallConfig();
  c.patience = 0;
  const FitResult r = fit(fx.dataset, fx.features, c);
  EXPECT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.bestEpoch, 1u);
}

TEST(Trainer, BestCheckpointReproducesValidationRecall) {
  const SyntheticFixture fx = smallFixture(2);
  const TrainConfig c = smallConfig();
  const GraphContext ctx = buildContext(fx.dataset, fx.features, c.k, true);
  const FitResult r = fit(fx.dataset, ctx, fx.features, c);
  const fs::path dir = scratchDir("ckpt");
  writeCheckpoint({r.best, c, r.bestStep, r.bestEpoch, r.bestValRecall}, dir);
  const Checkpoint back = readCheckpoint(dir);
  EXPECT_EQ(back.params.userEmbed[0], r.best.userEmbed[0]);
  EXPECT_EQ(back.params.beta, r.best.beta);
  EXPECT_EQ(back.config.toMap(), c.toMap());
  const ForwardTrace t = forward(back.params, ctx, c.L);
  EXPECT_EQ(evaluate(t.fused, fx.dataset, Split::Validation, {20}).recall.at(20), r.bestValRecall);
}

TEST(Trainer, FitRejectsEmptyValidationAndBadConfig) {
  SyntheticFixture fx = smallFixture();
  TrainConfig c = smallConfig();
  c.tau = 0;
  EXPECT_THROW(fit(fx.dataset, fx.features, c), ConfigError);
  for (auto& v : fx.dataset.val) v.clear();
  EXPECT_THROW(fit(fx.dataset, fx.features, smallConfig()), Error);
}

TEST(Trainer, GridEnumerationAndSinglePointEqualsFit) {
  const TrainConfig base = smallConfig();
  GridSpec spec;
  spec.lambda = {1e-3, 1e-2};
  spec.tau = {0.1, 0.2, 0.5};
  const auto points = enumerateGrid(spec, base);
  ASSERT_EQ(points.size(), 6u);
  EXPECT_EQ(points[1].tau, 0.2);
  EXPECT_EQ(points[3].lambda, 1e-2);
  EXPECT_EQ(points[0].k, base.k);

  const SyntheticFixture fx = smallFixture();
  const GridResult one = gridSearch(fx.dataset, fx.features, base, GridSpec{}, 1);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_EQ(one.rows[0].bestValRecall, fit(fx.dataset, fx.features, base).bestValRecall);
  EXPECT_TRUE(one.rows[0].best);
}

TEST(Trainer, GridRanksByValidationRecall) {
  const SyntheticFixture fx = smallFixture();
  TrainConfig base = smallConfig();
  base.max_epochs = 4;
  GridSpec spec;
  spec.lambda_c = {0.0, 0.1};
  spec.k = {2, 4};
  const GridResult g = gridSearch(fx.dataset, fx.features, base, spec, 2);
  ASSERT_EQ(g.rows.size(), 4u);
  for (size_t i = 1; i < g.rows.size(); ++i)
    EXPECT_GE(g.rows[i - 1].bestValRecall, g.rows[i].bestValRecall);
  EXPECT_TRUE(g.rows[0].best);
  const GridResult again = gridSearch(fx.dataset, fx.features, base, spec, 1);
  for (size_t i = 0; i < 4; ++i) EXPECT_EQ(g.rows[i].bestValRecall, again.rows[i].bestValRecall);
}

TEST(Diagnostics, ClosedForms) {
  EXPECT_EQ(dispersion(Matrix::Ones(5, 3), 10, 1).meanPairwiseCosineDistance, 0.0);
  Matrix anti(2, 2);
  anti << 1, 0, -1, 0;
  EXPECT_NEAR(dispersion(anti, 1, 1).meanPairwiseCosineDistance, 2.0, 1e-15);
  EXPECT_THROW(dispersion(Matrix::Ones(1, 3), 10, 1), Error);
}

TEST(Diagnostics, ExactMatchesLoopAndIsScaleInvariant) {
  std::mt19937_64 rng(2);
  const Matrix m = oracle::randomMatrix(40, 6, rng);
  double sum = 0;
  for (size_t a = 0; a < 40; ++a)
    for (size_t b = a + 1; b < 40; ++b) sum += 1 - oracle::scalarCosine(m, a, b);
  const Dispersion d = dispersion(m, 100, 1);
  EXPECT_TRUE(d.exact);
  EXPECT_NEAR(d.meanPairwiseCosineDistance, sum / (40 * 39 / 2), 1e-12);
  EXPECT_NEAR(dispersion(3.5 * m, 100, 1).meanPairwiseCosineDistance, d.meanPairwiseCosineDistance, 1e-12);
}

TEST(Diagnostics, SampledEstimateWithinThreeStandardErrors) {
  std::mt19937_64 rng(3);
  const Matrix m = oracle::randomMatrix(100, 8, rng);
  const double exact = dispersion(m, 1, 1).meanPairwiseCosineDistance;
  double sq = 0, mean = 0;
  size_t n = 0;
  for (size_t a = 0; a < 100; ++a)
    for (size_t b = a + 1; b < 100; ++b) {
      const double v = 1 - oracle::scalarCosine(m, a, b);
      mean += v;
      sq += v * v;
      ++n;
    }
  mean /= n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const size_t samples = 5000;
  const Dispersion s = dispersion(m, samples, 42, 10);
  EXPECT_FALSE(s.exact);
  EXPECT_EQ(s.pairsUsed, samples);
  EXPECT_LT(std::abs(s.meanPairwiseCosineDistance - exact), 3 * sd / std::sqrt(double(samples)));
  EXPECT_EQ(dispersion(m, samples, 42, 10).meanPairwiseCosineDistance, s.meanPairwiseCosineDistance);
}

TEST(Diagnostics, CompareIsAntisymmetric) {
  std::mt19937_64 rng(4);
  const Matrix a = oracle::randomMatrix(30, 4, rng), b = oracle::randomMatrix(30, 4, rng);
  const VariantComparison ab = compareVariants(a, b, 10, 100, 1);
  const VariantComparison ba = compareVariants(b, a, 10, 100, 1);
  EXPECT_EQ(ab.deltaDistance, -ba.deltaDistance);
  EXPECT_EQ(ab.deltaNearestNeighbor, -ba.deltaNearestNeighbor);
  EXPECT_EQ(ab.deltaUserDistance, -ba.deltaUserDistance);
  const VariantComparison aa = compareVariants(a, a, 10, 100, 1);
  EXPECT_EQ(aa.deltaDistance, 0.0);
  EXPECT_EQ(aa.deltaItemDistance, 0.0);
  EXPECT_THROW(compareVariants(a, oracle::randomMatrix(30, 5, rng), 10, 100, 1), Error);
}

TEST(Diagnostics, ExportShapesAndRoundTrip) {
  const SyntheticFixture fx = smallFixture();
  TrainConfig c = smallConfig();
  const GraphContext ctx = buildContext(fx.dataset, fx.features, c.k, true);
  ModelParameters p = initParameters(fx.dataset, fx.features, c);
  const ForwardTrace t = forward(p, ctx, c.L);
  const fs::path dir = scratchDir("export");
  const size_t rows = fx.dataset.numUsers + fx.dataset.numItems;
  const fs::path fused = exportEmbeddings(t, p, fx.dataset, "fused", dir);
  const Matrix back = io::readMatrix(fused);
  EXPECT_EQ(back.rows(), static_cast<Eigen::Index>(rows));
  EXPECT_EQ(back.cols(), 16);
  const Matrix ego = io::readMatrix(exportEmbeddings(t, p, fx.dataset, "ego:v", dir));
  EXPECT_EQ(ego.cols(), 8);
  const auto tokens = io::readTokens(io::tokenSidecar(fused));
  EXPECT_EQ(tokens.size(), rows);
  EXPECT_EQ(tokens.front().rfind("u:", 0), 0u);
  EXPECT_EQ(tokens.back().rfind("i:", 0), 0u);
  const fs::path again = dir / "copy.mmft";
  io::writeMatrix(again, back);
  EXPECT_EQ(io::readFile(again), io::readFile(fused));
  EXPECT_THROW(selectEmbeddings(t, p, "bogus"), Error);
}

int runCli(std::vector<std::string> args, std::string* output = nullptr) {
  args.insert(args.begin(), "mgrec");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (output) *output = out.str() + err.str();
  return code;
}

TEST(Cli, EndToEndWorkflow) {
  const fs::path root = scratchDir("cli");
  const SyntheticData data = makeSynthetic(plantedPreferenceSpec(3));
  writeSynthetic(data, root / "raw");
  const std::string dataDir = (root / "data").string();
  std::string log;
  ASSERT_EQ(runCli({"prepare", "--interactions", (root / "raw/interactions.tsv").string(),
                    "--visual", (root / "raw/visual.mmft").string(), "--textual",
                    (root / "raw/textual.mmft").string(), "--kcore", "3", "--out-dir", dataDir},
                   &log), 0) << log;
  ASSERT_EQ(runCli({"build-graphs", "--data", dataDir, "--k", "3", "--tsv", "--out-dir",
                    (root / "graphs").string()}, &log), 0) << log;
  EXPECT_TRUE(fs::exists(root / "graphs/item_item_v.csrg"));
  EXPECT_TRUE(fs::exists(root / "graphs/item_item_t.tsv"));
  const SparseGraph g = readGraph(root / "graphs/user_item.csrg");
  EXPECT_EQ(g.rows, 50u);

  const std::vector<std::string> trainArgs{
    "train", "--data", dataDir, "--dim", "8", "--layers", "2", "--k", "3", "--lr", "0.01",
    "--batch-size", "64", "--max-epochs", "12", "--patience", "4", "--seed", "5"};
  auto withOut = [](std::vector<std::string> a, const fs::path& out) {
    a.push_back("--out-dir");
    a.push_back(out.string());
    return a;
  };
  ASSERT_EQ(runCli(withOut(trainArgs, root / "run1"), &log), 0) << log;
  ASSERT_EQ(runCli(withOut(trainArgs, root / "run2"), &log), 0) << log;
  for (const char* f : {"user_embed_v.mmft", "item_embed_t.mmft", "manifest.json"}) {
    EXPECT_EQ(io::readFile(root / "run1/checkpoint" / f), io::readFile(root / "run2/checkpoint" / f)) << f;
  }
  const auto manifest = nlohmann::json::parse(io::readFile(root / "run1/manifest.json"));
  EXPECT_EQ(manifest.at("seed").get<uint64_t>(), 5u);
  EXPECT_TRUE(manifest.at("inputs").contains("data/train.tsv"));

  ASSERT_EQ(runCli({"evaluate", "--data", dataDir, "--checkpoint", (root / "run1/checkpoint").string(),
                    "--split", "val", "--per-user", "--out-dir", (root / "eval").string()}, &log), 0) << log;
  const auto metrics = nlohmann::json::parse(io::readFile(root / "eval/metrics_val.json"));
  EXPECT_EQ(metrics.at("R@20").get<double>(), manifest.at("best_val_recall_20").get<double>());
  EXPECT_TRUE(fs::exists(root / "eval/per_user_val.csv"));

  ASSERT_EQ(runCli({"export", "--data", dataDir, "--checkpoint", (root / "run1/checkpoint").string(),
                    "--all", "--out-dir", (root / "export").string()}, &log), 0) << log;
  EXPECT_TRUE(fs::exists(root / "export/neighbor_t.mmft"));
  ASSERT_EQ(runCli({"diagnose", "--data", dataDir, "--checkpoint", (root / "run1/checkpoint").string(),
                    "--compare", (root / "run2/checkpoint").string(), "--out-dir",
                    (root / "diag").string()}, &log), 0) << log;
  const auto cmp = nlohmann::json::parse(io::readFile(root / "diag/comparison.json"));
  EXPECT_EQ(cmp.at("delta_mean_pairwise_cosine_distance").get<double>(), 0.0);
}

TEST(Cli, AblateEmitsLayerSweepAndNoContrastRow) {
  const fs::path root = scratchDir("cli_ablate");
  writeSynthetic(makeSynthetic(plantedPreferenceSpec(4)), root / "raw");
  std::string log;
  ASSERT_EQ(runCli({"prepare", "--interactions", (root / "raw/interactions.tsv").string(),
                    "--visual", (root / "raw/visual.mmft").string(), "--kcore", "3",
                    "--out-dir", (root / "data").string()}, &log), 0) << log;
  ASSERT_EQ(runCli({"ablate", "--data", (root / "data").string(), "--dim", "4", "--k", "3",
                    "--lr", "0.01", "--max-epochs", "3", "--batch-size", "128", "--out-dir",
                    (root / "ablate").string()}, &log), 0) << log;
  const auto rows = nlohmann::json::parse(io::readFile(root / "ablate/ablation.json"));
  ASSERT_EQ(rows.size(), 5u);
  for (size_t i = 0; i < 4; ++i) EXPECT_EQ(rows[i].at("L").get<size_t>(), i + 1);
  EXPECT_EQ(rows[4].at("lambda_c").get<double>(), 0.0);
}

TEST(Cli, RejectsUnknownVerbsAndBadOverrides) {
  std::string log;
  EXPECT_NE(runCli({"frobnicate"}, &log), 0);
  const fs::path root = scratchDir("cli_bad");
  {
    std::ofstream cfg(root / "bad.cfg");
    cfg << "lr = fast\nmystery = 1\n";
  }
  EXPECT_NE(runCli({"--config", (root / "bad.cfg").string(), "gradcheck", "--tau", "-2"}, &log), 0);
  EXPECT_EQ(runCli({"--config", (root / "bad.cfg").string(), "train", "--data", root.string(),
                    "--tau", "-2", "--out-dir", (root / "o").string()}, &log), 2);
  EXPECT_NE(log.find("lr"), std::string::npos) << log;
  EXPECT_NE(log.find("mystery"), std::string::npos) << log;
  EXPECT_NE(log.find("tau"), std::string::npos) << log;
}

TEST(Cli, GradcheckVerbPasses) {
  std::string log;
  EXPECT_EQ(runCli({"gradcheck"}, &log), 0) << log;
  EXPECT_NE(log.find("PASS"), std::string::npos);
}

}  // namespace
}  // namespace mgrec
