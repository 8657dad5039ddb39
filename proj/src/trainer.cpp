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

#include <mgrec/trainer.hpp>

#include <mgrec/io.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>

namespace mgrec {

namespace {

constexpr uint64_t kSamplerSeedOffset = 0x9E3779B97F4A7C15ULL;
constexpr size_t kMonitorK = 20;

void accumulate(LossReport& into, const LossReport& r) {
  into.recLoss += r.recLoss;
  into.regLoss += r.regLoss;
  into.total += r.total;
  if (into.clLoss.size() < r.clLoss.size()) {
    into.clLoss.resize(r.clLoss.size(), 0.0);
  }
  for (size_t m = 0; m < r.clLoss.size(); ++m) {
    into.clLoss[m] += r.clLoss[m];
  }
}

void divide(LossReport& r, double n) {
  r.recLoss /= n;
  r.regLoss /= n;
  r.total /= n;
  for (auto& c : r.clLoss) {
    c /= n;
  }
}

}  // namespace

void xavierInit(ModelParameters& params, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& t) {
    const double bound =
      std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      t.data()[j] = dist(rng);
    }
  };
  for (size_t m = 0; m < params.numModalities(); ++m) {
    fill(params.userEmbed[m]);
    if (params.featureProjection()) {
      fill(params.projection[m]);
    } else {
      fill(params.itemEmbed[m]);
    }
  }
  std::fill(params.alpha.begin(), params.alpha.end(), 0.5);
  std::fill(params.beta.begin(), params.beta.end(), 0.5);
}

ModelParameters initParameters(const InteractionDataset& dataset,
                               std::span<const ModalityFeatures> features,
                               const TrainConfig& config) {
  std::vector<Modality> modalities;
  std::vector<size_t> dims;
  for (const auto& f : features) {
    modalities.push_back(f.modality);
    dims.push_back(f.dim());
  }
  ModelParameters p = makeParameters(
    modalities, dataset.numUsers, dataset.numItems, config.d,
    config.feature_projection ? std::span<const size_t>(dims)
                              : std::span<const size_t>());
  xavierInit(p, config.seed);
  return p;
}

TripletSampler::TripletSampler(const InteractionDataset& dataset)
  : dataset_(dataset) {
  for (size_t u = 0; u < dataset.numUsers; ++u) {
    if (dataset.train[u].size() >= dataset.numItems) {
      skippedUsers_.push_back(static_cast<uint32_t>(u));
      continue;
    }
    for (uint32_t i : dataset.train[u]) {
      pairs_.emplace_back(static_cast<uint32_t>(u), i);
    }
  }
  if (pairs_.empty()) {
    throw Error("sampler: no user has a possible negative item");
  }
}

TripletBatch TripletSampler::sample(size_t batchSize,
                                    std::mt19937_64& rng) const {
  std::uniform_int_distribution<size_t> pickPair(0, pairs_.size() - 1);
  std::uniform_int_distribution<uint32_t> pickItem(
    0, static_cast<uint32_t>(dataset_.numItems - 1));
  TripletBatch batch;
  batch.triplets.reserve(batchSize);
  for (size_t b = 0; b < batchSize; ++b) {
    const auto [u, p] = pairs_[pickPair(rng)];
    const auto& items = dataset_.train[u];
    uint32_t n = 0;
    do {
      n = pickItem(rng);
    } while (std::binary_search(items.begin(), items.end(), n));
    batch.triplets.push_back({u, p, n});
  }
  return batch;
}

TripletBatch sampleTriplets(const InteractionDataset& dataset,
                            size_t batchSize, std::mt19937_64& rng) {
  return TripletSampler(dataset).sample(batchSize, rng);
}

AdamState AdamState::forParameters(ModelParameters& params) {
  AdamState s;
  for (const auto& t : params.tensors()) {
    s.m.emplace_back(t.size, 0.0);
    s.v.emplace_back(t.size, 0.0);
  }
  return s;
}

void adamStep(ModelParameters& params, GradientSet& grads, AdamState& state,
              double lr) {
  auto pv = params.tensors();
  auto gv = grads.tensors();
  if (pv.size() != gv.size() || pv.size() != state.m.size()) {
    throw Error("adam: gradient/state layout does not match parameters");
  }
  for (size_t t = 0; t < pv.size(); ++t) {
    if (pv[t].size != gv[t].size || state.m[t].size() != pv[t].size) {
      throw Error("adam: shape mismatch for " + pv[t].name);
    }
    for (size_t j = 0; j < gv[t].size; ++j) {
      if (!std::isfinite(gv[t].data[j])) {
        throw NonFiniteGradient("non-finite gradient in " + gv[t].name +
                                " at coordinate " + std::to_string(j));
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t t = 0; t < pv.size(); ++t) {
    auto& m = state.m[t];
    auto& v = state.v[t];
    for (size_t j = 0; j < pv[t].size; ++j) {
      const double g = gv[t].data[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      pv[t].data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

FitResult fit(const InteractionDataset& dataset, const GraphContext& ctx,
              std::span<const ModalityFeatures> features,
              const TrainConfig& config, const EpochCallback& onEpoch) {
  if (auto problems = config.problems(); !problems.empty()) {
    throw ConfigError(problems);
  }
  if (config.deterministic) {
    setSingleThreaded();
  }
  bool hasVal = false;
  for (const auto& v : dataset.val) {
    hasVal = hasVal || !v.empty();
  }
  if (!hasVal) {
    throw Error("fit: the validation split is empty; early stopping needs it");
  }

  ModelParameters params = initParameters(dataset, features, config);
  AdamState adam = AdamState::forParameters(params);
  const TripletSampler sampler(dataset);
  std::mt19937_64 rng(config.seed + kSamplerSeedOffset);
  const ObjectiveConfig objective = config.objective();
  const size_t batches =
    (dataset.trainSize() + config.batch_size - 1) / config.batch_size;

  FitResult result;
  result.best = params;
  size_t sinceBest = 0;
  for (size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    bool diverged = false;
    for (size_t b = 0; b < batches && !diverged; ++b) {
      const TripletBatch batch = sampler.sample(config.batch_size, rng);
      const ForwardTrace trace = forward(params, ctx, config.L);
      LossReport report;
      GradientSet grads =
        backward(batch, trace, params, ctx, objective, &report);
      if (!std::isfinite(report.total)) {
        diverged = true;
        break;
      }
      accumulate(record.loss, report);
      try {
        adamStep(params, grads, adam, config.lr);
      } catch (const NonFiniteGradient&) {
        diverged = true;
      }
    }
    if (diverged || !params.allFinite()) {
      result.diverged = true;
      result.stopReason = "diverged (non-finite loss) in epoch " +
                          std::to_string(epoch) + "; kept last good checkpoint";
      break;
    }
    divide(record.loss, static_cast<double>(batches));

    const ForwardTrace trace = forward(params, ctx, config.L);
    const MetricReport val =
      evaluate(trace.fused, dataset, Split::Validation, {10, kMonitorK});
    record.valRecall = val.recall;
    record.valNdcg = val.ndcg;
    record.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    result.history.push_back(record);
    if (onEpoch) {
      onEpoch(record, params);
    }

    const double recall = val.recall.at(kMonitorK);
    if (recall > result.bestValRecall) {
      result.bestValRecall = recall;
      result.bestEpoch = epoch;
      result.best = params;
      result.bestStep = adam.step;
      sinceBest = 0;
    } else {
      ++sinceBest;
    }
    if (sinceBest >= config.patience) {
      result.stopReason = "early stop: " + std::to_string(sinceBest) +
                          " epochs without validation R@20 improvement";
      break;
    }
  }
  if (result.stopReason.empty()) {
    result.stopReason = "reached max_epochs";
  }
  ctx.itemGraphs.verifyFrozen();
  return result;
}

FitResult fit(const InteractionDataset& dataset,
              std::span<const ModalityFeatures> features,
              const TrainConfig& config, const EpochCallback& onEpoch) {
  const GraphContext ctx =
    buildContext(dataset, features, config.k, config.item_graph_normalize);
  return fit(dataset, ctx, features, config, onEpoch);
}

std::string historyLine(const EpochRecord& record,
                        std::span<const Modality> modalities) {
  nlohmann::ordered_json j;
  j["epoch"] = record.epoch;
  j["rec_loss"] = record.loss.recLoss;
  for (size_t m = 0; m < record.loss.clLoss.size() && m < modalities.size();
       ++m) {
    j["cl_loss_" + std::string(modalityCode(modalities[m]))] =
      record.loss.clLoss[m];
  }
  j["reg"] = record.loss.regLoss;
  j["total"] = record.loss.total;
  for (const auto& [k, v] : record.valRecall) {
    j["val_R@" + std::to_string(k)] = v;
  }
  for (const auto& [k, v] : record.valNdcg) {
    j["val_N@" + std::to_string(k)] = v;
  }
  j["seconds"] = record.seconds;
  return j.dump();
}

std::vector<GridPoint> enumerateGrid(const GridSpec& spec,
                                     const TrainConfig& base) {
  const auto orBase = [](const auto& axis, auto value) {
    using T = std::decay_t<decltype(value)>;
    return axis.empty() ? std::vector<T>{value} : axis;
  };
  const auto lambdas = orBase(spec.lambda, base.lambda);
  const auto lambdaCs = orBase(spec.lambda_c, base.lambda_c);
  const auto ks = orBase(spec.k, base.k);
  const auto taus = orBase(spec.tau, base.tau);
  std::vector<GridPoint> points;
  for (double l : lambdas) {
    for (double lc : lambdaCs) {
      for (size_t k : ks) {
        for (double t : taus) {
          points.push_back({l, lc, k, t});
        }
      }
    }
  }
  return points;
}

GridResult gridSearch(const InteractionDataset& dataset,
                      std::span<const ModalityFeatures> features,
                      const TrainConfig& base, const GridSpec& spec,
                      size_t workers) {
  const auto points = enumerateGrid(spec, base);
  std::map<size_t, GraphContext> contexts;
  for (const auto& p : points) {
    if (!contexts.count(p.k)) {
      contexts.emplace(p.k, buildContext(dataset, features, p.k,
                                         base.item_graph_normalize));
    }
  }

  std::vector<GridRow> rows(points.size());
  std::atomic<size_t> next{0};
  std::mutex errorMutex;
  std::string firstError;
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= points.size()) {
        return;
      }
      try {
        TrainConfig cfg = base;
        cfg.lambda = points[i].lambda;
        cfg.lambda_c = points[i].lambda_c;
        cfg.k = points[i].k;
        cfg.tau = points[i].tau;
        cfg.seed = base.seed + i;
        const FitResult r = fit(dataset, contexts.at(cfg.k), features, cfg);
        GridRow& row = rows[i];
        row.index = i;
        row.point = points[i];
        row.seed = cfg.seed;
        row.bestValRecall = r.bestValRecall;
        row.bestEpoch = r.bestEpoch;
        row.epochsRun = r.history.size();
        if (r.bestEpoch > 0) {
          row.bestValNdcg = r.history[r.bestEpoch - 1].valNdcg.at(kMonitorK);
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(errorMutex);
        if (firstError.empty()) {
          firstError = e.what();
        }
      }
    }
  };
  workers = std::max<size_t>(1, std::min(workers, points.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  if (!firstError.empty()) {
    throw Error("grid search: " + firstError);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.bestValRecall > b.bestValRecall;
  });
  if (!rows.empty()) {
    rows.front().best = true;
  }
  return GridResult{std::move(rows)};
}

std::string gridTable(const GridResult& result) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-5s %-10s %-10s %-4s %-6s %-10s %-10s %-6s %s\n",
                "rank", "lambda", "lambda_c", "k", "tau", "val_R@20",
                "val_N@20", "epoch", "");
  out << buf;
  for (size_t r = 0; r < result.rows.size(); ++r) {
    const auto& row = result.rows[r];
    std::snprintf(buf, sizeof(buf),
                  "%-5zu %-10g %-10g %-4zu %-6g %-10.4f %-10.4f %-6zu %s\n",
                  r + 1, row.point.lambda, row.point.lambda_c, row.point.k,
                  row.point.tau, row.bestValRecall, row.bestValNdcg,
                  row.bestEpoch, row.best ? "*best*" : "");
    out << buf;
  }
  return out.str();
}

void writeCheckpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ModelParameters& p = checkpoint.params;
  nlohmann::json j;
  j["format"] = "mgrec-checkpoint-1";
  j["dim"] = p.dim;
  j["feature_projection"] = p.featureProjection();
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["step"] = checkpoint.step;
  j["best_epoch"] = checkpoint.bestEpoch;
  j["best_val_recall_20"] = checkpoint.bestValRecall;
  j["config"] = checkpoint.config.toMap();
  nlohmann::json files = nlohmann::json::object();
  for (size_t m = 0; m < p.numModalities(); ++m) {
    const std::string code(modalityCode(p.modalities[m]));
    j["modalities"].push_back(code);
    const auto userFile = "user_embed_" + code + ".mmft";
    io::writeMatrix(dir / userFile, p.userEmbed[m], io::DType::Float64);
    files[userFile] = io::fileHash(dir / userFile);
    const auto itemFile = (p.featureProjection() ? "projection_" : "item_embed_") + code + ".mmft";
    io::writeMatrix(dir / itemFile,
                    p.featureProjection() ? p.projection[m] : p.itemEmbed[m],
                    io::DType::Float64);
    files[itemFile] = io::fileHash(dir / itemFile);
  }
  j["files"] = files;
  io::writeFileAtomic(dir / "manifest.json", j.dump(2) + "\n");
}

Checkpoint readCheckpoint(const std::filesystem::path& dir) {
  const auto manifestPath = dir / "manifest.json";
  if (!std::filesystem::exists(manifestPath)) {
    throw Error("no checkpoint manifest at " + manifestPath.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::readFile(manifestPath));
  } catch (const nlohmann::json::exception& e) {
    throw Error(manifestPath.string() + ": " + e.what());
  }
  Checkpoint c;
  ModelParameters& p = c.params;
  p.dim = j.at("dim").get<size_t>();
  const bool projection = j.at("feature_projection").get<bool>();
  for (const auto& code : j.at("modalities")) {
    const std::string s = code.get<std::string>();
    p.modalities.push_back(parseModality(s));
    p.userEmbed.push_back(io::readMatrix(dir / ("user_embed_" + s + ".mmft")));
    Matrix items = io::readMatrix(
      dir / ((projection ? "projection_" : "item_embed_") + s + ".mmft"));
    (projection ? p.projection : p.itemEmbed).push_back(std::move(items));
  }
  p.alpha = j.at("alpha").get<std::vector<double>>();
  p.beta = j.at("beta").get<std::vector<double>>();
  c.step = j.at("step").get<uint64_t>();
  c.bestEpoch = j.value("best_epoch", size_t{0});
  c.bestValRecall = j.value("best_val_recall_20", 0.0);
  ConfigMap entries;
  for (const auto& [key, value] : j.at("config").items()) {
    entries.emplace_back(key, value.get<std::string>());
  }
  c.config = resolveConfig(entries, {});
  if (p.alpha.size() != p.numModalities() ||
      p.beta.size() != p.numModalities()) {
    throw Error(dir.string() + ": alpha/beta length does not match modalities");
  }
  return c;
}

}  // namespace mgrec
