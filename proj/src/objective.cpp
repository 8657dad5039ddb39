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

#include <mgrec/objective.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace mgrec {

namespace {

double reductionScale(const TripletBatch& batch, Reduction reduction) {
  if (batch.triplets.empty()) {
    throw Error("triplet batch is empty");
  }
  return reduction == Reduction::Mean
           ? 1.0 / static_cast<double>(batch.triplets.size())
           : 1.0;
}

double sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shared InfoNCE kernel; gradients are skipped when dEgo is null.
double infonceImpl(const Matrix& ego, const Matrix& neighbor,
                   std::span<const uint32_t> pool, double tau, double scale,
                   Matrix* dEgo, Matrix* dNeighbor) {
  if (!(tau > 0)) {
    throw Error("InfoNCE: temperature must be positive");
  }
  if (pool.empty()) {
    throw Error("InfoNCE: node pool is empty");
  }
  if (ego.rows() != neighbor.rows() || ego.cols() != neighbor.cols()) {
    throw Error("InfoNCE: ego and neighbor embeddings are not row-aligned");
  }
  const auto n = static_cast<Eigen::Index>(pool.size());
  Matrix a(n, ego.cols());
  Matrix b(n, ego.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = static_cast<Eigen::Index>(pool[static_cast<size_t>(r)]);
    if (row >= ego.rows()) {
      throw Error("InfoNCE: pool index out of range");
    }
    a.row(r) = ego.row(row);
    b.row(r) = neighbor.row(row);
  }
  Matrix logits = (a * b.transpose()) / tau;
  double loss = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse =
      mx + std::log((logits.row(r).array() - mx).exp().sum());
    loss += lse - logits(r, r);
    if (dEgo != nullptr) {
      logits.row(r) = (logits.row(r).array() - lse).exp();
      logits(r, r) -= 1.0;
    }
  }
  if (dEgo != nullptr) {
    // logits now holds softmax - identity.
    const double c = scale / tau;
    const Matrix da = c * (logits * b);
    const Matrix db = c * (logits.transpose() * a);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto row = static_cast<Eigen::Index>(pool[static_cast<size_t>(r)]);
      dEgo->row(row) += da.row(r);
      dNeighbor->row(row) += db.row(r);
    }
  }
  return loss;
}

struct BatchScores {
  std::vector<double> pos;
  std::vector<double> neg;
};

BatchScores batchScores(const TripletBatch& batch, const FusedEmbeddings& f) {
  BatchScores s;
  s.pos.reserve(batch.size());
  s.neg.reserve(batch.size());
  for (const auto& t : batch.triplets) {
    s.pos.push_back(score(f, t.user, t.pos));
    s.neg.push_back(score(f, t.user, t.neg));
  }
  return s;
}

// Squared norm of the layer-0 rows touched by each triplet, summed over
// modalities; repeated participants count once per occurrence.
double participantSquaredNorm(const TripletBatch& batch,
                              const ForwardTrace& trace) {
  double total = 0.0;
  const auto nu = static_cast<Eigen::Index>(trace.numUsers);
  for (size_t m = 0; m < trace.layers.size(); ++m) {
    const Matrix& e0 = trace.ego(m);
    for (const auto& t : batch.triplets) {
      total += e0.row(t.user).squaredNorm() + e0.row(nu + t.pos).squaredNorm() +
               e0.row(nu + t.neg).squaredNorm();
    }
  }
  return total;
}

double allParamSquaredNorm(const ModelParameters& params) {
  double total = 0.0;
  for (const auto& v : const_cast<ModelParameters&>(params).tensors()) {
    for (size_t j = 0; j < v.size; ++j) {
      total += v.data[j] * v.data[j];
    }
  }
  return total;
}

void checkBatch(const TripletBatch& batch, const ForwardTrace& trace) {
  for (const auto& t : batch.triplets) {
    if (t.user >= trace.numUsers || t.pos >= trace.numItems ||
        t.neg >= trace.numItems) {
      throw Error("triplet index out of range");
    }
  }
}

}  // namespace

double negLogSigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double bprLoss(std::span<const double> scoresPos,
               std::span<const double> scoresNeg, double regSquaredNorm,
               double lambda, Reduction reduction) {
  if (scoresPos.size() != scoresNeg.size() || scoresPos.empty()) {
    throw Error("BPR: score vectors must be nonempty and of equal length");
  }
  double sum = 0.0;
  for (size_t b = 0; b < scoresPos.size(); ++b) {
    if (!std::isfinite(scoresPos[b]) || !std::isfinite(scoresNeg[b])) {
      throw Error("BPR: non-finite score in triplet " + std::to_string(b));
    }
    sum += negLogSigmoid(scoresPos[b] - scoresNeg[b]);
  }
  sum += lambda * regSquaredNorm;
  return reduction == Reduction::Mean
           ? sum / static_cast<double>(scoresPos.size())
           : sum;
}

double infonceLoss(const Matrix& ego, const Matrix& neighbor,
                   std::span<const uint32_t> pool, double tau) {
  return infonceImpl(ego, neighbor, pool, tau, 0.0, nullptr, nullptr);
}

double infonceLossWithGrad(const Matrix& ego, const Matrix& neighbor,
                           std::span<const uint32_t> pool, double tau,
                           double scale, Matrix& dEgo, Matrix& dNeighbor) {
  return infonceImpl(ego, neighbor, pool, tau, scale, &dEgo, &dNeighbor);
}

std::pair<IndexList, IndexList> contrastivePools(const TripletBatch& batch,
                                                 size_t numUsers,
                                                 size_t numItems,
                                                 PoolMode mode) {
  IndexList users;
  IndexList items;
  if (mode == PoolMode::Full) {
    for (size_t u = 0; u < numUsers; ++u) {
      users.push_back(static_cast<uint32_t>(u));
    }
    for (size_t i = 0; i < numItems; ++i) {
      items.push_back(static_cast<uint32_t>(numUsers + i));
    }
    return {users, items};
  }
  for (const auto& t : batch.triplets) {
    users.push_back(t.user);
    items.push_back(static_cast<uint32_t>(numUsers + t.pos));
    items.push_back(static_cast<uint32_t>(numUsers + t.neg));
  }
  for (auto* v : {&users, &items}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return {users, items};
}

LossReport totalLoss(const TripletBatch& batch, const ForwardTrace& trace,
                     const ModelParameters& params, const ObjectiveConfig& cfg) {
  checkBatch(batch, trace);
  const double scale = reductionScale(batch, cfg.reduction);
  const BatchScores s = batchScores(batch, trace.fused);
  LossReport r;
  if (cfg.regAllParams) {
    const double reg = cfg.lambda * allParamSquaredNorm(params);
    r.recLoss = bprLoss(s.pos, s.neg, 0.0, 0.0, cfg.reduction) + reg;
    r.regLoss = reg;
  } else {
    const double sq = participantSquaredNorm(batch, trace);
    r.recLoss = bprLoss(s.pos, s.neg, sq, cfg.lambda, cfg.reduction);
    r.regLoss = cfg.lambda * sq * scale;
  }
  r.clLoss.assign(trace.layers.size(), 0.0);
  if (trace.numLayers > 0) {
    const auto [userPool, itemPool] =
      contrastivePools(batch, trace.numUsers, trace.numItems, cfg.pool);
    for (size_t m = 0; m < trace.layers.size(); ++m) {
      r.clLoss[m] = scale * (infonceLoss(trace.ego(m), trace.neighbor.at(m),
                                         userPool, cfg.tau) +
                             infonceLoss(trace.ego(m), trace.neighbor.at(m),
                                         itemPool, cfg.tau));
    }
  } else if (cfg.lambdaC != 0.0) {
    throw Error("contrastive loss needs at least one neighbor layer");
  }
  r.total = r.recLoss;
  for (double c : r.clLoss) {
    r.total += cfg.lambdaC * c;
  }
  return r;
}

GradientSet backward(const TripletBatch& batch, const ForwardTrace& trace,
                     const ModelParameters& params, const GraphContext& ctx,
                     const ObjectiveConfig& cfg, LossReport* report) {
  checkBatch(batch, trace);
  if (trace.fused.users.size() == 0 || trace.layers.size() != params.numModalities()) {
    throw Error("backward: incomplete forward trace");
  }
  if (trace.numLayers > 0 && trace.neighbor.size() != params.numModalities()) {
    throw Error("backward: forward trace lacks neighbor embeddings");
  }
  if (trace.numLayers == 0 && cfg.lambdaC != 0.0) {
    throw Error("contrastive loss needs at least one neighbor layer");
  }
  const double scale = reductionScale(batch, cfg.reduction);
  const auto nu = static_cast<Eigen::Index>(trace.numUsers);
  const auto ni = static_cast<Eigen::Index>(trace.numItems);
  const auto d = static_cast<Eigen::Index>(params.dim);
  const size_t numLayers = trace.numLayers;
  const Matrix& fu = trace.fused.users;
  const Matrix& fi = trace.fused.items;

  GradientSet grad = params.zerosLike();

  // BPR on fused scores.
  Matrix dFu = Matrix::Zero(fu.rows(), fu.cols());
  Matrix dFi = Matrix::Zero(fi.rows(), fi.cols());
  for (const auto& t : batch.triplets) {
    const double x = fu.row(t.user).dot(fi.row(t.pos)) -
                     fu.row(t.user).dot(fi.row(t.neg));
    const double c = -sigmoid(-x) * scale;
    dFu.row(t.user) += c * (fi.row(t.pos) - fi.row(t.neg));
    dFi.row(t.pos) += c * fu.row(t.user);
    dFi.row(t.neg) -= c * fu.row(t.user);
  }

  // Item-item enhancement: F_i = X + S X with S = sum_m alpha_m S_m.
  const Matrix& x = trace.itemsBeforeGraph;
  for (size_t m = 0; m < params.numModalities(); ++m) {
    grad.alpha[m] = ctx.fusion.weightGradient(m, dFi, x);
  }
  Matrix dX = dFi;
  spmvAccumulate(ctx.fusion.fusedTranspose(params.alpha), dFi, dX);

  // Contrastive pools are shared across modalities.
  std::pair<IndexList, IndexList> pools;
  const bool withCl = cfg.lambdaC != 0.0;
  if (withCl) {
    pools = contrastivePools(batch, trace.numUsers, trace.numItems, cfg.pool);
  }

  for (size_t m = 0; m < params.numModalities(); ++m) {
    const auto cols = static_cast<Eigen::Index>(m) * d;
    const Matrix& fin = trace.modalFinal[m];
    grad.beta[m] =
      (dFu.middleCols(cols, d).array() * fin.topRows(nu).array()).sum() +
      (dX.middleCols(cols, d).array() * fin.bottomRows(ni).array()).sum();

    // Gradient reaching every layer through the readout sum.
    Matrix direct(nu + ni, d);
    direct.topRows(nu) = params.beta[m] * dFu.middleCols(cols, d);
    direct.bottomRows(ni) = params.beta[m] * dX.middleCols(cols, d);

    Matrix dEgo = Matrix::Zero(nu + ni, d);
    Matrix dNeighbor = Matrix::Zero(nu + ni, d);
    if (withCl) {
      const double w = cfg.lambdaC * scale;
      infonceLossWithGrad(trace.ego(m), trace.neighbor[m], pools.first,
                          cfg.tau, w, dEgo, dNeighbor);
      infonceLossWithGrad(trace.ego(m), trace.neighbor[m], pools.second,
                          cfg.tau, w, dEgo, dNeighbor);
      dNeighbor /= static_cast<double>(numLayers);
    }
    if (!cfg.regAllParams) {
      const Matrix& e0 = trace.ego(m);
      const double w = 2.0 * cfg.lambda * scale;
      for (const auto& t : batch.triplets) {
        dEgo.row(t.user) += w * e0.row(t.user);
        dEgo.row(nu + t.pos) += w * e0.row(nu + t.pos);
        dEgo.row(nu + t.neg) += w * e0.row(nu + t.neg);
      }
    }

    // Reverse through the propagation layers. acc holds dLoss/dE(l).
    Matrix acc = direct;
    if (numLayers > 0 && withCl) {
      acc += dNeighbor;
    }
    for (size_t l = numLayers; l >= 1; --l) {
      Matrix prev = direct;
      if (l - 1 >= 1 && withCl) {
        prev += dNeighbor;
      }
      spmvAccumulate(ctx.adjacency.userToItem, acc.bottomRows(ni),
                     prev.topRows(nu));
      spmvAccumulate(ctx.adjacency.itemToUser, acc.topRows(nu),
                     prev.bottomRows(ni));
      acc = std::move(prev);
    }
    acc += dEgo;

    grad.userEmbed[m] = acc.topRows(nu);
    if (params.featureProjection()) {
      grad.projection[m] = ctx.features.at(m).transpose() * acc.bottomRows(ni);
    } else {
      grad.itemEmbed[m] = acc.bottomRows(ni);
    }
  }

  if (cfg.regAllParams) {
    auto gv = grad.tensors();
    auto pv = const_cast<ModelParameters&>(params).tensors();
    for (size_t t = 0; t < gv.size(); ++t) {
      for (size_t j = 0; j < gv[t].size; ++j) {
        gv[t].data[j] += 2.0 * cfg.lambda * pv[t].data[j];
      }
    }
  }

  if (report != nullptr) {
    *report = totalLoss(batch, trace, params, cfg);
  }
  return grad;
}

GradcheckInstance defaultGradcheckInstance(uint64_t seed,
                                           bool featureProjection) {
  constexpr size_t kUsers = 6;
  constexpr size_t kItems = 8;
  GradcheckInstance inst;
  std::mt19937_64 rng(seed);

  auto& ds = inst.dataset;
  ds.numUsers = kUsers;
  ds.numItems = kItems;
  std::vector<std::string> ut;
  std::vector<std::string> it;
  for (size_t u = 0; u < kUsers; ++u) ut.push_back("u" + std::to_string(u));
  for (size_t i = 0; i < kItems; ++i) it.push_back("i" + std::to_string(i));
  ds.users = IdMap(ut);
  ds.items = IdMap(it);
  ds.train.assign(kUsers, {});
  ds.val.assign(kUsers, {});
  ds.test.assign(kUsers, {});
  for (size_t i = 0; i < kItems; ++i) {
    ds.train[i % kUsers].push_back(static_cast<uint32_t>(i));
  }
  std::uniform_int_distribution<uint32_t> pickItem(0, kItems - 1);
  for (size_t u = 0; u < kUsers; ++u) {
    for (int extra = 0; extra < 2; ++extra) {
      ds.train[u].push_back(pickItem(rng));
    }
    auto& items = ds.train[u];
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  ds.validate();

  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<std::pair<Modality, Eigen::Index>> mods = {
    {Modality::Visual, 6}, {Modality::Textual, 5}};
  for (const auto& [mod, dim] : mods) {
    ModalityFeatures f;
    f.modality = mod;
    f.matrix = Matrix::NullaryExpr(kItems, dim, [&]() { return normal(rng); });
    inst.features.push_back(std::move(f));
  }
  inst.context = buildContext(ds, inst.features, 2, true);

  std::vector<Modality> modalities = {Modality::Visual, Modality::Textual};
  std::vector<size_t> featureDims;
  if (featureProjection) {
    featureDims = {6, 5};
  }
  inst.params = makeParameters(modalities, kUsers, kItems, 4, featureDims);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (auto& v : inst.params.tensors()) {
    for (size_t j = 0; j < v.size; ++j) {
      v.data[j] = unif(rng);
    }
  }
  inst.params.alpha = {0.55, 0.35};
  inst.params.beta = {0.6, 0.45};

  for (size_t u = 0; u < kUsers; ++u) {
    const auto& items = ds.train[u];
    Triplet t;
    t.user = static_cast<uint32_t>(u);
    t.pos = items[u % items.size()];
    do {
      t.neg = pickItem(rng);
    } while (std::binary_search(items.begin(), items.end(), t.neg));
    inst.batch.triplets.push_back(t);
  }
  // A repeated user exercises gradient accumulation.
  inst.batch.triplets.push_back(inst.batch.triplets.front());

  inst.objective.lambda = 1e-3;
  inst.objective.lambdaC = 1e-2;
  inst.objective.tau = 0.2;
  inst.objective.pool = PoolMode::Full;
  inst.numLayers = 3;
  return inst;
}

double gradientRelError(double analytic, double numeric) {
  const double denom =
    std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport finiteDiffCheck(
  const GradcheckInstance& instance, double h, double tolerance,
  const std::function<void(GradientSet&)>& mutate) {
  if (!(h > 0)) {
    throw Error("h must be positive");
  }
  if (instance.params.parameterCount() > 5000) {
    throw Error("gradcheck instance too large for a full sweep (" +
                std::to_string(instance.params.parameterCount()) +
                " parameters, limit 5000)");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto& ctx = instance.context;
  ModelParameters params = instance.params;

  const ForwardTrace trace = forward(params, ctx, instance.numLayers);
  GradientSet analytic =
    backward(instance.batch, trace, params, ctx, instance.objective);
  if (mutate) {
    mutate(analytic);
  }

  auto lossAt = [&](ModelParameters& p) {
    const ForwardTrace t = forward(p, ctx, instance.numLayers);
    return totalLoss(instance.batch, t, p, instance.objective).total;
  };

  GradcheckReport report;
  auto pv = params.tensors();
  auto av = analytic.tensors();
  for (size_t t = 0; t < pv.size(); ++t) {
    TensorCheck check;
    check.name = pv[t].name;
    check.coordinates = pv[t].size;
    for (size_t j = 0; j < pv[t].size; ++j) {
      const double orig = pv[t].data[j];
      pv[t].data[j] = orig + h;
      const double up = lossAt(params);
      pv[t].data[j] = orig - h;
      const double down = lossAt(params);
      pv[t].data[j] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = av[t].data[j];
      check.maxRelError = std::max(check.maxRelError, gradientRelError(a, numeric));
      check.maxAbsError = std::max(check.maxAbsError, std::abs(a - numeric));
    }
    check.passed = check.maxRelError < tolerance;
    report.passed = report.passed && check.passed;
    report.maxRelError = std::max(report.maxRelError, check.maxRelError);
    report.tensors.push_back(std::move(check));
  }
  report.seconds = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  return report;
}

}  // namespace mgrec
