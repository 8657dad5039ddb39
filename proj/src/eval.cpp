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

#include <mgrec/eval.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mgrec {

namespace {

constexpr size_t kUserBlock = 512;

bool contains(const IndexList& sorted, uint32_t v) {
  return std::binary_search(sorted.begin(), sorted.end(), v);
}

size_t hits(const IndexList& list, const IndexList& truth, size_t k) {
  size_t h = 0;
  for (size_t r = 0; r < std::min(k, list.size()); ++r) {
    h += contains(truth, list[r]) ? 1 : 0;
  }
  return h;
}

double userRecall(const IndexList& list, const IndexList& truth, size_t k) {
  return static_cast<double>(hits(list, truth, k)) /
         static_cast<double>(truth.size());
}

double userNdcg(const IndexList& list, const IndexList& truth, size_t k) {
  double dcg = 0.0;
  for (size_t r = 0; r < std::min(k, list.size()); ++r) {
    if (contains(truth, list[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (size_t r = 0; r < std::min(k, truth.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

template <typename PerUser>
double meanOverUsers(const TopKLists& topk, const UserItemLists& truth,
                     size_t k, PerUser perUser) {
  if (topk.size() != truth.size()) {
    throw Error("metric: top-k lists and truth cover different user counts");
  }
  double sum = 0.0;
  size_t n = 0;
  for (size_t u = 0; u < truth.size(); ++u) {
    if (truth[u].empty()) {
      continue;
    }
    sum += perUser(topk[u], truth[u], k);
    ++n;
  }
  if (n == 0) {
    throw Error("metric: no user has ground-truth items");
  }
  return sum / static_cast<double>(n);
}

}  // namespace

TopKLists rankTopK(const FusedEmbeddings& fused, const UserItemLists& mask,
                   size_t k, std::span<const uint32_t> users) {
  const auto numUsers = static_cast<size_t>(fused.users.rows());
  const auto numItems = static_cast<size_t>(fused.items.rows());
  if (k == 0) {
    throw Error("rank_topk: K must be >= 1");
  }
  if (k > numItems) {
    throw Error("rank_topk: K (" + std::to_string(k) +
                ") exceeds the number of items (" + std::to_string(numItems) +
                ")");
  }
  if (!mask.empty() && mask.size() != numUsers) {
    throw Error("rank_topk: mask does not cover every user");
  }
  IndexList all;
  if (users.empty()) {
    all.resize(numUsers);
    for (size_t u = 0; u < numUsers; ++u) {
      all[u] = static_cast<uint32_t>(u);
    }
    users = all;
  }
  TopKLists out(numUsers);
  for (size_t start = 0; start < users.size(); start += kUserBlock) {
    const size_t count = std::min(kUserBlock, users.size() - start);
    Matrix block(static_cast<Eigen::Index>(count), fused.users.cols());
    for (size_t b = 0; b < count; ++b) {
      const uint32_t u = users[start + b];
      if (u >= numUsers) {
        throw Error("rank_topk: user index out of range");
      }
      block.row(static_cast<Eigen::Index>(b)) = fused.users.row(u);
    }
    const Matrix scores = block * fused.items.transpose();
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(count); ++b) {
      const uint32_t u = users[start + static_cast<size_t>(b)];
      IndexList candidates;
      candidates.reserve(numItems);
      const IndexList* masked = mask.empty() ? nullptr : &mask[u];
      for (uint32_t i = 0; i < numItems; ++i) {
        if (masked == nullptr || !contains(*masked, i)) {
          candidates.push_back(i);
        }
      }
      const size_t take = std::min(k, candidates.size());
      std::partial_sort(
        candidates.begin(), candidates.begin() + static_cast<long>(take),
        candidates.end(), [&](uint32_t x, uint32_t y) {
          const double sx = scores(b, x);
          const double sy = scores(b, y);
          return sx != sy ? sx > sy : x < y;
        });
      candidates.resize(take);
      out[u] = std::move(candidates);
    }
  }
  return out;
}

double recallAtK(const TopKLists& topk, const UserItemLists& truth, size_t k) {
  return meanOverUsers(topk, truth, k, userRecall);
}

double ndcgAtK(const TopKLists& topk, const UserItemLists& truth, size_t k) {
  return meanOverUsers(topk, truth, k, userNdcg);
}

std::string_view splitName(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Validation:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

Split parseSplit(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val" || text == "valid" || text == "validation") {
    return Split::Validation;
  }
  if (text == "test") return Split::Test;
  throw Error("unknown split '" + std::string(text) + "' (train|val|test)");
}

MetricReport evaluate(const FusedEmbeddings& fused,
                      const InteractionDataset& dataset, Split split,
                      std::vector<size_t> ks, bool perUser) {
  if (ks.empty()) {
    throw Error("evaluate: no cutoffs requested");
  }
  std::sort(ks.begin(), ks.end());
  const UserItemLists& truth = split == Split::Train        ? dataset.train
                               : split == Split::Validation ? dataset.val
                                                            : dataset.test;
  const UserItemLists empty;
  const UserItemLists& mask = split == Split::Train ? empty : dataset.train;

  MetricReport report;
  report.split = split;
  IndexList users;
  for (size_t u = 0; u < truth.size(); ++u) {
    if (!truth[u].empty()) {
      users.push_back(static_cast<uint32_t>(u));
    }
  }
  if (users.empty()) {
    throw Error("evaluate: the " + std::string(splitName(split)) +
                " split has no interactions");
  }
  report.usersEvaluated = users.size();
  const TopKLists topk = rankTopK(fused, mask, ks.back(), users);
  for (size_t k : ks) {
    report.recall[k] = recallAtK(topk, truth, k);
    report.ndcg[k] = ndcgAtK(topk, truth, k);
  }
  if (perUser) {
    report.users = users;
    for (size_t k : ks) {
      auto& r = report.userRecall[k];
      auto& n = report.userNdcg[k];
      for (uint32_t u : users) {
        r.push_back(userRecall(topk[u], truth[u], k));
        n.push_back(userNdcg(topk[u], truth[u], k));
      }
    }
  }
  return report;
}

std::string reportJson(const MetricReport& report) {
  nlohmann::json j;
  j["split"] = std::string(splitName(report.split));
  j["users_evaluated"] = report.usersEvaluated;
  for (const auto& [k, v] : report.recall) {
    j["R@" + std::to_string(k)] = v;
  }
  for (const auto& [k, v] : report.ndcg) {
    j["N@" + std::to_string(k)] = v;
  }
  return j.dump(2) + "\n";
}

std::string reportTable(const MetricReport& report) {
  std::ostringstream head;
  std::ostringstream row;
  head << "split ";
  row << std::string(splitName(report.split)).append(6 - splitName(report.split).size(), ' ');
  char buf[32];
  for (const auto* metric : {&report.recall, &report.ndcg}) {
    const char* prefix = metric == &report.recall ? "R@" : "N@";
    for (const auto& [k, v] : *metric) {
      std::snprintf(buf, sizeof(buf), "%8s", (prefix + std::to_string(k)).c_str());
      head << buf;
      std::snprintf(buf, sizeof(buf), "%8.4f", v);
      row << buf;
    }
  }
  return head.str() + "\n" + row.str() + "\n";
}

std::string reportPerUserCsv(const MetricReport& report,
                             const InteractionDataset& dataset) {
  std::ostringstream out;
  out.precision(17);
  out << "user";
  for (const auto& [k, _] : report.userRecall) out << ",R@" << k;
  for (const auto& [k, _] : report.userNdcg) out << ",N@" << k;
  out << '\n';
  for (size_t j = 0; j < report.users.size(); ++j) {
    out << dataset.users.token(report.users[j]);
    for (const auto& [_, v] : report.userRecall) out << ',' << v[j];
    for (const auto& [_, v] : report.userNdcg) out << ',' << v[j];
    out << '\n';
  }
  return out.str();
}

}  // namespace mgrec
