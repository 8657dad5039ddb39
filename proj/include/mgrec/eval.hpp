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

#include <map>
#include <span>
#include <string>
#include <vector>

namespace mgrec {

using TopKLists = std::vector<IndexList>;

// Full-catalog top-k per user: masked items never appear, ties go to the
// smaller item index. Result has one entry per user; users outside `users`
// (when given) get empty lists.
TopKLists rankTopK(const FusedEmbeddings& fused, const UserItemLists& mask,
                   size_t k, std::span<const uint32_t> users = {});

// Mean over users with nonempty truth. Lists longer than k are truncated.
double recallAtK(const TopKLists& topk, const UserItemLists& truth, size_t k);
// Binary-gain NDCG with 1/log2(rank+1) discount and IDCG over
// min(k, |truth|) hits.
double ndcgAtK(const TopKLists& topk, const UserItemLists& truth, size_t k);

enum class Split { Train, Validation, Test };
std::string_view splitName(Split s);
Split parseSplit(std::string_view text);

struct MetricReport {
  Split split = Split::Test;
  std::map<size_t, double> recall;
  std::map<size_t, double> ndcg;
  size_t usersEvaluated = 0;
  // Filled only when requested.
  IndexList users;
  std::map<size_t, std::vector<double>> userRecall;
  std::map<size_t, std::vector<double>> userNdcg;
};

// Ranks against `split`'s truth. Train items are masked for validation and
// test; nothing is masked when evaluating the train split itself.
MetricReport evaluate(const FusedEmbeddings& fused,
                      const InteractionDataset& dataset, Split split,
                      std::vector<size_t> ks = {10, 20}, bool perUser = false);

std::string reportJson(const MetricReport& report);
std::string reportTable(const MetricReport& report);
std::string reportPerUserCsv(const MetricReport& report,
                             const InteractionDataset& dataset);

}  // namespace mgrec
