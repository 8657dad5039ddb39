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
#include <mgrec/objective.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mgrec {

// Ordered key/value pairs as read from a config file or the command line.
using ConfigMap = std::vector<std::pair<std::string, std::string>>;

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct TrainConfig {
  double lr = 1e-4;
  size_t d = 64;
  size_t L = 3;
  size_t k = 10;
  double lambda = 1e-2;
  double lambda_c = 1e-2;
  double tau = 0.2;
  size_t batch_size = 2048;
  size_t max_epochs = 1000;
  size_t patience = 20;
  uint64_t seed = 2024;
  bool item_graph_normalize = true;
  bool feature_projection = false;
  bool reg_all_params = false;
  PoolMode cl_pool = PoolMode::InBatch;
  Reduction reduction = Reduction::Mean;
  bool deterministic = true;

  ObjectiveConfig objective() const;

  // Keys accept '-' or '_' ("lambda-c" == "lambda_c"); "layers" and "dim"
  // alias L and d. Throws ConfigError on an unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  // Every violated constraint, empty when valid.
  std::vector<std::string> problems() const;
  std::map<std::string, std::string> toMap() const;

  static std::vector<std::string> keys();
};

// Canonical spelling of a config key, or "" if unknown.
std::string canonicalKey(std::string_view key);

// `key = value` lines; '#' starts a comment.
ConfigMap parseConfigText(std::string_view text, const std::string& source);
ConfigMap readConfigFile(const std::filesystem::path& path);

// defaults < file < flags. Collects every offending key before throwing.
TrainConfig resolveConfig(const ConfigMap& file, const ConfigMap& flags);

}  // namespace mgrec
