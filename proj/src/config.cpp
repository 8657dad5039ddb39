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

#include <mgrec/io.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace mgrec {

namespace {

std::string joinProblems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) {
    msg += "\n  " + p;
  }
  return msg;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double toDouble(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError({key + ": expected a number, got '" + v + "'"});
  }
  return out;
}

uint64_t toUnsigned(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError({key + ": expected a nonnegative integer, got '" + v + "'"});
  }
  return out;
}

bool toBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError({key + ": expected true|false, got '" + v + "'"});
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
  : Error(joinProblems(problems)), problems_(std::move(problems)) {}

ObjectiveConfig TrainConfig::objective() const {
  ObjectiveConfig o;
  o.lambda = lambda;
  o.lambdaC = lambda_c;
  o.tau = tau;
  o.pool = cl_pool;
  o.reduction = reduction;
  o.regAllParams = reg_all_params;
  return o;
}

std::vector<std::string> TrainConfig::keys() {
  return {"lr",         "d",          "L",
          "k",          "lambda",     "lambda_c",
          "tau",        "batch_size", "max_epochs",
          "patience",   "seed",       "item_graph_normalize",
          "feature_projection",       "reg_all_params",
          "cl_pool",    "reduction",  "deterministic"};
}

std::string canonicalKey(std::string_view key) {
  std::string k(key);
  std::replace(k.begin(), k.end(), '-', '_');
  if (k == "layers" || k == "l") k = "L";
  if (k == "dim") k = "d";
  const auto all = TrainConfig::keys();
  return std::find(all.begin(), all.end(), k) != all.end() ? k : "";
}

void TrainConfig::set(const std::string& rawKey, const std::string& value) {
  const std::string key = canonicalKey(rawKey);
  if (key.empty()) {
    throw ConfigError({rawKey + ": unknown key"});
  }
  if (key == "lr") lr = toDouble(key, value);
  else if (key == "d") d = toUnsigned(key, value);
  else if (key == "L") L = toUnsigned(key, value);
  else if (key == "k") k = toUnsigned(key, value);
  else if (key == "lambda") lambda = toDouble(key, value);
  else if (key == "lambda_c") lambda_c = toDouble(key, value);
  else if (key == "tau") tau = toDouble(key, value);
  else if (key == "batch_size") batch_size = toUnsigned(key, value);
  else if (key == "max_epochs") max_epochs = toUnsigned(key, value);
  else if (key == "patience") patience = toUnsigned(key, value);
  else if (key == "seed") seed = toUnsigned(key, value);
  else if (key == "item_graph_normalize") item_graph_normalize = toBool(key, value);
  else if (key == "feature_projection") feature_projection = toBool(key, value);
  else if (key == "reg_all_params") reg_all_params = toBool(key, value);
  else if (key == "deterministic") deterministic = toBool(key, value);
  else if (key == "cl_pool") {
    if (value == "batch" || value == "in-batch" || value == "in_batch") {
      cl_pool = PoolMode::InBatch;
    } else if (value == "full") {
      cl_pool = PoolMode::Full;
    } else {
      throw ConfigError({key + ": expected batch|full, got '" + value + "'"});
    }
  } else if (key == "reduction") {
    if (value == "mean") {
      reduction = Reduction::Mean;
    } else if (value == "sum") {
      reduction = Reduction::Sum;
    } else {
      throw ConfigError({key + ": expected mean|sum, got '" + value + "'"});
    }
  }
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> p;
  if (!(lr > 0)) p.push_back("lr: must be > 0");
  if (d == 0) p.push_back("d: must be >= 1");
  if (k == 0) p.push_back("k: must be >= 1");
  if (lambda < 0) p.push_back("lambda: must be >= 0");
  if (lambda_c < 0) p.push_back("lambda_c: must be >= 0");
  if (!(tau > 0)) p.push_back("tau: must be > 0");
  if (batch_size == 0) p.push_back("batch_size: must be >= 1");
  if (max_epochs == 0) p.push_back("max_epochs: must be >= 1");
  if (L == 0 && lambda_c != 0) {
    p.push_back("L: the contrastive term needs L >= 1 (or lambda_c = 0)");
  }
  return p;
}

std::map<std::string, std::string> TrainConfig::toMap() const {
  return {{"lr", fmt(lr)},
          {"d", std::to_string(d)},
          {"L", std::to_string(L)},
          {"k", std::to_string(k)},
          {"lambda", fmt(lambda)},
          {"lambda_c", fmt(lambda_c)},
          {"tau", fmt(tau)},
          {"batch_size", std::to_string(batch_size)},
          {"max_epochs", std::to_string(max_epochs)},
          {"patience", std::to_string(patience)},
          {"seed", std::to_string(seed)},
          {"item_graph_normalize", item_graph_normalize ? "true" : "false"},
          {"feature_projection", feature_projection ? "true" : "false"},
          {"reg_all_params", reg_all_params ? "true" : "false"},
          {"cl_pool", cl_pool == PoolMode::Full ? "full" : "batch"},
          {"reduction", reduction == Reduction::Sum ? "sum" : "mean"},
          {"deterministic", deterministic ? "true" : "false"}};
}

ConfigMap parseConfigText(std::string_view text, const std::string& source) {
  ConfigMap out;
  std::istringstream in{std::string(text)};
  std::string line;
  size_t lineNo = 0;
  std::vector<std::string> problems;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      problems.push_back(source + ":" + std::to_string(lineNo) +
                         ": expected key = value");
      continue;
    }
    out.emplace_back(trim(std::string_view(body).substr(0, eq)),
                     trim(std::string_view(body).substr(eq + 1)));
  }
  if (!problems.empty()) {
    throw ConfigError(problems);
  }
  return out;
}

ConfigMap readConfigFile(const std::filesystem::path& path) {
  return parseConfigText(io::readFile(path), path.string());
}

TrainConfig resolveConfig(const ConfigMap& file, const ConfigMap& flags) {
  TrainConfig cfg;
  std::vector<std::string> problems;
  for (const auto* layer : {&file, &flags}) {
    for (const auto& [key, value] : *layer) {
      try {
        cfg.set(key, value);
      } catch (const ConfigError& e) {
        problems.insert(problems.end(), e.problems().begin(),
                        e.problems().end());
      }
    }
  }
  const auto range = cfg.problems();
  problems.insert(problems.end(), range.begin(), range.end());
  if (!problems.empty()) {
    throw ConfigError(problems);
  }
  return cfg;
}

}  // namespace mgrec
