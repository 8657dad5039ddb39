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

#include <mgrec/config.hpp>
#include <mgrec/dataset.hpp>
#include <mgrec/diagnostics.hpp>
#include <mgrec/eval.hpp>
#include <mgrec/graphs.hpp>
#include <mgrec/io.hpp>
#include <mgrec/model.hpp>
#include <mgrec/objective.hpp>
#include <mgrec/trainer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace mgrec::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataBundle {
  InteractionDataset dataset;
  std::vector<ModalityFeatures> features;
  std::map<std::string, std::string> hashes;  // file name -> content hash
};

// Shared state filled by CLI11 before a verb runs.
struct Common {
  std::string configPath;
  std::string outDir;
  std::map<std::string, std::string> overrides;  // canonical key -> value
  bool deterministic = true;
  size_t deterministicCount = 0;
};

const std::vector<std::pair<Modality, std::string>> kFeatureFiles = {
  {Modality::Visual, "visual.mmft"}, {Modality::Textual, "textual.mmft"}};

TrainConfig resolve(const Common& c) {
  ConfigMap file;
  if (!c.configPath.empty()) {
    file = readConfigFile(c.configPath);
  }
  ConfigMap flags(c.overrides.begin(), c.overrides.end());
  if (c.deterministicCount > 0) {
    flags.emplace_back("deterministic", c.deterministic ? "true" : "false");
  }
  return resolveConfig(file, flags);
}

DataBundle loadData(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error("data directory " + dir.string() + " does not exist");
  }
  DataBundle b;
  b.dataset = readSplitManifest(dir);
  for (const char* name : {"train.tsv", "val.tsv", "test.tsv", "id_map.jsonl"}) {
    b.hashes[name] = io::fileHash(dir / name);
  }
  for (const auto& [modality, name] : kFeatureFiles) {
    if (fs::exists(dir / name)) {
      b.features.push_back(loadFeatures(dir / name, modality, b.dataset));
      b.hashes[name] = io::fileHash(dir / name);
    }
  }
  if (b.features.empty()) {
    throw Error("no modality features (visual.mmft / textual.mmft) in " +
                dir.string());
  }
  return b;
}

fs::path requireOutDir(const Common& c) {
  if (c.outDir.empty()) {
    throw Error("--out-dir is required");
  }
  fs::create_directories(c.outDir);
  return c.outDir;
}

void writeJson(const fs::path& path, const json& j) {
  io::writeFileAtomic(path, j.dump(2) + "\n");
}

void writeRunManifest(const fs::path& dir, const std::string& verb,
                      const TrainConfig& config,
                      const std::map<std::string, std::string>& inputs,
                      json extra = json::object()) {
  json j;
  j["verb"] = verb;
  j["seed"] = config.seed;
  j["config"] = config.toMap();
  j["inputs"] = inputs;
  for (auto& [k, v] : extra.items()) {
    j[k] = v;
  }
  writeJson(dir / "manifest.json", j);
}

std::map<std::string, std::string> prefixed(
  const std::string& prefix, const std::map<std::string, std::string>& m) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : m) {
    out[prefix + k] = v;
  }
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// Loads a checkpoint and rebuilds the graphs it was trained with.
struct LoadedModel {
  Checkpoint checkpoint;
  GraphContext context;
  std::map<std::string, std::string> hashes;
};

LoadedModel loadModel(const fs::path& dir, const DataBundle& data) {
  LoadedModel m;
  m.checkpoint = readCheckpoint(dir);
  const ModelParameters& p = m.checkpoint.params;
  if (p.userEmbed.empty() ||
      static_cast<size_t>(p.userEmbed[0].rows()) != data.dataset.numUsers) {
    throw Error("checkpoint " + dir.string() +
                " was trained on a different dataset (user count differs)");
  }
  if (p.numModalities() != data.features.size()) {
    throw Error("checkpoint " + dir.string() + " expects " +
                std::to_string(p.numModalities()) + " modalities, data has " +
                std::to_string(data.features.size()));
  }
  m.context = buildContext(data.dataset, data.features, m.checkpoint.config.k,
                           m.checkpoint.config.item_graph_normalize);
  m.hashes["checkpoint/manifest.json"] = io::fileHash(dir / "manifest.json");
  return m;
}

std::vector<size_t> parseSizeList(const std::string& text, const char* what) {
  std::vector<size_t> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<size_t>(v));
    } catch (const std::exception&) {
      throw Error(std::string("bad ") + what + " list entry '" + item + "'");
    }
  }
  return out;
}

std::vector<double> parseDoubleList(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(std::string("bad ") + what + " list entry '" + item + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------- verbs

struct PrepareArgs {
  std::string interactions;
  std::string visual;
  std::string textual;
  size_t kcore = 5;
};

int doPrepare(const Common& c, const PrepareArgs& a, std::ostream& out) {
  const TrainConfig config = resolve(c);
  const fs::path dir = requireOutDir(c);
  const RawInteractions raw = loadInteractions(a.interactions);
  const RawInteractions core = kcoreFilter(raw, a.kcore);
  InteractionDataset ds = split(core, SplitRatios{}, config.seed);
  writeSplitManifest(ds, dir);

  std::map<std::string, std::string> inputs;
  inputs["interactions"] = io::fileHash(a.interactions);
  size_t modalities = 0;
  for (const auto& [modality, file] :
       std::vector<std::pair<Modality, std::string>>{
         {Modality::Visual, a.visual}, {Modality::Textual, a.textual}}) {
    if (file.empty()) continue;
    const ModalityFeatures f = loadFeatures(file, modality, ds);
    const fs::path target = dir / (std::string(modalityName(modality)) + ".mmft");
    io::writeMatrix(target, f.matrix);
    io::writeTokens(io::tokenSidecar(target), ds.items.tokens());
    inputs[std::string(modalityName(modality))] = io::fileHash(file);
    ++modalities;
  }
  if (modalities == 0) {
    throw Error("prepare needs at least one of --visual / --textual");
  }

  json stats;
  stats["users"] = ds.numUsers;
  stats["items"] = ds.numItems;
  stats["interactions"] = ds.numInteractions();
  stats["train"] = ds.trainSize();
  stats["sparsity"] = ds.sparsity();
  stats["duplicates_collapsed"] = raw.duplicatesCollapsed;
  stats["records_before_kcore"] = raw.records.size();
  stats["kcore"] = a.kcore;
  stats["warnings"] = ds.warnings;
  writeJson(dir / "dataset.json", stats);
  writeRunManifest(dir, "prepare", config, inputs, {{"dataset", stats}});
  out << "users " << ds.numUsers << ", items " << ds.numItems
      << ", interactions " << ds.numInteractions() << ", sparsity "
      << fixed(ds.sparsity() * 100, 2) << "%\n";
  for (const auto& w : ds.warnings) {
    out << "warning: " << w << "\n";
  }
  return 0;
}

struct GraphArgs {
  std::string data;
  bool tsv = false;
};

int doBuildGraphs(const Common& c, const GraphArgs& a, std::ostream& out) {
  const TrainConfig config = resolve(c);
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  const BipartiteAdjacency adj = buildBipartite(data.dataset);
  std::vector<ModalityFeatures> features = data.features;
  const ItemItemGraphs graphs =
    buildItemGraphs(features, config.k, config.item_graph_normalize);

  json hashes;
  auto emit = [&](const std::string& name, const SparseGraph& g) {
    const fs::path path = dir / (name + ".csrg");
    writeGraph(path, g);
    if (a.tsv) {
      writeGraphTsv(dir / (name + ".tsv"), g);
    }
    hashes[name] = {{"file", path.filename().string()},
                    {"rows", g.rows},
                    {"cols", g.cols},
                    {"nnz", g.colIdx.size()},
                    {"hash", graphHash(g)}};
    out << name << ": " << g.rows << "x" << g.cols << ", " << g.colIdx.size()
        << " edges, " << graphHash(g) << "\n";
  };
  emit("user_item", adj.userToItem);
  emit("item_user", adj.itemToUser);
  for (size_t m = 0; m < graphs.modalities.size(); ++m) {
    emit("item_item_" + std::string(modalityCode(graphs.modalities[m])),
         graphs.graphs[m]);
  }
  writeJson(dir / "graphs.json", hashes);
  writeRunManifest(dir, "build-graphs", config, prefixed("data/", data.hashes),
                   {{"graphs", hashes}});
  return 0;
}

struct TrainArgs {
  std::string data;
  bool verbose = false;
};

int doTrain(const Common& c, const TrainArgs& a, std::ostream& out) {
  const TrainConfig config = resolve(c);
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  std::vector<Modality> modalities;
  for (const auto& f : data.features) modalities.push_back(f.modality);

  std::string history;
  const FitResult result = fit(
    data.dataset, data.features, config,
    [&](const EpochRecord& r, const ModelParameters&) {
      history += historyLine(r, modalities);
      if (a.verbose) {
        out << "epoch " << r.epoch << " loss " << fixed(r.loss.total, 6)
            << " val R@20 " << fixed(r.valRecall.at(20)) << "\n";
      }
    });

  Checkpoint ckpt{result.best, config, result.bestStep, result.bestEpoch,
                  result.bestValRecall};
  writeCheckpoint(ckpt, dir / "checkpoint");
  io::writeFileAtomic(dir / "history.jsonl", history);
  auto inputs = prefixed("data/", data.hashes);
  writeRunManifest(dir, "train", config, inputs,
                   {{"best_epoch", result.bestEpoch},
                    {"best_val_recall_20", result.bestValRecall},
                    {"epochs_run", result.history.size()},
                    {"diverged", result.diverged},
                    {"stop_reason", result.stopReason}});
  out << result.stopReason << "\n"
      << "best epoch " << result.bestEpoch << ", val R@20 "
      << fixed(result.bestValRecall) << "\n";
  return result.diverged ? 3 : 0;
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string split = "test";
  std::string ks = "10,20";
  bool perUser = false;
};

int doEvaluate(const Common& c, const EvalArgs& a, std::ostream& out) {
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  const LoadedModel model = loadModel(a.checkpoint, data);
  const TrainConfig& config = model.checkpoint.config;
  if (config.deterministic) setSingleThreaded();
  const Split split = parseSplit(a.split);
  const ForwardTrace trace =
    forward(model.checkpoint.params, model.context, config.L);
  const MetricReport report = evaluate(trace.fused, data.dataset, split,
                                       parseSizeList(a.ks, "k"), a.perUser);
  const std::string name(splitName(split));
  io::writeFileAtomic(dir / ("metrics_" + name + ".json"), reportJson(report));
  io::writeFileAtomic(dir / ("metrics_" + name + ".txt"), reportTable(report));
  if (a.perUser) {
    io::writeFileAtomic(dir / ("per_user_" + name + ".csv"),
                        reportPerUserCsv(report, data.dataset));
  }
  auto inputs = prefixed("data/", data.hashes);
  inputs.insert(model.hashes.begin(), model.hashes.end());
  writeRunManifest(dir, "evaluate", config, inputs, {{"split", name}});
  out << reportTable(report);
  return 0;
}

struct GridArgs {
  std::string data;
  std::string lambda;
  std::string lambdaC;
  std::string k;
  std::string tau;
  size_t workers = 1;
};

int doGridsearch(const Common& c, const GridArgs& a, std::ostream& out) {
  const TrainConfig config = resolve(c);
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  GridSpec spec;
  if (!a.lambda.empty()) spec.lambda = parseDoubleList(a.lambda, "lambda");
  if (!a.lambdaC.empty()) spec.lambda_c = parseDoubleList(a.lambdaC, "lambda_c");
  if (!a.k.empty()) spec.k = parseSizeList(a.k, "k");
  if (!a.tau.empty()) spec.tau = parseDoubleList(a.tau, "tau");
  const GridResult grid =
    gridSearch(data.dataset, data.features, config, spec, a.workers);

  json rows = json::array();
  for (const auto& r : grid.rows) {
    rows.push_back({{"index", r.index},
                    {"lambda", r.point.lambda},
                    {"lambda_c", r.point.lambda_c},
                    {"k", r.point.k},
                    {"tau", r.point.tau},
                    {"seed", r.seed},
                    {"val_R@20", r.bestValRecall},
                    {"val_N@20", r.bestValNdcg},
                    {"best_epoch", r.bestEpoch},
                    {"epochs_run", r.epochsRun},
                    {"best", r.best}});
  }
  writeJson(dir / "grid.json", rows);
  io::writeFileAtomic(dir / "grid.txt", gridTable(grid));
  writeRunManifest(dir, "gridsearch", config, prefixed("data/", data.hashes));
  out << gridTable(grid);
  return 0;
}

struct AblateArgs {
  std::string data;
  std::string layers = "1,2,3,4";
  bool noClVariant = true;
};

int doAblate(const Common& c, const AblateArgs& a, std::ostream& out) {
  const TrainConfig base = resolve(c);
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  const GraphContext ctx = buildContext(data.dataset, data.features, base.k,
                                        base.item_graph_normalize);

  struct Row {
    std::string variant;
    size_t layers;
    double lambdaC;
    MetricReport test;
    double valRecall;
    size_t bestEpoch;
  };
  std::vector<Row> rows;
  auto runVariant = [&](const std::string& name, TrainConfig cfg) {
    const FitResult r = fit(data.dataset, ctx, data.features, cfg);
    const ForwardTrace trace = forward(r.best, ctx, cfg.L);
    rows.push_back({name, cfg.L, cfg.lambda_c,
                    evaluate(trace.fused, data.dataset, Split::Test, {20}),
                    r.bestValRecall, r.bestEpoch});
  };
  for (size_t layers : parseSizeList(a.layers, "layers")) {
    TrainConfig cfg = base;
    cfg.L = layers;
    runVariant("L=" + std::to_string(layers), cfg);
  }
  if (a.noClVariant) {
    TrainConfig cfg = base;
    cfg.lambda_c = 0;
    runVariant("L=" + std::to_string(base.L) + ", lambda_c=0", cfg);
  }

  json j = json::array();
  std::ostringstream table;
  table << std::left << std::setw(20) << "variant" << std::right
        << std::setw(10) << "R@20" << std::setw(10) << "N@20" << std::setw(12)
        << "val R@20" << std::setw(8) << "epoch" << "\n";
  for (const auto& r : rows) {
    j.push_back({{"variant", r.variant},
                 {"L", r.layers},
                 {"lambda_c", r.lambdaC},
                 {"test_R@20", r.test.recall.at(20)},
                 {"test_N@20", r.test.ndcg.at(20)},
                 {"val_R@20", r.valRecall},
                 {"best_epoch", r.bestEpoch}});
    table << std::left << std::setw(20) << r.variant << std::right
          << std::setw(10) << fixed(r.test.recall.at(20)) << std::setw(10)
          << fixed(r.test.ndcg.at(20)) << std::setw(12) << fixed(r.valRecall)
          << std::setw(8) << r.bestEpoch << "\n";
  }
  writeJson(dir / "ablation.json", j);
  io::writeFileAtomic(dir / "ablation.txt", table.str());
  writeRunManifest(dir, "ablate", base, prefixed("data/", data.hashes));
  out << table.str();
  return 0;
}

struct GradcheckArgs {
  double h = 1e-5;
  double tolerance = 1e-4;
  bool featureProjection = false;
  uint64_t fixtureSeed = 7;
};

int doGradcheck(const Common& c, const GradcheckArgs& a, std::ostream& out) {
  const GradcheckInstance instance =
    defaultGradcheckInstance(a.fixtureSeed, a.featureProjection);
  const GradcheckReport report = finiteDiffCheck(instance, a.h, a.tolerance);
  json j;
  j["h"] = a.h;
  j["tolerance"] = a.tolerance;
  j["passed"] = report.passed;
  j["max_rel_error"] = report.maxRelError;
  j["seconds"] = report.seconds;
  std::ostringstream table;
  table << std::left << std::setw(18) << "tensor" << std::right
        << std::setw(8) << "coords" << std::setw(14) << "max rel err"
        << std::setw(14) << "max abs err" << "  status\n";
  for (const auto& t : report.tensors) {
    j["tensors"].push_back({{"name", t.name},
                            {"coordinates", t.coordinates},
                            {"max_rel_error", t.maxRelError},
                            {"max_abs_error", t.maxAbsError},
                            {"passed", t.passed}});
    char rel[32], abs[32];
    std::snprintf(rel, sizeof rel, "%.3e", t.maxRelError);
    std::snprintf(abs, sizeof abs, "%.3e", t.maxAbsError);
    table << std::left << std::setw(18) << t.name << std::right
          << std::setw(8) << t.coordinates << std::setw(14) << rel
          << std::setw(14) << abs << "  " << (t.passed ? "ok" : "FAIL") << "\n";
  }
  table << (report.passed ? "PASS" : "FAIL") << " (tolerance " << a.tolerance
        << ", " << fixed(report.seconds, 3) << " s)\n";
  if (!c.outDir.empty()) {
    const fs::path dir = requireOutDir(c);
    writeJson(dir / "gradcheck.json", j);
    io::writeFileAtomic(dir / "gradcheck.txt", table.str());
  }
  out << table.str();
  return report.passed ? 0 : 1;
}

struct ExportArgs {
  std::string data;
  std::string checkpoint;
  std::vector<std::string> selectors;
  bool all = false;
};

int doExport(const Common& c, const ExportArgs& a, std::ostream& out) {
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  const LoadedModel model = loadModel(a.checkpoint, data);
  const ModelParameters& p = model.checkpoint.params;
  const ForwardTrace trace =
    forward(p, model.context, model.checkpoint.config.L);
  std::vector<std::string> selectors = a.selectors;
  if (a.all) {
    selectors = {"fused"};
    for (Modality m : p.modalities) {
      const std::string code(modalityCode(m));
      for (const char* kind : {"ego:", "neighbor:", "modal_final:"}) {
        if (std::string(kind) == "neighbor:" && trace.neighbor.empty()) continue;
        selectors.push_back(kind + code);
      }
    }
  }
  if (selectors.empty()) selectors = {"fused"};
  json files;
  for (const auto& s : selectors) {
    const fs::path path = exportEmbeddings(trace, p, data.dataset, s, dir);
    files[s] = {{"file", path.filename().string()},
                {"hash", io::fileHash(path)}};
    out << s << " -> " << path.string() << "\n";
  }
  auto inputs = prefixed("data/", data.hashes);
  inputs.insert(model.hashes.begin(), model.hashes.end());
  writeRunManifest(dir, "export", model.checkpoint.config, inputs,
                   {{"exports", files}});
  return 0;
}

struct DiagnoseArgs {
  std::string data;
  std::string checkpoint;
  std::string compare;
  std::string selector = "fused";
  size_t samplePairs = 100000;
  uint64_t seed = 0;
};

int doDiagnose(const Common& c, const DiagnoseArgs& a, std::ostream& out) {
  const fs::path dir = requireOutDir(c);
  const DataBundle data = loadData(a.data);
  auto embed = [&](const std::string& ckpt, LoadedModel& model) {
    model = loadModel(ckpt, data);
    const ForwardTrace trace = forward(model.checkpoint.params, model.context,
                                       model.checkpoint.config.L);
    return selectEmbeddings(trace, model.checkpoint.params, a.selector);
  };
  LoadedModel first;
  const Matrix ea = embed(a.checkpoint, first);
  auto inputs = prefixed("data/", data.hashes);
  inputs.insert(first.hashes.begin(), first.hashes.end());
  std::string text;
  if (a.compare.empty()) {
    const DispersionReport r =
      dispersionReport(ea, data.dataset.numUsers, a.samplePairs, a.seed);
    text = dispersionJson(r);
    io::writeFileAtomic(dir / "dispersion.json", text);
  } else {
    LoadedModel second;
    const Matrix eb = embed(a.compare, second);
    for (const auto& [k, v] : second.hashes) inputs["compare/" + k] = v;
    const VariantComparison cmp = compareVariants(
      ea, eb, data.dataset.numUsers, a.samplePairs, a.seed);
    text = comparisonJson(cmp);
    io::writeFileAtomic(dir / "comparison.json", text);
  }
  writeRunManifest(dir, "diagnose", first.checkpoint.config, inputs,
                   {{"selector", a.selector}, {"sample_pairs", a.samplePairs}});
  out << text;
  return 0;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Multimodal graph recommender: data preparation, training, "
               "evaluation and diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.configPath, "key = value config file")
    ->check(CLI::ExistingFile);
  app.add_option("--out-dir", common.outDir, "Output directory");
  app.add_flag("--deterministic,!--no-deterministic", common.deterministic,
               "Single-threaded, bitwise reproducible runs (default on)");
  for (const auto& key : TrainConfig::keys()) {
    if (key == "deterministic") continue;
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (key == "L") flag += ",--layers";
    if (key == "d") flag += ",--dim";
    app.add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.overrides[key] = v; },
      "Override config key " + key);
  }

  PrepareArgs prepare;
  auto* cPrepare = app.add_subcommand("prepare", "Filter, split and align raw data");
  cPrepare->add_option("--interactions", prepare.interactions, "Interaction TSV")
    ->required()->check(CLI::ExistingFile);
  cPrepare->add_option("--visual", prepare.visual, "Visual features (MMFT)")
    ->check(CLI::ExistingFile);
  cPrepare->add_option("--textual", prepare.textual, "Textual features (MMFT)")
    ->check(CLI::ExistingFile);
  cPrepare->add_option("--kcore", prepare.kcore, "k-core threshold")
    ->capture_default_str();

  GraphArgs graphs;
  auto* cGraphs = app.add_subcommand("build-graphs", "Build and serialize graphs");
  cGraphs->add_option("--data", graphs.data, "Prepared data directory")->required();
  cGraphs->add_flag("--tsv", graphs.tsv, "Also dump TSV edge lists");

  TrainArgs train;
  auto* cTrain = app.add_subcommand("train", "Train with early stopping");
  cTrain->add_option("--data", train.data, "Prepared data directory")->required();
  cTrain->add_flag("-v,--verbose", train.verbose, "Print one line per epoch");

  EvalArgs evalArgs;
  auto* cEval = app.add_subcommand("evaluate", "Full-ranking evaluation");
  cEval->add_option("--data", evalArgs.data, "Prepared data directory")->required();
  cEval->add_option("--checkpoint", evalArgs.checkpoint, "Checkpoint directory")->required();
  cEval->add_option("--split", evalArgs.split, "train | val | test")->capture_default_str();
  cEval->add_option("--ks", evalArgs.ks, "Comma-separated cutoffs")->capture_default_str();
  cEval->add_flag("--per-user", evalArgs.perUser, "Write per-user CSV");

  GridArgs grid;
  auto* cGrid = app.add_subcommand("gridsearch", "Grid search on validation R@20");
  cGrid->add_option("--data", grid.data, "Prepared data directory")->required();
  cGrid->add_option("--grid-lambda", grid.lambda, "Comma-separated lambda values");
  cGrid->add_option("--grid-lambda-c", grid.lambdaC, "Comma-separated lambda_c values");
  cGrid->add_option("--grid-k", grid.k, "Comma-separated k values");
  cGrid->add_option("--grid-tau", grid.tau, "Comma-separated tau values");
  cGrid->add_option("--workers", grid.workers, "Parallel trainings")->capture_default_str();

  AblateArgs ablate;
  auto* cAblate = app.add_subcommand("ablate", "Layer-depth sweep plus lambda_c = 0");
  cAblate->add_option("--data", ablate.data, "Prepared data directory")->required();
  cAblate->add_option("--layer-list", ablate.layers, "Depths to train")->capture_default_str();
  cAblate->add_flag("!--skip-no-cl", ablate.noClVariant, "Skip the lambda_c = 0 row");

  GradcheckArgs gradcheck;
  auto* cGrad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  cGrad->add_option("--step", gradcheck.h, "Finite-difference step")->capture_default_str();
  cGrad->add_option("--tolerance", gradcheck.tolerance, "Max relative error")->capture_default_str();
  cGrad->add_flag("--projection", gradcheck.featureProjection, "Check feature-projection mode");
  cGrad->add_option("--fixture-seed", gradcheck.fixtureSeed, "Fixture seed")->capture_default_str();

  ExportArgs exportArgs;
  auto* cExport = app.add_subcommand("export", "Export embeddings as MMFT");
  cExport->add_option("--data", exportArgs.data, "Prepared data directory")->required();
  cExport->add_option("--checkpoint", exportArgs.checkpoint, "Checkpoint directory")->required();
  cExport->add_option("--selector", exportArgs.selectors,
                      "fused | ego:v | neighbor:t | modal_final:v (repeatable)");
  cExport->add_flag("--all", exportArgs.all, "Export every representation");

  DiagnoseArgs diagnose;
  auto* cDiag = app.add_subcommand("diagnose", "Embedding dispersion statistics");
  cDiag->add_option("--data", diagnose.data, "Prepared data directory")->required();
  cDiag->add_option("--checkpoint", diagnose.checkpoint, "Checkpoint directory")->required();
  cDiag->add_option("--compare", diagnose.compare, "Second checkpoint to compare against");
  cDiag->add_option("--selector", diagnose.selector, "Representation")->capture_default_str();
  cDiag->add_option("--sample-pairs", diagnose.samplePairs, "Pairs sampled above 2000 rows")
    ->capture_default_str();
  cDiag->add_option("--dispersion-seed", diagnose.seed, "Sampling seed")->capture_default_str();

  std::vector<std::string> argv(args.begin(), args.end());
  std::reverse(argv.begin(), argv.end());
  if (!argv.empty()) argv.pop_back();  // program name
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  common.deterministicCount = app.count("--deterministic") + app.count("--no-deterministic");

  try {
    // Overrides are validated up front, even for verbs that ignore them.
    resolve(common);
    if (*cPrepare) return doPrepare(common, prepare, out);
    if (*cGraphs) return doBuildGraphs(common, graphs, out);
    if (*cTrain) return doTrain(common, train, out);
    if (*cEval) return doEvaluate(common, evalArgs, out);
    if (*cGrid) return doGridsearch(common, grid, out);
    if (*cAblate) return doAblate(common, ablate, out);
    if (*cGrad) return doGradcheck(common, gradcheck, out);
    if (*cExport) return doExport(common, exportArgs, out);
    if (*cDiag) return doDiagnose(common, diagnose, out);
  } catch (const ConfigError& e) {
    err << "error: invalid configuration\n";
    for (const auto& p : e.problems()) err << "  " << p << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace mgrec::cli
