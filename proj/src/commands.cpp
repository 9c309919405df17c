#include "planex/commands.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "planex/digest.hpp"
#include "planex/environment.hpp"
#include "planex/log.hpp"
#include "planex/simulator.hpp"

namespace planex {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- RunConfig ----

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path fp(p);
  return fp.is_absolute() ? fp : (base / fp).lexically_normal();
}

BackendKind parse_backend_kind(const std::string& text) {
  if (text == "simulator") return BackendKind::kSimulator;
  if (text == "remote") return BackendKind::kRemote;
  throw ConfigError("unknown backend kind '" + text + "'");
}

std::string path_string(const fs::path& p) { return p.empty() ? std::string() : p.string(); }

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
  RunConfig c;
  try {
    for (const auto& p : j.value("train", json::array())) {
      c.train.push_back(resolve(base, p.get<std::string>()));
    }
    c.test = resolve(base, j.value("test", std::string()));
    c.output_dir = resolve(base, j.value("output_dir", c.output_dir.string()));
    c.seed = j.value("seed", c.seed);
    c.train_sample = j.value("train_sample", c.train_sample);
    c.test_sample = j.value("test_sample", c.test_sample);
    c.policy = j.value("policy", c.policy);
    c.trace = j.value("trace", c.trace);

    const json b = j.value("backend", json::object());
    c.backend.kind = parse_backend_kind(b.value("kind", std::string("simulator")));
    c.backend.world = resolve(base, b.value("world", std::string()));
    c.backend.prompts = resolve(base, b.value("prompts", std::string()));
    c.backend.prompt_examples = resolve(base, b.value("prompt_examples", std::string()));
    c.backend.aliases = resolve(base, b.value("aliases", std::string()));
    c.backend.extractor = BackendConfig::from_json(b.value("extractor", json::object()));
    if (b.contains("judge")) c.backend.judge = BackendConfig::from_json(b.at("judge"));
    c.backend.transcripts =
        parse_transcript_mode(b.value("transcripts", std::string("passthrough")));
    c.backend.transcript_path = resolve(base, b.value("transcript_path", std::string()));

    c.reward = RewardConfig::from_json(j.value("reward", json::object()));
    c.training = TrainConfig::from_json(j.value("training", json::object()));
    c.match = MatchConfig::from_json(j.value("match", json::object()));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.policy != "greedy" && c.policy != "fixed" && c.policy != "random") {
    throw ConfigError("policy must be greedy, fixed or random");
  }
  c.training.seed = c.seed;
  c.tokenizer_from_manifest = !j.value("reward", json::object()).contains("tokenizer") &&
                              !j.value("match", json::object()).contains("tokenizer");
  return c;
}

RunConfig with_dataset_language(RunConfig config, LanguageMode language) {
  if (config.tokenizer_from_manifest) {
    config.reward.tokens = token_mode_for(language);
    config.match.tokens = token_mode_for(language);
    config.tokenizer_from_manifest = false;
  }
  return config;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::to_json() const {
  json train_paths = json::array();
  for (const auto& p : train) train_paths.push_back(p.string());
  json backend_json{{"kind", backend.kind == BackendKind::kSimulator ? "simulator" : "remote"},
                    {"world", path_string(backend.world)},
                    {"prompts", path_string(backend.prompts)},
                    {"prompt_examples", path_string(backend.prompt_examples)},
                    {"aliases", path_string(backend.aliases)},
                    {"extractor", backend.extractor.to_json()},
                    {"transcripts", to_string(backend.transcripts)},
                    {"transcript_path", path_string(backend.transcript_path)}};
  if (backend.judge) backend_json["judge"] = backend.judge->to_json();
  return {{"train", train_paths},
          {"test", path_string(test)},
          {"output_dir", output_dir.string()},
          {"seed", seed},
          {"train_sample", train_sample},
          {"test_sample", test_sample},
          {"policy", policy},
          {"trace", trace},
          {"backend", backend_json},
          {"reward", reward.to_json()},
          {"training", training.to_json()},
          {"match", match.to_json()}};
}

// The output directory does not affect results and is left out.
std::string RunConfig::digest() const {
  json j = to_json();
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

void write_config_snapshot(const RunConfig& config) {
  fs::create_directories(config.output_dir);
  json snapshot = config.to_json();
  snapshot["digest"] = config.digest();
  std::ofstream out(config.output_dir / "run_config.json");
  out << snapshot.dump(2) << '\n';
}

std::vector<TaskInstance> sample_instances(const std::vector<TaskInstance>& items, size_t k,
                                           uint64_t seed) {
  if (k == 0 || k >= items.size()) return items;
  std::vector<size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<TaskInstance> out;
  out.reserve(k);
  for (size_t i : idx) out.push_back(items[i]);
  return out;
}

// ---- wiring ----

namespace {

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " is not set");
  if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

struct Backends {
  std::shared_ptr<SimulatorBackend> sim;
  std::shared_ptr<RemoteBackend> remote;
  std::shared_ptr<RemoteBackend> remote_judge;
  std::unique_ptr<AliasJudge> alias;
  Classifier* classifier = nullptr;
  Extractor* extractor = nullptr;
  Judge* judge = nullptr;
  int concurrency = 1;

  size_t network_calls() const {
    size_t n = remote ? remote->network_calls() : 0;
    if (remote_judge && remote_judge != remote) n += remote_judge->network_calls();
    return n;
  }
};

Backends make_backends(const RunConfig& config, const CommandContext& ctx) {
  Backends b;
  const auto& s = config.backend;
  b.concurrency = s.extractor.concurrency;
  if (s.kind == BackendKind::kSimulator) {
    require_file(s.world, "backend.world");
    b.sim = std::make_shared<SimulatorBackend>(
        std::make_shared<SimWorld>(SimWorld::load_jsonl(s.world)));
    b.classifier = b.sim.get();
    b.extractor = b.sim.get();
  }

  const bool needs_remote =
      s.kind == BackendKind::kRemote || config.reward.judge == JudgeKind::kLlm;
  std::shared_ptr<TranscriptStore> transcripts;
  std::shared_ptr<Transport> transport = ctx.transport;
  PromptSet prompts;
  if (needs_remote) {
    if (s.transcripts != TranscriptMode::kPassthrough) {
      if (s.transcript_path.empty()) throw ConfigError("backend.transcript_path is not set");
      if (s.transcripts == TranscriptMode::kReplay) {
        require_file(s.transcript_path, "backend.transcript_path");
      }
      transcripts = std::make_shared<TranscriptStore>(s.transcripts, s.transcript_path);
    }
    if (!transport) transport = std::make_shared<HttpTransport>();
    if (!s.prompts.empty()) prompts = PromptSet::from_directory(s.prompts);
    if (!s.prompt_examples.empty()) {
      require_file(s.prompt_examples, "backend.prompt_examples");
      prompts.examples = PromptExamples::load_json(s.prompt_examples);
    }
  }
  if (s.kind == BackendKind::kRemote) {
    if (s.extractor.endpoint.empty() && s.transcripts != TranscriptMode::kReplay) {
      throw ConfigError("backend.extractor.endpoint is not set");
    }
    b.remote = std::make_shared<RemoteBackend>(s.extractor, prompts, transport, transcripts);
    b.classifier = b.remote.get();
    b.extractor = b.remote.get();
  }
  if (config.reward.judge == JudgeKind::kLlm) {
    if (s.judge || !b.remote) {
      b.remote_judge = std::make_shared<RemoteBackend>(s.judge.value_or(s.extractor), prompts,
                                                       transport, transcripts);
    } else {
      b.remote_judge = b.remote;
    }
    b.judge = b.remote_judge.get();
  } else {
    AliasTable table;
    if (!s.aliases.empty()) {
      require_file(s.aliases, "backend.aliases");
      table = AliasTable::load_tsv(s.aliases);
    }
    b.alias = std::make_unique<AliasJudge>(std::move(table));
    b.judge = b.alias.get();
  }
  return b;
}

// Index-ordered parallel map; results are written by the caller.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& j) { open_output(path) << j.dump(2) << '\n'; }

std::ostream& out_stream(const CommandContext& ctx) {
  return ctx.out != nullptr ? *ctx.out : std::cout;
}

}  // namespace

// ---- train ----

int cmd_train(const RunConfig& input, const CommandContext& ctx) {
  if (input.train.empty()) throw ConfigError("no train manifests configured");
  for (const auto& p : input.train) require_file(p, "train manifest");

  std::vector<TrainSet> sets;
  std::optional<DatasetManifest> first;
  for (const auto& path : input.train) {
    auto ds = load_dataset_from_manifest(path);
    for (const auto& d : ds.diagnostics) {
      log_warning(path.string() + ":" + std::to_string(d.line) + ": " + d.message);
    }
    if (first && (first->language != ds.manifest.language || first->task != ds.manifest.task)) {
      throw ConfigError("train sets mix languages or task types: " + first->name + " vs " +
                        ds.manifest.name);
    }
    if (!first) first = ds.manifest;
    auto instances = sample_instances(ds.instances, input.train_sample, input.seed);
    auto set = episode_seeds(instances, ds.registry);
    if (set.empty()) throw DataError("train set " + path.string() + " has no usable instances");
    sets.push_back(std::move(set));
  }
  const RunConfig config = with_dataset_language(input, first->language);

  auto backends = make_backends(config, ctx);
  RewardModule reward(config.reward, *backends.judge);

  write_config_snapshot(config);
  auto log = open_output(config.output_dir / "train_log.jsonl");
  auto result = train(sets, *backends.extractor, reward, config.training, &log);
  result.net.save(config.output_dir / "checkpoint.bin", config.digest());
  const json summary{{"episodes", result.stats.episodes},
                     {"skipped", result.stats.skipped},
                     {"steps", result.stats.steps},
                     {"updates", result.stats.updates},
                     {"target_syncs", result.stats.syncs},
                     {"judge_calls", reward.judge_calls()},
                     {"network_calls", backends.network_calls()}};
  write_json(config.output_dir / "train_summary.json", summary);
  out_stream(ctx) << "trained " << result.stats.episodes << " episodes, "
                  << result.stats.updates << " updates; checkpoint at "
                  << (config.output_dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

// ---- extract ----

namespace {

struct Prepared {
  Dataset dataset;
  std::vector<TaskInstance> instances;
};

Prepared load_test_set(const RunConfig& config) {
  require_file(config.test, "test manifest");
  Prepared p{load_dataset_from_manifest(config.test), {}};
  for (const auto& d : p.dataset.diagnostics) {
    log_warning(config.test.string() + ":" + std::to_string(d.line) + ": " + d.message);
  }
  p.instances = sample_instances(p.dataset.instances, config.test_sample, config.seed);
  return p;
}

}  // namespace

int cmd_extract(const RunConfig& input, const fs::path& checkpoint, const CommandContext& ctx) {
  auto prepared = load_test_set(input);
  const RunConfig config = with_dataset_language(input, prepared.dataset.manifest.language);
  const auto& registry = prepared.dataset.registry;
  const auto& instances = prepared.instances;
  QNetwork net;
  if (config.policy == "greedy") {
    require_file(checkpoint, "checkpoint");
    net = QNetwork::load(checkpoint);
  }
  auto backends = make_backends(config, ctx);

  struct Result {
    json record;
    std::vector<json> trace;
    size_t errors = 0;
  };
  std::vector<Result> results(instances.size());
  parallel_for(instances.size(), backends.concurrency, [&](size_t i) {
    const auto& inst = instances[i];
    Result& r = results[i];
    json outputs = json::array();
    json errors = json::array();
    std::vector<std::string> types;
    try {
      types = backends.classifier->classify(inst.sentence, registry.type_labels());
    } catch (const BackendError& e) {
      errors.push_back({{"stage", "classify"}, {"error", e.what()}});
    }
    Policy policy;
    if (config.policy == "greedy") {
      policy = greedy_policy(net);
    } else if (config.policy == "fixed") {
      policy = fixed_order_policy();
    } else {
      policy = random_policy(config.seed * 1000003ULL + i);
    }
    for (const auto& type : types) {
      const auto initial = reset(inst.sentence, derive_role_schema(type, registry)).first;
      auto ep = run_episode(initial, policy, *backends.extractor, nullptr, nullptr);
      if (ep.aborted) {
        errors.push_back({{"stage", "extract"}, {"type", type}, {"error", ep.error}});
        continue;
      }
      outputs.push_back(output_to_json(ep.output));
      if (config.trace) {
        for (size_t k = 0; k < ep.transitions.size(); ++k) {
          json line = trace_record(ep.transitions[k], ep.replies[k]);
          line["id"] = inst.id;
          r.trace.push_back(std::move(line));
        }
      }
    }
    r.errors = errors.size();
    r.record = {{"id", inst.id},
                {"sentence", inst.sentence},
                {"types", types},
                {"outputs", std::move(outputs)}};
    if (!errors.empty()) r.record["errors"] = std::move(errors);
  });

  write_config_snapshot(config);
  auto out = open_output(config.output_dir / "predictions.jsonl");
  std::optional<std::ofstream> trace;
  if (config.trace) trace = open_output(config.output_dir / "trace.jsonl");
  size_t errors = 0, outputs = 0;
  for (const auto& r : results) {
    out << r.record.dump() << '\n';
    errors += r.errors;
    outputs += r.record.at("outputs").size();
    if (trace) {
      for (const auto& line : r.trace) *trace << line.dump() << '\n';
    }
  }
  write_json(config.output_dir / "extract_summary.json",
             {{"instances", instances.size()},
              {"outputs", outputs},
              {"errors", errors},
              {"policy", config.policy},
              {"network_calls", backends.network_calls()}});
  out_stream(ctx) << "extracted " << outputs << " records from " << instances.size()
                  << " instances (" << errors << " errors)\n";
  return kExitOk;
}

// ---- classify ----

int cmd_classify(const RunConfig& input, const CommandContext& ctx) {
  auto prepared = load_test_set(input);
  const RunConfig config = with_dataset_language(input, prepared.dataset.manifest.language);
  const auto& instances = prepared.instances;
  const auto& candidates = prepared.dataset.registry.type_labels();
  auto backends = make_backends(config, ctx);

  std::vector<json> records(instances.size());
  std::vector<char> exact(instances.size(), 0);
  parallel_for(instances.size(), backends.concurrency, [&](size_t i) {
    const auto& inst = instances[i];
    json rec{{"id", inst.id}, {"types", json::array()}};
    try {
      auto types = backends.classifier->classify(inst.sentence, candidates);
      std::set<std::string> got(types.begin(), types.end());
      std::set<std::string> want;
      for (const auto& g : inst.gold_records) want.insert(g.type_label);
      exact[i] = got == want;
      rec["types"] = std::move(types);
    } catch (const BackendError& e) {
      rec["error"] = e.what();
    }
    records[i] = std::move(rec);
  });

  write_config_snapshot(config);
  auto out = open_output(config.output_dir / "classified.jsonl");
  for (const auto& r : records) out << r.dump() << '\n';
  const size_t correct = static_cast<size_t>(std::count(exact.begin(), exact.end(), 1));
  const double accuracy =
      instances.empty() ? 0.0 : static_cast<double>(correct) / instances.size();
  write_json(config.output_dir / "classify_summary.json",
             {{"instances", instances.size()},
              {"exact_type_sets", correct},
              {"accuracy", accuracy},
              {"network_calls", backends.network_calls()}});
  out_stream(ctx) << "classified " << instances.size() << " instances, accuracy " << accuracy
                  << '\n';
  return kExitOk;
}

// ---- evaluate ----

namespace {

std::vector<InstancePredictions> load_predictions(const fs::path& path,
                                                  const SchemaRegistry& registry) {
  require_file(path, "predictions file");
  std::ifstream in(path);
  std::vector<InstancePredictions> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      InstancePredictions p{j.at("id").get<std::string>(), {}};
      for (const auto& o : j.value("outputs", json::array())) {
        auto output = output_from_json(o);
        if (!registry.contains(output.type_label)) {
          throw DataError(where + ": type '" + output.type_label +
                          "' is not in the gold schema registry");
        }
        const auto& roles = registry.get(output.type_label).roles;
        for (const auto& [role, args] : output.role_args) {
          if (std::find(roles.begin(), roles.end(), role) == roles.end()) {
            throw DataError(where + ": role '" + role + "' is not in the schema of '" +
                            output.type_label + "'");
          }
        }
        p.outputs.push_back(std::move(output));
      }
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

std::string kind_name(ComplicatedKind kind) {
  return kind == ComplicatedKind::kMinTriples ? "min-triples" : "min-roles";
}

}  // namespace

int cmd_evaluate(const RunConfig& input, const EvaluateOptions& options,
                 const CommandContext& ctx) {
  if (options.predictions.empty()) throw ConfigError("no predictions files given");
  auto prepared = load_test_set(input);
  const RunConfig config = with_dataset_language(input, prepared.dataset.manifest.language);
  const auto& golds = prepared.instances;
  const auto& registry = prepared.dataset.registry;

  std::vector<std::vector<InstancePredictions>> runs;
  for (const auto& p : options.predictions) runs.push_back(load_predictions(p, registry));

  std::vector<EvalReport> full;
  for (const auto& preds : runs) full.push_back(score(preds, golds, config.match));

  json report{{"match", config.match.to_json()}, {"runs", json::array()}};
  for (const auto& r : full) report["runs"].push_back(r.to_json(false));
  const auto average = average_runs(full);
  report["average"] = average.to_json(false);
  std::string table = average.table("full");

  if (options.complicated) {
    const auto subset =
        filter_complicated(golds, *options.complicated, options.complicated_n, registry);
    std::set<std::string> keep;
    for (const auto& inst : subset) keep.insert(inst.id);
    std::vector<EvalReport> sub_reports;
    for (const auto& preds : runs) {
      std::vector<InstancePredictions> kept;
      for (const auto& p : preds) {
        if (keep.count(p.id)) kept.push_back(p);
      }
      sub_reports.push_back(score(kept, subset, config.match));
    }
    const auto sub_avg = average_runs(sub_reports);
    report["complicated"] = {{"kind", kind_name(*options.complicated)},
                             {"n", options.complicated_n},
                             {"instances", subset.size()},
                             {"average", sub_avg.to_json(false)}};
    table += sub_avg.table(kind_name(*options.complicated) + ">" +
                           std::to_string(options.complicated_n));
  }

  write_config_snapshot(config);
  write_json(config.output_dir / "report.json", report);
  open_output(config.output_dir / "report.txt") << table;
  auto ledger = open_output(config.output_dir / "ledger.jsonl");
  for (size_t run = 0; run < full.size(); ++run) {
    for (const auto& e : full[run].ledger) {
      ledger << json{{"run", run},         {"id", e.id},           {"predicted", e.predicted},
                     {"gold", e.gold},     {"matched", e.matched}, {"pairs", e.pairs}}
                    .dump()
             << '\n';
    }
  }
  out_stream(ctx) << table;
  return kExitOk;
}

// ---- simulate ----

int cmd_simulate(const fs::path& spec_path, const fs::path& out_dir, const RewardConfig& reward,
                 const CommandContext& ctx) {
  std::ifstream in(spec_path);
  if (!in) throw ConfigError("cannot open world spec " + spec_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(spec_path.string() + ": " + e.what());
  }
  const auto spec = WorldSpec::from_json(j);
  const auto generated = generate_world(spec, reward);
  const auto& instances = generated.world.instances();

  fs::create_directories(out_dir);
  generated.world.save_jsonl(out_dir / "world.jsonl");
  nlohmann::ordered_json schemas = nlohmann::ordered_json::object();
  for (const auto& t : generated.types) schemas[t.type_label] = t.roles;
  open_output(out_dir / "schemas.json") << schemas.dump(2) << '\n';

  auto train = open_output(out_dir / "train.jsonl");
  auto test = open_output(out_dir / "test.jsonl");
  size_t fixed_optimal = 0, held = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    (generated.held_out[i] ? test : train) << sim_record_json(inst).dump() << '\n';
    held += generated.held_out[i];
    if (std::find(inst.optimal_orders.begin(), inst.optimal_orders.end(), inst.roles) !=
        inst.optimal_orders.end()) {
      ++fixed_optimal;
    }
  }
  for (const auto& [name, file] : {std::pair<std::string, std::string>{"train", "train.jsonl"},
                                   {"test", "test.jsonl"}}) {
    write_json(out_dir / (name + ".manifest.json"),
               {{"name", "sim-" + name},
                {"task", "ee"},
                {"language", to_string(spec.language)},
                {"records", file},
                {"schemas", "schemas.json"}});
  }
  const double fixed_share =
      instances.empty() ? 0.0 : static_cast<double>(fixed_optimal) / instances.size();
  write_json(out_dir / "world_summary.json",
             {{"instances", instances.size()},
              {"held_out", held},
              {"types", generated.types.size()},
              {"fixed_order_optimal", fixed_share}});
  out_stream(ctx) << "simulated " << instances.size() << " instances (" << held
                  << " held out); schema order optimal on " << fixed_share * 100.0
                  << "% of them\n";
  return kExitOk;
}

// ---- errors ----

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const SchemaNotFoundError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const LabelLookupError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TrainingAborted& e) {
    std::cerr << "backend budget exhausted: " << e.what() << '\n';
    return kExitBackendBudget;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace planex
