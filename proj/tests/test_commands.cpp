#include <fstream>
#include <mutex>
#include <sstream>

#include <gtest/gtest.h>

#include "planex/commands.hpp"

using namespace planex;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = PLANEX_FIXTURES;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

class Scratch {
 public:
  explicit Scratch(const std::string& name)
      : dir_(fs::temp_directory_path() / ("planex_cmd_" + name)) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Scratch() { fs::remove_all(dir_); }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

// Generates a small simulated suite and returns its directory.
fs::path small_world(const fs::path& root) {
  const fs::path spec = root / "spec.json";
  write_text(spec, json{{"seed", 3},
                        {"holdout_fraction", 0.25},
                        {"generate", {{"types", 3}, {"instances", 24}}}}
                       .dump());
  std::ostringstream quiet;
  CommandContext ctx{nullptr, &quiet};
  EXPECT_EQ(cmd_simulate(spec, root / "sim", {}, ctx), kExitOk);
  return root / "sim";
}

RunConfig sim_config(const fs::path& sim, const fs::path& out) {
  json j{{"train", {(sim / "train.manifest.json").string()}},
         {"test", (sim / "test.manifest.json").string()},
         {"output_dir", out.string()},
         {"seed", 11},
         {"backend", {{"kind", "simulator"}, {"world", (sim / "world.jsonl").string()}}},
         {"training",
          {{"epochs", 1},
           {"episodes_per_epoch", 40},
           {"batch_size", 8},
           {"encoder", {{"buckets", 4096}, {"embed_dim", 8}, {"hidden_dim", 8}}}}}};
  return RunConfig::from_json(j, sim);
}

// Answers every prompt from its first line and counts requests.
class CannedTransport : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override {
    std::lock_guard lock(mutex_);
    ++calls;
    const auto prompt = json::parse(request.body)["messages"][0]["content"].get<std::string>();
    std::string reply = "Microsoft";
    if (prompt.find("relation/event type list") != std::string::npos) reply = "founder, born in";
    if (prompt.find("model extraction competition") != std::string::npos) reply = "1";
    return {200, json{{"choices", {{{"message", {{"content", reply}}}}}}}.dump()};
  }
  size_t calls = 0;

 private:
  std::mutex mutex_;
};

RunConfig remote_config(const fs::path& out, const fs::path& transcripts,
                        const std::string& mode) {
  json j{{"test", (kFixtures / "re_small.manifest.json").string()},
         {"output_dir", out.string()},
         {"backend",
          {{"kind", "remote"},
           {"extractor", {{"endpoint", "http://127.0.0.1:9/v1/chat/completions"}, {"model", "m"}}},
           {"transcripts", mode},
           {"transcript_path", transcripts.string()}}},
         {"policy", "fixed"}};
  return RunConfig::from_json(j, kFixtures);
}

}  // namespace

TEST(Commands, SimulateWritesASuite) {
  Scratch s("simulate");
  const auto sim = small_world(s.dir());
  for (const char* name : {"world.jsonl", "schemas.json", "train.jsonl", "test.jsonl",
                           "train.manifest.json", "test.manifest.json", "world_summary.json"}) {
    EXPECT_TRUE(fs::exists(sim / name)) << name;
  }
  const auto summary = json::parse(slurp(sim / "world_summary.json"));
  EXPECT_EQ(summary["instances"], 24);
  EXPECT_EQ(summary["held_out"], 6);
}

TEST(Commands, SimulateRejectsACycle) {
  Scratch s("cycle");
  const fs::path spec = s.dir() / "spec.json";
  write_text(spec, R"({"types": [{"type": "t", "roles": ["A", "B"],
                     "prerequisites": {"A": ["B"], "B": ["A"]}}]})");
  std::ostringstream quiet;
  EXPECT_EQ(guarded([&] { return cmd_simulate(spec, s.dir() / "out", {}, {nullptr, &quiet}); }),
            kExitData);
}

TEST(Commands, TrainWritesCheckpointLogAndSnapshot) {
  Scratch s("train");
  const auto sim = small_world(s.dir());
  const auto config = sim_config(sim, s.dir() / "run");
  std::ostringstream quiet;
  ASSERT_EQ(cmd_train(config, {nullptr, &quiet}), kExitOk);
  EXPECT_TRUE(fs::exists(s.dir() / "run" / "checkpoint.bin"));
  const auto log = read_jsonl(s.dir() / "run" / "train_log.jsonl");
  ASSERT_FALSE(log.empty());
  EXPECT_EQ(log.front()["epsilon"], 0.9);
  const auto snapshot = json::parse(slurp(s.dir() / "run" / "run_config.json"));
  EXPECT_EQ(snapshot["digest"], config.digest());
  std::string digest;
  QNetwork::load(s.dir() / "run" / "checkpoint.bin", &digest);
  EXPECT_EQ(digest, config.digest());
}

TEST(Commands, TrainTwiceIsBitIdentical) {
  Scratch s("train_twice");
  const auto sim = small_world(s.dir());
  std::ostringstream quiet;
  ASSERT_EQ(cmd_train(sim_config(sim, s.dir() / "a"), {nullptr, &quiet}), kExitOk);
  ASSERT_EQ(cmd_train(sim_config(sim, s.dir() / "b"), {nullptr, &quiet}), kExitOk);
  EXPECT_EQ(slurp(s.dir() / "a" / "checkpoint.bin"), slurp(s.dir() / "b" / "checkpoint.bin"));
  EXPECT_EQ(slurp(s.dir() / "a" / "train_log.jsonl"), slurp(s.dir() / "b" / "train_log.jsonl"));
}

TEST(Commands, MissingManifestIsAConfigError) {
  Scratch s("missing");
  auto config = sim_config(s.dir(), s.dir() / "run");
  config.train = {s.dir() / "nope.manifest.json"};
  EXPECT_EQ(guarded([&] { return cmd_train(config, {}); }), kExitConfig);
}

TEST(Commands, MixedLanguagesAreRejected) {
  Scratch s("mixed");
  const auto sim = small_world(s.dir());
  auto manifest = json::parse(slurp(sim / "train.manifest.json"));
  manifest["language"] = "character";
  manifest["records"] = (sim / "train.jsonl").string();
  manifest["schemas"] = (sim / "schemas.json").string();
  write_text(s.dir() / "zh.manifest.json", manifest.dump());
  auto config = sim_config(sim, s.dir() / "run");
  config.train.push_back(s.dir() / "zh.manifest.json");
  EXPECT_THROW(cmd_train(config, {}), ConfigError);
}

TEST(Commands, ExtractThenEvaluateWithTheTrainedPlanner) {
  Scratch s("extract");
  const auto sim = small_world(s.dir());
  auto config = sim_config(sim, s.dir() / "run");
  std::ostringstream quiet;
  ASSERT_EQ(cmd_train(config, {nullptr, &quiet}), kExitOk);
  ASSERT_EQ(cmd_extract(config, s.dir() / "run" / "checkpoint.bin", {nullptr, &quiet}), kExitOk);
  const auto preds = read_jsonl(s.dir() / "run" / "predictions.jsonl");
  ASSERT_EQ(preds.size(), 6u);
  for (const auto& p : preds) EXPECT_EQ(p["outputs"].size(), p["types"].size());
  EvaluateOptions opts;
  opts.predictions = {s.dir() / "run" / "predictions.jsonl"};
  ASSERT_EQ(cmd_evaluate(config, opts, {nullptr, &quiet}), kExitOk);
  const auto report = json::parse(slurp(s.dir() / "run" / "report.json"));
  EXPECT_GE(report["average"]["f1"].get<double>(), 0.0);
  EXPECT_LE(report["average"]["f1"].get<double>(), 1.0);
}

TEST(Commands, ExtractNeedsACheckpointForGreedy) {
  Scratch s("nockpt");
  const auto sim = small_world(s.dir());
  const auto config = sim_config(sim, s.dir() / "run");
  EXPECT_EQ(guarded([&] { return cmd_extract(config, s.dir() / "none.bin", {}); }), kExitConfig);
}

TEST(Commands, ClassifyWithTheSimulatorIsExact) {
  Scratch s("classify");
  const auto sim = small_world(s.dir());
  const auto config = sim_config(sim, s.dir() / "run");
  std::ostringstream quiet;
  ASSERT_EQ(cmd_classify(config, {nullptr, &quiet}), kExitOk);
  const auto summary = json::parse(slurp(s.dir() / "run" / "classify_summary.json"));
  EXPECT_EQ(summary["accuracy"], 1.0);
}

TEST(Commands, EvaluateGoldAgainstItselfAndNothing) {
  Scratch s("evaluate");
  const auto sim = small_world(s.dir());
  auto config = sim_config(sim, s.dir() / "run");
  const auto ds = load_dataset_from_manifest(sim / "test.manifest.json");
  std::ofstream perfect(s.dir() / "perfect.jsonl");
  for (const auto& inst : ds.instances) {
    json outputs = json::array();
    for (const auto& g : inst.gold_records) {
      outputs.push_back(output_to_json({g.type_label, g.role_args, {}}));
    }
    perfect << json{{"id", inst.id}, {"outputs", outputs}}.dump() << '\n';
  }
  perfect.close();
  write_text(s.dir() / "empty.jsonl", "");
  std::ostringstream quiet;
  EvaluateOptions opts;
  opts.predictions = {s.dir() / "perfect.jsonl"};
  ASSERT_EQ(cmd_evaluate(config, opts, {nullptr, &quiet}), kExitOk);
  auto report = json::parse(slurp(s.dir() / "run" / "report.json"));
  EXPECT_EQ(report["average"]["precision"], 1.0);
  EXPECT_EQ(report["average"]["recall"], 1.0);
  EXPECT_EQ(report["average"]["f1"], 1.0);
  const auto first = slurp(s.dir() / "run" / "report.json");
  ASSERT_EQ(cmd_evaluate(config, opts, {nullptr, &quiet}), kExitOk);
  EXPECT_EQ(slurp(s.dir() / "run" / "report.json"), first);

  opts.predictions = {s.dir() / "empty.jsonl"};
  ASSERT_EQ(cmd_evaluate(config, opts, {nullptr, &quiet}), kExitOk);
  report = json::parse(slurp(s.dir() / "run" / "report.json"));
  EXPECT_EQ(report["average"]["precision"], 0.0);
  EXPECT_EQ(report["average"]["recall"], 0.0);
  EXPECT_EQ(report["average"]["f1"], 0.0);
}

TEST(Commands, ReplayModeNeedsNoNetwork) {
  Scratch s("replay");
  const auto transcripts = s.dir() / "transcripts.jsonl";
  std::ostringstream quiet;
  auto recorder = std::make_shared<CannedTransport>();
  ASSERT_EQ(cmd_extract(remote_config(s.dir() / "rec", transcripts, "record"), "",
                        {recorder, &quiet}),
            kExitOk);
  EXPECT_GT(recorder->calls, 0u);

  auto counter = std::make_shared<CannedTransport>();
  for (const char* run : {"r1", "r2"}) {
    ASSERT_EQ(cmd_extract(remote_config(s.dir() / run, transcripts, "replay"), "",
                          {counter, &quiet}),
              kExitOk);
    const auto summary = json::parse(slurp(s.dir() / run / "extract_summary.json"));
    EXPECT_EQ(summary["network_calls"], 0);
  }
  EXPECT_EQ(counter->calls, 0u);
  EXPECT_EQ(slurp(s.dir() / "r1" / "predictions.jsonl"),
            slurp(s.dir() / "rec" / "predictions.jsonl"));
  EXPECT_EQ(slurp(s.dir() / "r1" / "predictions.jsonl"),
            slurp(s.dir() / "r2" / "predictions.jsonl"));
  const auto preds = read_jsonl(s.dir() / "r1" / "predictions.jsonl");
  ASSERT_EQ(preds.size(), 3u);
  EXPECT_EQ(preds[0]["types"], (json{"founder", "born in"}));
}

TEST(Commands, ConfigRejectsUnknownPolicy) {
  EXPECT_THROW(RunConfig::from_json({{"policy", "clever"}}, "."), ConfigError);
  EXPECT_THROW(RunConfig::load("/nonexistent/run.json"), ConfigError);
}

TEST(Commands, SampleKeepsOriginalOrder) {
  std::vector<TaskInstance> items;
  for (int i = 0; i < 20; ++i) items.push_back({std::to_string(i), "s", {}, {}});
  const auto a = sample_instances(items, 5, 3);
  ASSERT_EQ(a.size(), 5u);
  for (size_t i = 1; i < a.size(); ++i) EXPECT_LT(std::stoi(a[i - 1].id), std::stoi(a[i].id));
  EXPECT_EQ(sample_instances(items, 0, 3).size(), 20u);
  const auto b = sample_instances(items, 5, 3);
  for (size_t i = 0; i < 5; ++i) EXPECT_EQ(a[i].id, b[i].id);
}
