#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "planex/commands.hpp"
#include "planex/log.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::string test;
  std::vector<std::string> train;
  std::optional<size_t> train_sample;
  std::optional<size_t> test_sample;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<size_t> episodes_per_epoch;
  bool vanilla_target = false;
  bool replay_transcripts = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("-o,--out", o.out, "Output directory");
  cmd->add_option("--test", o.test, "Test dataset manifest");
  cmd->add_flag("--replay-transcripts", o.replay_transcripts,
                "Serve backend calls from the transcript cache only");
}

planex::RunConfig resolve(const Overrides& o) {
  auto config = planex::RunConfig::load(o.config);
  if (o.seed) {
    config.seed = *o.seed;
    config.training.seed = *o.seed;
  }
  if (!o.out.empty()) config.output_dir = std::filesystem::absolute(o.out);
  if (!o.test.empty()) config.test = std::filesystem::absolute(o.test);
  if (!o.train.empty()) {
    config.train.clear();
    for (const auto& p : o.train) config.train.push_back(std::filesystem::absolute(p));
  }
  if (o.train_sample) config.train_sample = *o.train_sample;
  if (o.test_sample) config.test_sample = *o.test_sample;
  if (o.lr) config.training.lr = *o.lr;
  if (o.epochs) config.training.epochs = *o.epochs;
  if (o.episodes_per_epoch) config.training.episodes_per_epoch = *o.episodes_per_epoch;
  if (o.vanilla_target) config.training.double_q = false;
  if (o.replay_transcripts) config.backend.transcripts = planex::TranscriptMode::kReplay;
  try {
    config.training.validate();
  } catch (const std::invalid_argument& e) {
    throw planex::ConfigError(e.what());
  }
  return config;
}

std::optional<planex::ComplicatedKind> parse_complicated(const std::string& text, size_t& n) {
  if (text.empty()) return std::nullopt;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  if (colon != std::string::npos) n = std::stoul(text.substr(colon + 1));
  if (kind == "min-triples") return planex::ComplicatedKind::kMinTriples;
  if (kind == "min-roles") return planex::ComplicatedKind::kMinRoles;
  throw planex::ConfigError("--complicated expects min-triples[:n] or min-roles[:n]");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Order-aware relation and event extraction with a learned role planner"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  Overrides o;
  std::string checkpoint, policy, complicated, spec, sim_out;
  std::vector<std::string> predictions;
  bool trace = false;

  auto* train = app.add_subcommand("train", "Train the role-order planner");
  add_common(train, o);
  train->add_option("--train", o.train, "Train dataset manifests (replaces the config list)");
  train->add_option("--train-sample", o.train_sample, "Seeded sample size per train set");
  train->add_option("--lr", o.lr, "Learning rate");
  train->add_option("--epochs", o.epochs, "Epochs");
  train->add_option("--episodes-per-epoch", o.episodes_per_epoch, "Episodes per epoch");
  train->add_flag("--vanilla-target", o.vanilla_target,
                  "Target network both selects and evaluates the next action");

  auto* extract = app.add_subcommand("extract", "Classify, then extract roles in planned order");
  add_common(extract, o);
  extract->add_option("--checkpoint", checkpoint, "Trained checkpoint");
  extract->add_option("--policy", policy, "greedy, fixed or random")
      ->check(CLI::IsMember({"greedy", "fixed", "random"}));
  extract->add_option("--test-sample", o.test_sample, "Seeded sample size of the test set");
  extract->add_flag("--trace", trace, "Write a per-step trace");

  auto* classify = app.add_subcommand("classify", "Stage-1 type classification");
  add_common(classify, o);
  classify->add_option("--test-sample", o.test_sample, "Seeded sample size of the test set");

  auto* evaluate = app.add_subcommand("evaluate", "Relaxed precision, recall and F1");
  add_common(evaluate, o);
  evaluate->add_option("-p,--predictions", predictions, "Predictions file, one per run")
      ->required();
  evaluate->add_option("--complicated", complicated,
                       "Also score a subset: min-triples[:n] or min-roles[:n]");
  evaluate->add_option("--test-sample", o.test_sample, "Seeded sample size of the test set");

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic order-sensitive world");
  simulate->add_option("--spec", spec, "World spec (JSON)")->required();
  simulate->add_option("-o,--out", sim_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (verbose) planex::set_log_level(planex::LogLevel::kInfo);

  return planex::guarded([&]() -> int {
    planex::CommandContext ctx;
    if (*simulate) return planex::cmd_simulate(spec, sim_out, planex::RewardConfig{}, ctx);
    auto config = resolve(o);
    if (*train) return planex::cmd_train(config, ctx);
    if (*extract) {
      if (!policy.empty()) config.policy = policy;
      if (trace) config.trace = true;
      return planex::cmd_extract(config, checkpoint, ctx);
    }
    if (*classify) return planex::cmd_classify(config, ctx);
    planex::EvaluateOptions options;
    for (const auto& p : predictions) options.predictions.push_back(p);
    options.complicated = parse_complicated(complicated, options.complicated_n);
    return planex::cmd_evaluate(config, options, ctx);
  });
}
