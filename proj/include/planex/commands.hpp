#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/evaluation.hpp"
#include "planex/remote.hpp"
#include "planex/reward.hpp"
#include "planex/trainer.hpp"

namespace planex {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitBackendBudget = 4,
};

enum class BackendKind { kSimulator, kRemote };

struct BackendSettings {
  BackendKind kind = BackendKind::kSimulator;
  std::filesystem::path world;            // simulator world (JSONL)
  std::filesystem::path prompts;          // template directory; empty: built-in
  std::filesystem::path prompt_examples;  // JSON; empty: no demonstrations
  std::filesystem::path aliases;          // alias table for the oracle judge
  BackendConfig extractor;
  std::optional<BackendConfig> judge;     // defaults to the extractor settings
  TranscriptMode transcripts = TranscriptMode::kPassthrough;
  std::filesystem::path transcript_path;
};

struct RunConfig {
  std::vector<std::filesystem::path> train;  // dataset manifests
  std::filesystem::path test;                // dataset manifest
  BackendSettings backend;
  RewardConfig reward;
  TrainConfig training;
  MatchConfig match;
  std::filesystem::path output_dir = "runs/latest";
  uint64_t seed = 1;
  size_t train_sample = 0;  // 0: all
  size_t test_sample = 0;
  std::string policy = "greedy";  // greedy | fixed | random
  bool trace = false;
  bool tokenizer_from_manifest = true;  // unset in reward and match blocks

  // Relative paths resolve against `base`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  std::string digest() const;
};

// Applies the dataset's tokenizer mode unless one was configured.
RunConfig with_dataset_language(RunConfig config, LanguageMode language);

// Hooks for tests: an injected transport replaces HTTP.
struct CommandContext {
  std::shared_ptr<Transport> transport;
  std::ostream* out = nullptr;
};

// Writes <output_dir>/run_config.json: the resolved config plus its digest.
void write_config_snapshot(const RunConfig& config);

// Seeded sample of `k` items without replacement, original order kept.
std::vector<TaskInstance> sample_instances(const std::vector<TaskInstance>& items, size_t k,
                                           uint64_t seed);

int cmd_train(const RunConfig& config, const CommandContext& ctx);
int cmd_extract(const RunConfig& config, const std::filesystem::path& checkpoint,
                const CommandContext& ctx);
int cmd_classify(const RunConfig& config, const CommandContext& ctx);

struct EvaluateOptions {
  std::vector<std::filesystem::path> predictions;  // one file per run
  std::optional<ComplicatedKind> complicated;
  size_t complicated_n = 4;
};
int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options,
                 const CommandContext& ctx);

int cmd_simulate(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir,
                 const RewardConfig& reward, const CommandContext& ctx);

// Runs `body`, mapping exceptions to exit codes with a diagnostic on stderr.
int guarded(const std::function<int()>& body);

}  // namespace planex
