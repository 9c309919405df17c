#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/environment.hpp"
#include "planex/qnetwork.hpp"

namespace planex {

enum class SyncUnit { kUpdates, kSteps };

struct TrainConfig {
  int epochs = 10;
  size_t episodes_per_epoch = 0;  // 0: one pass over the pooled train instances
  size_t batch_size = 32;
  double lr = 1e-4;
  double gamma = 0.5;
  double epsilon_start = 0.9;
  double epsilon_floor = 0.05;
  double epsilon_decay = 0.9;
  uint64_t epsilon_period = 100;
  uint64_t target_sync = 20;
  SyncUnit sync_unit = SyncUnit::kUpdates;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  size_t replay_capacity = 5000;
  bool double_q = true;
  double failure_ceiling = 0.2;
  size_t failure_grace = 10;  // episodes before the ceiling applies
  EncoderConfig encoder;
  uint64_t seed = 1;

  void validate() const;
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// max(floor, start · decay^⌊step / period⌋)
double epsilon_at(uint64_t step, const TrainConfig& config);

// ε-greedy over the remaining roles; greedy ties go to the earlier role.
std::string select_action(const QNetwork& net, const ExtractionState& state,
                          const ActionSpace& space, double epsilon, std::mt19937_64& rng);
std::string select_action(const std::vector<double>& q_values, const ActionSpace& space,
                          double epsilon, std::mt19937_64& rng);

Policy greedy_policy(const QNetwork& net);
Policy random_policy(uint64_t seed);

// Per successor branch, per next action: (online value, target value).
using BranchValues = std::vector<std::vector<std::pair<double, double>>>;

// Terminal: r. Otherwise r + γ · mean over branches of the best next value.
// Double-Q picks the action by online value and scores it by target value;
// vanilla takes the target maximum.
double combine_target(double reward, double gamma, bool terminal, const BranchValues& branches,
                      bool double_q);

using QFn = std::function<double(const ExtractionState&, const std::string&)>;

double compute_target(const Transition& t, const QFn& online, const QFn& target, double gamma,
                      bool double_q = true);
double compute_target(const Transition& t, const QNetwork& online, const QNetwork& target,
                      double gamma, bool double_q = true);

// Mean of (target − prediction)² over (prediction, target) pairs.
double td_loss(const std::vector<std::pair<double, double>>& batch);

// Adds the gradient of td_loss over `batch` (features, target) to `grad`;
// returns the loss.
double td_loss_gradient(const QNetwork& net,
                        const std::vector<std::pair<const Features*, double>>& batch,
                        QGradient& grad);

// One training sentence with the (schema, gold) pairs it can start from.
struct EpisodeSeed {
  std::string id;
  std::string sentence;
  std::vector<std::pair<RoleSchema, GoldRecord>> records;
};
using TrainSet = std::vector<EpisodeSeed>;

TrainSet episode_seeds(const std::vector<TaskInstance>& instances,
                       const SchemaRegistry& registry);

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainStats {
  size_t episodes = 0;
  size_t skipped = 0;
  uint64_t steps = 0;
  uint64_t updates = 0;
  uint64_t syncs = 0;
};

struct TrainResult {
  QNetwork net;
  TrainStats stats;
};

// Line-delimited JSON records go to `log` when it is non-null.
TrainResult train(const std::vector<TrainSet>& sets, Extractor& extractor,
                  RewardModule& reward, const TrainConfig& config, std::ostream* log);

}  // namespace planex
