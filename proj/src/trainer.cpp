#include "planex/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <ostream>

#include "planex/log.hpp"
#include "planex/optimizer.hpp"
#include "planex/replay.hpp"

namespace planex {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
  if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("gamma must be in (0, 1]");
  if (!(epsilon_start > 0 && epsilon_start <= 1)) {
    throw std::invalid_argument("epsilon_start must be in (0, 1]");
  }
  if (!(epsilon_floor > 0 && epsilon_floor <= epsilon_start)) {
    throw std::invalid_argument("epsilon_floor must be in (0, epsilon_start]");
  }
  if (!(epsilon_decay > 0 && epsilon_decay <= 1)) {
    throw std::invalid_argument("epsilon_decay must be in (0, 1]");
  }
  if (epsilon_period < 1 || target_sync < 1) {
    throw std::invalid_argument("epsilon_period and target_sync must be positive");
  }
  if (warmup_fraction < 0 || warmup_fraction >= 1) {
    throw std::invalid_argument("warmup_fraction must be in [0, 1)");
  }
  if (replay_capacity < batch_size) {
    throw std::invalid_argument("replay_capacity must be >= batch_size");
  }
  if (failure_ceiling < 0 || failure_ceiling > 1) {
    throw std::invalid_argument("failure_ceiling must be in [0, 1]");
  }
  encoder.validate();
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.episodes_per_epoch = j.value("episodes_per_epoch", c.episodes_per_epoch);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
  c.epsilon_floor = j.value("epsilon_floor", c.epsilon_floor);
  c.epsilon_decay = j.value("epsilon_decay", c.epsilon_decay);
  c.epsilon_period = j.value("epsilon_period", c.epsilon_period);
  c.target_sync = j.value("target_sync", c.target_sync);
  if (j.contains("sync_unit")) {
    const auto unit = j.at("sync_unit").get<std::string>();
    if (unit == "updates") {
      c.sync_unit = SyncUnit::kUpdates;
    } else if (unit == "steps") {
      c.sync_unit = SyncUnit::kSteps;
    } else {
      throw std::invalid_argument("sync_unit must be 'updates' or 'steps'");
    }
  }
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.double_q = !j.value("vanilla_target", !c.double_q);
  c.failure_ceiling = j.value("failure_ceiling", c.failure_ceiling);
  c.failure_grace = j.value("failure_grace", c.failure_grace);
  if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"episodes_per_epoch", episodes_per_epoch},
          {"batch_size", batch_size},
          {"lr", lr},
          {"gamma", gamma},
          {"epsilon_start", epsilon_start},
          {"epsilon_floor", epsilon_floor},
          {"epsilon_decay", epsilon_decay},
          {"epsilon_period", epsilon_period},
          {"target_sync", target_sync},
          {"sync_unit", sync_unit == SyncUnit::kUpdates ? "updates" : "steps"},
          {"warmup_fraction", warmup_fraction},
          {"weight_decay", weight_decay},
          {"replay_capacity", replay_capacity},
          {"vanilla_target", !double_q},
          {"failure_ceiling", failure_ceiling},
          {"failure_grace", failure_grace},
          {"encoder", encoder.to_json()},
          {"seed", seed}};
}

double epsilon_at(uint64_t step, const TrainConfig& config) {
  const double decays = static_cast<double>(step / config.epsilon_period);
  return std::max(config.epsilon_floor,
                  config.epsilon_start * std::pow(config.epsilon_decay, decays));
}

std::string select_action(const std::vector<double>& q_values, const ActionSpace& space,
                          double epsilon, std::mt19937_64& rng) {
  if (space.remaining.empty()) throw ContractViolation("select_action on an empty action space");
  if (std::bernoulli_distribution(epsilon)(rng)) {
    std::uniform_int_distribution<size_t> pick(0, space.remaining.size() - 1);
    return space.remaining[pick(rng)];
  }
  size_t best = 0;
  for (size_t i = 1; i < q_values.size(); ++i) {
    if (q_values[i] > q_values[best]) best = i;
  }
  return space.remaining[best];
}

std::string select_action(const QNetwork& net, const ExtractionState& state,
                          const ActionSpace& space, double epsilon, std::mt19937_64& rng) {
  std::vector<double> q;
  q.reserve(space.remaining.size());
  for (const auto& role : space.remaining) q.push_back(net.q_value(state, role));
  return select_action(q, space, epsilon, rng);
}

Policy greedy_policy(const QNetwork& net) {
  return [&net](const ExtractionState& state, const ActionSpace& space) {
    std::mt19937_64 unused(0);
    return select_action(net, state, space, 0.0, unused);
  };
}

Policy random_policy(uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const ExtractionState&, const ActionSpace& space) {
    std::uniform_int_distribution<size_t> pick(0, space.remaining.size() - 1);
    return space.remaining[pick(*rng)];
  };
}

double combine_target(double reward, double gamma, bool terminal, const BranchValues& branches,
                      bool double_q) {
  if (terminal || branches.empty()) return reward;
  double sum = 0.0;
  for (const auto& actions : branches) {
    if (actions.empty()) continue;
    size_t best = 0;
    for (size_t i = 1; i < actions.size(); ++i) {
      const double cand = double_q ? actions[i].first : actions[i].second;
      const double incumbent = double_q ? actions[best].first : actions[best].second;
      if (cand > incumbent) best = i;
    }
    sum += actions[best].second;
  }
  return reward + gamma * sum / static_cast<double>(branches.size());
}

double compute_target(const Transition& t, const QFn& online, const QFn& target, double gamma,
                      bool double_q) {
  if (t.terminal) return t.reward;
  BranchValues values;
  values.reserve(t.successors.size());
  for (const auto& branch : t.successors) {
    auto& row = values.emplace_back();
    for (const auto& role : action_space(branch).remaining) {
      row.emplace_back(double_q ? online(branch, role) : 0.0, target(branch, role));
    }
  }
  return combine_target(t.reward, gamma, false, values, double_q);
}

double compute_target(const Transition& t, const QNetwork& online, const QNetwork& target,
                      double gamma, bool double_q) {
  const QFn on = [&](const ExtractionState& s, const std::string& a) {
    return online.q_value(s, a);
  };
  const QFn off = [&](const ExtractionState& s, const std::string& a) {
    return target.q_value(s, a);
  };
  return compute_target(t, on, off, gamma, double_q);
}

double td_loss(const std::vector<std::pair<double, double>>& batch) {
  if (batch.empty()) throw std::invalid_argument("td_loss of an empty batch");
  double sum = 0.0;
  for (const auto& [prediction, target] : batch) {
    const double d = target - prediction;
    sum += d * d;
  }
  return sum / static_cast<double>(batch.size());
}

double td_loss_gradient(const QNetwork& net,
                        const std::vector<std::pair<const Features*, double>>& batch,
                        QGradient& grad) {
  if (batch.empty()) throw std::invalid_argument("td_loss of an empty batch");
  const double n = static_cast<double>(batch.size());
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(batch.size());
  for (const auto& [features, target] : batch) {
    const double q = net.q_value(*features);
    net.accumulate_gradient(*features, -2.0 * (target - q) / n, grad);
    pairs.emplace_back(q, target);
  }
  return td_loss(pairs);
}

TrainSet episode_seeds(const std::vector<TaskInstance>& instances,
                       const SchemaRegistry& registry) {
  TrainSet out;
  for (const auto& inst : instances) {
    EpisodeSeed seed{inst.id, inst.sentence, {}};
    for (const auto& gold : inst.gold_records) {
      seed.records.emplace_back(derive_role_schema(gold.type_label, registry), gold);
    }
    if (!seed.records.empty()) out.push_back(std::move(seed));
  }
  return out;
}

namespace {

// A transition with its network inputs hashed once at insertion.
struct CachedTransition {
  Features pre;
  double reward = 0.0;
  bool terminal = false;
  std::vector<std::vector<Features>> successors;  // per branch, per next action
};

CachedTransition cache(const ExtractionState& pre, const std::string& action, double reward,
                       const std::vector<ExtractionState>& successors, bool terminal,
                       const EncoderConfig& encoder) {
  CachedTransition c{featurize(pre, action, encoder), reward, terminal, {}};
  if (!terminal) {
    for (const auto& branch : successors) {
      auto& row = c.successors.emplace_back();
      for (const auto& role : action_space(branch).remaining) {
        row.push_back(featurize(branch, role, encoder));
      }
    }
  }
  return c;
}

double cached_target(const CachedTransition& t, const QNetwork& online, const QNetwork& target,
                     double gamma, bool double_q) {
  if (t.terminal) return t.reward;
  BranchValues values;
  values.reserve(t.successors.size());
  for (const auto& branch : t.successors) {
    auto& row = values.emplace_back();
    for (const auto& f : branch) {
      row.emplace_back(double_q ? online.q_value(f) : 0.0, target.q_value(f));
    }
  }
  return combine_target(t.reward, gamma, false, values, double_q);
}

}  // namespace

TrainResult train(const std::vector<TrainSet>& sets, Extractor& extractor,
                  RewardModule& reward, const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (sets.empty()) throw std::invalid_argument("no training sets");
  size_t pooled = 0;
  double role_total = 0.0;
  size_t record_total = 0;
  for (const auto& set : sets) {
    if (set.empty()) throw std::invalid_argument("empty training set");
    pooled += set.size();
    for (const auto& seed : set) {
      for (const auto& [schema, gold] : seed.records) {
        role_total += static_cast<double>(schema.roles.size());
        ++record_total;
      }
    }
  }
  const size_t per_epoch = config.episodes_per_epoch > 0 ? config.episodes_per_epoch : pooled;
  const size_t episodes = per_epoch * static_cast<size_t>(config.epochs);
  const double mean_roles = record_total > 0 ? role_total / record_total : 1.0;

  std::mt19937_64 rng(config.seed);
  TrainResult result{QNetwork(config.encoder, config.seed), {}};
  QNetwork& online = result.net;
  QNetwork target = online;
  AdamWConfig opt_config;
  opt_config.lr = config.lr;
  opt_config.weight_decay = config.weight_decay;
  opt_config.warmup_fraction = config.warmup_fraction;
  opt_config.total_updates =
      std::max<uint64_t>(1, static_cast<uint64_t>(std::llround(episodes * mean_roles)));
  AdamW optimizer(opt_config, online);
  ReplayMemory<CachedTransition> replay(config.replay_capacity);
  QGradient grad;
  auto& stats = result.stats;

  auto emit = [&](const json& record) {
    if (log != nullptr) *log << record.dump() << '\n';
  };

  std::uniform_int_distribution<size_t> pick_set(0, sets.size() - 1);
  for (size_t episode = 0; episode < episodes; ++episode) {
    const auto& set = sets[pick_set(rng)];
    const auto& seed = set[std::uniform_int_distribution<size_t>(0, set.size() - 1)(rng)];
    const auto& [schema, gold] =
        seed.records[std::uniform_int_distribution<size_t>(0, seed.records.size() - 1)(rng)];

    ++stats.episodes;
    auto state = reset(seed.sentence, schema).first;
    auto space = action_space(state);
    size_t stored = 0;
    bool failed = false;
    while (!is_terminal(space)) {
      const double epsilon = epsilon_at(stats.steps, config);
      const auto action = select_action(online, state, space, epsilon, rng);
      StepOutcome outcome;
      try {
        outcome = step(state, action, extractor, &reward, &gold);
      } catch (const BackendError& e) {
        replay.discard_newest(stored);
        ++stats.skipped;
        failed = true;
        emit({{"event", "episode_skipped"}, {"episode", episode}, {"error", e.what()}});
        log_warning("training episode " + std::to_string(episode) + " skipped: " + e.what());
        break;
      }
      auto next_space = action_space(outcome.realized_next);
      replay.push(cache(state, action, outcome.reward, outcome.successor_branches,
                        is_terminal(next_space), config.encoder));
      ++stored;
      ++stats.steps;

      json record{{"step", stats.steps},       {"episode", episode},
                  {"epsilon", epsilon},        {"action", action},
                  {"reward", outcome.reward},  {"loss", nullptr},
                  {"mean_batch_reward", nullptr}, {"update", stats.updates},
                  {"target_sync", false}};
      if (replay.size() >= config.batch_size) {
        const auto batch = replay.sample(config.batch_size, rng);
        std::vector<std::pair<const Features*, double>> inputs;
        inputs.reserve(batch.size());
        double batch_reward = 0.0;
        for (const auto* t : batch) {
          inputs.emplace_back(&t->pre,
                              cached_target(*t, online, target, config.gamma, config.double_q));
          batch_reward += t->reward;
        }
        grad.reset(config.encoder);
        const double loss = td_loss_gradient(online, inputs, grad);
        optimizer.step(online, grad);
        ++stats.updates;
        record["loss"] = loss;
        record["mean_batch_reward"] = batch_reward / static_cast<double>(batch.size());
        record["update"] = stats.updates;
        const uint64_t clock =
            config.sync_unit == SyncUnit::kUpdates ? stats.updates : stats.steps;
        if (clock % config.target_sync == 0) {
          target = online;
          ++stats.syncs;
          record["target_sync"] = true;
        }
      }
      emit(record);
      state = std::move(outcome.realized_next);
      space = std::move(next_space);
    }
    if (failed && stats.episodes >= config.failure_grace &&
        static_cast<double>(stats.skipped) / static_cast<double>(stats.episodes) >
            config.failure_ceiling) {
      throw TrainingAborted("backend failure rate " + std::to_string(stats.skipped) + "/" +
                            std::to_string(stats.episodes) + " exceeds the ceiling");
    }
  }
  return result;
}

}  // namespace planex
