#include <cmath>
#include <map>
#include <sstream>

#include <gtest/gtest.h>

#include "planex/simulator.hpp"
#include "planex/trainer.hpp"

using namespace planex;
using nlohmann::json;

namespace {

ExtractionState state_with(std::vector<std::string> roles) {
  ExtractionState s;
  s.schema = {"t", std::move(roles)};
  s.type_label = "t";
  s.sentence = "s";
  return s;
}

// Q lookup keyed by (number of extracted roles, action).
QFn table(std::map<std::pair<size_t, std::string>, double> values) {
  return [values](const ExtractionState& s, const std::string& a) {
    return values.at({s.extracted.size(), a});
  };
}

Transition transition(double reward, size_t branches, bool terminal) {
  Transition t;
  t.pre_state = state_with({"a", "b", "c"});
  t.action = "a";
  t.reward = reward;
  t.terminal = terminal;
  for (size_t i = 0; i < branches; ++i) {
    auto next = t.pre_state;
    next.extracted.emplace_back("a", std::vector<std::string>{"x" + std::to_string(i)});
    t.successors.push_back(next);
  }
  return t;
}

std::vector<json> parse_log(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

SimInstance two_role_instance() {
  SimInstance inst;
  inst.id = "p";
  inst.sentence = "Larry Page started Google .";
  inst.type_label = "founder";
  inst.roles = {"object: person", "subject: company"};
  inst.gold = {{"subject: company", {"Google"}}, {"object: person", {"Larry Page"}}};
  inst.prerequisites = {{"object: person", {"subject: company"}}};
  return inst;
}

TrainSet seeds_for(const std::vector<SimInstance>& instances) {
  TrainSet set;
  for (const auto& inst : instances) {
    set.push_back({inst.id, inst.sentence, {{inst.schema(), inst.gold_record()}}});
  }
  return set;
}

class FlakyExtractor : public Extractor {
 public:
  std::string extract(const ExtractorInput&) override {
    if (++calls % 2 == 0) throw BackendError("timeout");
    return "x";
  }
  int calls = 0;
};

}  // namespace

TEST(Trainer, EpsilonSchedule) {
  TrainConfig c;
  EXPECT_EQ(epsilon_at(0, c), 0.9);
  EXPECT_EQ(epsilon_at(99, c), 0.9);
  EXPECT_EQ(epsilon_at(100, c), 0.81);
  EXPECT_EQ(epsilon_at(2800, c), 0.05);
  EXPECT_EQ(epsilon_at(1000000, c), 0.05);
  EXPECT_GT(epsilon_at(2700, c), 0.05);
}

TEST(Trainer, GreedySelectionPicksTheArgmax) {
  std::mt19937_64 rng(1);
  const ActionSpace space{{"a", "b", "c"}};
  EXPECT_EQ(select_action({0.1, 0.7, 0.3}, space, 0.0, rng), "b");
  EXPECT_EQ(select_action({0.5, 0.5, 0.3}, space, 0.0, rng), "a");
  EXPECT_EQ(select_action({0.1, 0.5, 0.5}, space, 0.0, rng), "b");
  EXPECT_THROW(select_action({}, ActionSpace{}, 0.0, rng), ContractViolation);
}

TEST(Trainer, FullExplorationIsUniform) {
  std::mt19937_64 rng(2);
  const ActionSpace space{{"a", "b", "c", "d"}};
  std::map<std::string, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[select_action({9, 0, 0, 0}, space, 1.0, rng)];
  double chi2 = 0.0;
  const double expected = draws / 4.0;
  for (const auto& role : space.remaining) {
    const double d = counts[role] - expected;
    chi2 += d * d / expected;
  }
  EXPECT_LT(chi2, 16.27);  // χ²(3) at p = 0.001
}

TEST(Trainer, TargetValues) {
  const auto online = table({{{1, "b"}, 4.0}, {{1, "c"}, 1.0}});
  EXPECT_EQ(compute_target(transition(10, 1, true), online, online, 0.5), 10.0);
  EXPECT_DOUBLE_EQ(compute_target(transition(10, 1, false), online, online, 0.5), 12.0);
  EXPECT_EQ(compute_target(transition(0, 1, true), online, online, 0.5), 0.0);

  BranchValues two{{{4, 4}, {1, 1}}, {{2, 2}, {0, 0}}};
  EXPECT_DOUBLE_EQ(combine_target(10, 0.5, false, two, true), 11.5);
  EXPECT_DOUBLE_EQ(combine_target(10, 0.5, false, two, false), 11.5);
  EXPECT_EQ(combine_target(10, 0.5, true, two, true), 10.0);
}

TEST(Trainer, DoubleAndVanillaTargetsDiffer) {
  // Online prefers b, target scores c higher.
  const auto online = table({{{1, "b"}, 5.0}, {{1, "c"}, 1.0}});
  const auto target = table({{{1, "b"}, 2.0}, {{1, "c"}, 6.0}});
  const auto t = transition(0, 1, false);
  EXPECT_DOUBLE_EQ(compute_target(t, online, target, 0.5, true), 1.0);
  EXPECT_DOUBLE_EQ(compute_target(t, online, target, 0.5, false), 3.0);
}

TEST(Trainer, NetworkTargetAgreesWithLookup) {
  EncoderConfig enc;
  enc.buckets = 1024;
  enc.embed_dim = 8;
  enc.hidden_dim = 6;
  const QNetwork online(enc, 1), target(enc, 2);
  const auto t = transition(10, 2, false);
  const QFn fo = [&](const ExtractionState& s, const std::string& a) { return online.q_value(s, a); };
  const QFn ft = [&](const ExtractionState& s, const std::string& a) { return target.q_value(s, a); };
  EXPECT_EQ(compute_target(t, online, target, 0.5), compute_target(t, fo, ft, 0.5));
}

TEST(Trainer, TdLoss) {
  EXPECT_EQ(td_loss({{1.0, 1.0}, {3.0, 3.0}}), 0.0);
  EXPECT_EQ(td_loss({{0.0, 2.0}}), 4.0);
  EXPECT_EQ(td_loss({{0.0, 2.0}, {1.0, 1.0}}), 2.0);
  EXPECT_THROW(td_loss({}), std::invalid_argument);
}

TEST(Trainer, StoresOneTransitionPerRole) {
  const auto inst = two_role_instance();
  auto world = std::make_shared<const SimWorld>(std::vector<SimInstance>{inst});
  SimulatorBackend sim(world);
  AliasJudge judge;
  RewardModule rm({}, judge);
  TrainConfig c;
  c.epochs = 1;
  c.episodes_per_epoch = 3;
  c.encoder.buckets = 4096;
  c.encoder.embed_dim = 8;
  c.encoder.hidden_dim = 8;
  std::ostringstream log;
  const auto result = train({seeds_for({inst})}, sim, rm, c, &log);
  const auto records = parse_log(log.str());
  ASSERT_EQ(records.size(), 6u);
  for (size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(records[2 * e]["episode"], e);
    EXPECT_EQ(records[2 * e + 1]["episode"], e);
  }
  EXPECT_EQ(records.front()["epsilon"], 0.9);
  EXPECT_EQ(result.stats.steps, 6u);
  EXPECT_EQ(result.stats.updates, 0u);
}

TEST(Trainer, TargetSyncsOnMultiplesOfK) {
  const json spec{{"seed", 4}, {"generate", {{"types", 3}, {"instances", 12}}}};
  const auto gen = generate_world(WorldSpec::from_json(spec), {});
  auto world = std::make_shared<const SimWorld>(gen.world);
  SimulatorBackend sim(world);
  AliasJudge judge;
  RewardModule rm({}, judge);
  TrainConfig c;
  c.epochs = 1;
  c.episodes_per_epoch = 80;
  c.batch_size = 8;
  c.encoder.buckets = 4096;
  c.encoder.embed_dim = 8;
  c.encoder.hidden_dim = 8;
  std::ostringstream log;
  const auto result = train({seeds_for(gen.world.instances())}, sim, rm, c, &log);
  ASSERT_GT(result.stats.updates, 60u);
  uint64_t syncs = 0;
  for (const auto& r : parse_log(log.str())) {
    const bool synced = r["target_sync"].get<bool>();
    const auto update = r["update"].get<uint64_t>();
    syncs += synced;
    if (synced) EXPECT_EQ(update % 20, 0u);
    if (!r["loss"].is_null() && update % 20 == 0) EXPECT_TRUE(synced);
  }
  EXPECT_EQ(syncs, result.stats.updates / 20);
  EXPECT_EQ(syncs, result.stats.syncs);
}

TEST(Trainer, SameSeedSameResult) {
  const json spec{{"seed", 5}, {"generate", {{"types", 2}, {"instances", 8}}}};
  const auto gen = generate_world(WorldSpec::from_json(spec), {});
  auto world = std::make_shared<const SimWorld>(gen.world);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.encoder.buckets = 2048;
  c.encoder.embed_dim = 8;
  c.encoder.hidden_dim = 8;
  auto run = [&](std::string& text) {
    SimulatorBackend sim(world);
    AliasJudge judge;
    RewardModule rm({}, judge);
    std::ostringstream log;
    auto r = train({seeds_for(gen.world.instances())}, sim, rm, c, &log);
    text = log.str();
    return r.net;
  };
  std::string la, lb;
  const auto a = run(la);
  const auto b = run(lb);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(la, lb);
}

TEST(Trainer, AbortsWhenTooManyEpisodesFail) {
  const auto inst = two_role_instance();
  FlakyExtractor flaky;
  AliasJudge judge;
  RewardModule rm({}, judge);
  TrainConfig c;
  c.epochs = 1;
  c.episodes_per_epoch = 50;
  c.encoder.buckets = 1024;
  c.encoder.embed_dim = 4;
  c.encoder.hidden_dim = 4;
  EXPECT_THROW(train({seeds_for({inst})}, flaky, rm, c, nullptr), TrainingAborted);
}

TEST(Trainer, ConfigRoundTripAndValidation) {
  TrainConfig c;
  c.lr = 0.003;
  c.double_q = false;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.lr, 0.003);
  EXPECT_FALSE(back.double_q);
  c.gamma = 1.5;
  EXPECT_ANY_THROW(c.validate());
}
