#include "planex/environment.hpp"

#include <algorithm>
#include <set>

namespace planex {

using nlohmann::json;

bool ExtractionState::has_extracted(const std::string& role) const {
  return std::any_of(extracted.begin(), extracted.end(),
                     [&](const auto& pair) { return pair.first == role; });
}

bool ActionSpace::contains(const std::string& role) const {
  return std::find(remaining.begin(), remaining.end(), role) != remaining.end();
}

ActionSpace action_space(const ExtractionState& state) {
  ActionSpace space;
  for (const auto& role : state.schema.roles) {
    if (!state.has_extracted(role)) space.remaining.push_back(role);
  }
  return space;
}

bool is_terminal(const ActionSpace& space) { return space.remaining.empty(); }

std::pair<ExtractionState, ActionSpace> reset(const std::string& sentence,
                                              const RoleSchema& schema) {
  ExtractionState state{schema, {}, schema.type_label, sentence};
  auto space = action_space(state);
  return {std::move(state), std::move(space)};
}

std::pair<ExtractionState, ActionSpace> reset(const TaskInstance& instance,
                                              const std::string& type_label,
                                              const SchemaRegistry& registry) {
  return reset(instance.sentence, derive_role_schema(type_label, registry));
}

double role_reward(const std::vector<std::string>& extracted,
                   const std::vector<std::string>* gold, RewardModule& reward) {
  const double full = reward.config().magnitude;
  if (gold == nullptr || gold->empty()) return extracted.empty() ? full : 0.0;
  if (extracted.empty()) return 0.0;
  const auto mode = reward.config().tokens;
  std::set<size_t> covered;
  for (const auto& x : extracted) {
    size_t best = 0;
    double best_sim = -1.0;
    for (size_t i = 0; i < gold->size(); ++i) {
      const double sim = jaccard(x, (*gold)[i], mode);
      if (sim > best_sim) {
        best_sim = sim;
        best = i;
      }
    }
    if (reward.reward(x, (*gold)[best]) <= 0.0) return 0.0;
    covered.insert(best);
  }
  return covered.size() == gold->size() ? full : 0.0;
}

StepOutcome step(const ExtractionState& state, const std::string& action,
                 Extractor& extractor, RewardModule* reward, const GoldRecord* gold) {
  if (!action_space(state).contains(action)) {
    throw ContractViolation("role '" + action + "' is not in the action space");
  }
  ExtractorInput input{state.sentence, state.type_label, state.extracted, action};
  StepOutcome out;
  out.raw_reply = extractor.extract(input);
  const auto args = parse_list_reply(out.raw_reply);

  out.realized_next = state;
  out.realized_next.extracted.emplace_back(action, args);
  if (args.empty()) {
    out.successor_branches.push_back(out.realized_next);
  } else {
    for (const auto& a : args) {
      ExtractionState branch = state;
      branch.extracted.emplace_back(action, std::vector<std::string>{a});
      out.successor_branches.push_back(std::move(branch));
    }
  }

  if (reward != nullptr && gold != nullptr) {
    auto it = gold->role_args.find(action);
    out.reward = role_reward(args, it == gold->role_args.end() ? nullptr : &it->second,
                             *reward);
    out.scored = true;
  }
  return out;
}

StructuredOutput assemble(const ExtractionState& final_state) {
  StructuredOutput out;
  out.type_label = final_state.type_label;
  for (const auto& role : final_state.schema.roles) out.role_args[role] = {};
  for (const auto& [role, args] : final_state.extracted) {
    out.role_args[role] = args;
    out.provenance.push_back(role);
  }
  return out;
}

Episode run_episode(const ExtractionState& initial, const Policy& policy,
                    Extractor& extractor, RewardModule* reward, const GoldRecord* gold) {
  Episode ep;
  ExtractionState state = initial;
  auto space = action_space(state);
  while (!is_terminal(space)) {
    const auto action = policy(state, space);
    if (!space.contains(action)) {
      throw ContractViolation("policy chose role '" + action +
                              "' outside the action space");
    }
    StepOutcome outcome;
    try {
      outcome = step(state, action, extractor, reward, gold);
    } catch (const BackendError& e) {
      ep.aborted = true;
      ep.error = e.what();
      break;
    }
    auto next_space = action_space(outcome.realized_next);
    Transition t;
    t.pre_state = state;
    t.action = action;
    t.reward = outcome.reward;
    t.successors = std::move(outcome.successor_branches);
    t.terminal = is_terminal(next_space);
    t.scored = outcome.scored;
    ep.transitions.push_back(std::move(t));
    ep.replies.push_back(std::move(outcome.raw_reply));
    state = std::move(outcome.realized_next);
    space = std::move(next_space);
  }
  ep.output = assemble(state);
  return ep;
}

Policy fixed_order_policy() {
  return [](const ExtractionState&, const ActionSpace& space) {
    return space.remaining.front();
  };
}

json state_to_json(const ExtractionState& state) {
  json extracted = json::array();
  for (const auto& [role, args] : state.extracted) extracted.push_back({role, args});
  return {{"schema", state.schema.roles},
          {"type", state.type_label},
          {"sentence", state.sentence},
          {"extracted", std::move(extracted)}};
}

json output_to_json(const StructuredOutput& output) {
  return {{"type", output.type_label},
          {"args", output.role_args},
          {"order", output.provenance}};
}

StructuredOutput output_from_json(const json& j) {
  StructuredOutput out;
  out.type_label = j.at("type").get<std::string>();
  out.role_args = j.at("args").get<RoleArgs>();
  if (j.contains("order")) out.provenance = j.at("order").get<std::vector<std::string>>();
  return out;
}

json trace_record(const Transition& t, const std::string& reply) {
  json j{{"state", state_to_json(t.pre_state)},
         {"action", t.action},
         {"reply", reply},
         {"terminal", t.terminal}};
  j["reward"] = t.scored ? json(t.reward) : json(nullptr);
  return j;
}

}  // namespace planex
