#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/backend.hpp"
#include "planex/datasets.hpp"
#include "planex/prompts.hpp"
#include "planex/reward.hpp"

namespace planex {

// An action outside the current action space, or a policy that returned one.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// MDP state: roles schema, extracted content so far, type label, sentence.
struct ExtractionState {
  RoleSchema schema;
  ExtractedContent extracted;
  std::string type_label;
  std::string sentence;

  bool has_extracted(const std::string& role) const;
  size_t step_index() const { return extracted.size(); }
  bool operator==(const ExtractionState&) const = default;
};

// Roles not yet extracted, in schema order.
struct ActionSpace {
  std::vector<std::string> remaining;

  bool contains(const std::string& role) const;
  bool operator==(const ActionSpace&) const = default;
};

ActionSpace action_space(const ExtractionState& state);
bool is_terminal(const ActionSpace& space);

std::pair<ExtractionState, ActionSpace> reset(const TaskInstance& instance,
                                              const std::string& type_label,
                                              const SchemaRegistry& registry);
std::pair<ExtractionState, ActionSpace> reset(const std::string& sentence,
                                              const RoleSchema& schema);

struct StepOutcome {
  ExtractionState realized_next;                   // full parsed argument list
  std::vector<ExtractionState> successor_branches; // one per argument
  double reward = 0.0;
  bool scored = false;  // false: no gold was available, reward is a sentinel
  std::string raw_reply;
};

struct Transition {
  ExtractionState pre_state;
  std::string action;
  double reward = 0.0;
  std::vector<ExtractionState> successors;
  bool terminal = false;
  bool scored = true;
};

struct StructuredOutput {
  std::string type_label;
  RoleArgs role_args;                   // every schema role, possibly empty
  std::vector<std::string> provenance;  // roles in extraction order

  bool operator==(const StructuredOutput&) const = default;
};

// Step reward for one role under the pairing rule: each extracted argument
// is paired with its most similar gold argument; the step earns the reward
// magnitude iff no extracted argument is rejected and every gold argument is
// covered. A role without gold earns it iff nothing was extracted.
double role_reward(const std::vector<std::string>& extracted,
                   const std::vector<std::string>* gold, RewardModule& reward);

// One extraction step. `reward` and `gold` may be null (unscored inference).
StepOutcome step(const ExtractionState& state, const std::string& action,
                 Extractor& extractor, RewardModule* reward, const GoldRecord* gold);

StructuredOutput assemble(const ExtractionState& final_state);

using Policy = std::function<std::string(const ExtractionState&, const ActionSpace&)>;

struct Episode {
  StructuredOutput output;
  std::vector<Transition> transitions;
  std::vector<std::string> replies;
  bool aborted = false;
  std::string error;
};

// Runs |M| steps from `initial`. Backend failures abort the episode and
// leave the transitions gathered so far.
Episode run_episode(const ExtractionState& initial, const Policy& policy,
                    Extractor& extractor, RewardModule* reward, const GoldRecord* gold);

// Fixed schema order.
Policy fixed_order_policy();

nlohmann::json state_to_json(const ExtractionState& state);
nlohmann::json output_to_json(const StructuredOutput& output);
StructuredOutput output_from_json(const nlohmann::json& j);
// One audit line per step: state, action, reward, reply.
nlohmann::json trace_record(const Transition& t, const std::string& reply);

}  // namespace planex
