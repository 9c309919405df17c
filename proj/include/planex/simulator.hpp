#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/backend.hpp"
#include "planex/datasets.hpp"
#include "planex/reward.hpp"

namespace planex {

using RoleOrder = std::vector<std::string>;

// A sentence whose extraction is order-sensitive: a role comes out right
// only when every prerequisite role was already extracted correctly;
// otherwise the decoy is returned.
struct SimInstance {
  std::string id;
  std::string sentence;
  std::string type_label;
  std::vector<std::string> roles;  // schema order
  RoleArgs gold;
  std::map<std::string, std::set<std::string>> prerequisites;
  std::map<std::string, std::string> decoys;
  std::vector<RoleOrder> optimal_orders;  // annotation; may be empty

  RoleSchema schema() const;
  GoldRecord gold_record() const;
  std::string decoy_for(const std::string& role) const;
  // Prerequisites within the schema, acyclic, decoys differ from gold.
  void validate() const;

  nlohmann::json to_json() const;
  static SimInstance from_json(const nlohmann::json& j);
};

class SimWorld {
 public:
  SimWorld() = default;
  explicit SimWorld(std::vector<SimInstance> instances);

  static SimWorld load_jsonl(const std::filesystem::path& path);
  void save_jsonl(const std::filesystem::path& path) const;

  const std::vector<SimInstance>& instances() const { return instances_; }
  const SimInstance* find(const std::string& sentence, const std::string& type_label) const;
  std::vector<const SimInstance*> find_all(const std::string& sentence) const;
  const std::string& decoy_policy() const { return decoy_policy_; }

 private:
  std::vector<SimInstance> instances_;
  std::string decoy_policy_ = "substring";
  std::map<std::pair<std::string, std::string>, size_t> index_;
};

// Deterministic classifier and extractor over a SimWorld. Stateless apart
// from the immutable world; safe to share across threads.
class SimulatorBackend : public Classifier, public Extractor {
 public:
  explicit SimulatorBackend(std::shared_ptr<const SimWorld> world);

  std::vector<std::string> classify(const std::string& sentence,
                                    const std::vector<std::string>& candidates) override;
  std::string extract(const ExtractorInput& input) override;

 private:
  std::shared_ptr<const SimWorld> world_;
};

// Symmetric equivalences between surface forms, e.g. "USA" ≡ "the United States".
class AliasTable {
 public:
  // Two tab-separated columns per line; '#' starts a comment.
  static AliasTable load_tsv(const std::filesystem::path& path);
  void add(const std::string& a, const std::string& b);
  bool equivalent(const std::string& a, const std::string& b) const;

 private:
  std::set<std::pair<std::string, std::string>> pairs_;
};

// Case- and whitespace-insensitive equality, or an alias-table match.
class AliasJudge : public Judge {
 public:
  AliasJudge() = default;
  explicit AliasJudge(AliasTable aliases) : aliases_(std::move(aliases)) {}
  int judge(const std::string& extracted, const std::string& ground_truth) override;

 private:
  AliasTable aliases_;
};

inline constexpr size_t kMaxEnumeratedRoles = 8;

// Every role order that reaches the maximum total reward when the
// simulator plays it out. Refuses schemas above kMaxEnumeratedRoles.
std::set<RoleOrder> sim_optimal_orders(const SimInstance& instance,
                                       const RewardConfig& config);

// ---- world generation ----

struct SimTypeSpec {
  std::string type_label;
  std::vector<std::string> roles;
  std::map<std::string, std::set<std::string>> prerequisites;
  int instances = 1;
};

struct GenerateSpec {
  int types = 10;
  int instances = 200;
  int min_roles = 3;
  int max_roles = 5;
  double topological_fraction = 0.3;  // share of types whose schema order is optimal
  double multi_argument_probability = 0.1;
};

struct WorldSpec {
  uint64_t seed = 1;
  LanguageMode language = LanguageMode::kWhitespace;
  std::vector<SimTypeSpec> types;
  std::optional<GenerateSpec> generate;
  double holdout_fraction = 0.0;

  // Throws DataError on a malformed spec or a cyclic prerequisite graph.
  static WorldSpec from_json(const nlohmann::json& j);
};

struct GeneratedWorld {
  SimWorld world;
  std::vector<SimTypeSpec> types;
  std::vector<bool> held_out;  // parallel to world.instances()
};

// Builds instances with sentences, gold arguments and decoys, and
// annotates each with its optimal orders.
GeneratedWorld generate_world(const WorldSpec& spec, const RewardConfig& reward);

// Event-style record line for a simulated instance.
nlohmann::json sim_record_json(const SimInstance& instance);

}  // namespace planex
