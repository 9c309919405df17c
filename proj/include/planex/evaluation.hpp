#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/datasets.hpp"
#include "planex/environment.hpp"
#include "planex/reward.hpp"

namespace planex {

struct MatchConfig {
  double threshold = 0.85;
  TokenMode tokens = TokenMode::kWord;
  int runs = 3;

  void validate() const;
  static MatchConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Left-to-right assignment of a maximum matching; -1 for unmatched rows.
std::vector<int> max_bipartite_matching(const std::vector<std::vector<bool>>& adjacent);

// jaccard above the threshold, or identical token sets.
bool argument_match(const std::string& pred, const std::string& gold, const MatchConfig& config);

// Same type, and for every role a perfect one-to-one pairing of predicted
// and gold arguments that pass argument_match.
bool record_match(const StructuredOutput& pred, const GoldRecord& gold,
                  const MatchConfig& config);

struct InstancePredictions {
  std::string id;
  std::vector<StructuredOutput> outputs;
};

struct LedgerEntry {
  std::string id;
  size_t predicted = 0;
  size_t gold = 0;
  size_t matched = 0;
  std::vector<std::pair<size_t, size_t>> pairs;  // (prediction, gold)
};

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t matched = 0;
  size_t predicted = 0;
  size_t gold = 0;
  std::vector<LedgerEntry> ledger;

  nlohmann::json to_json(bool with_ledger = true) const;
  std::string table(const std::string& title) const;
};

EvalReport make_report(size_t matched, size_t predicted, size_t gold);

// Predictions without a gold instance count as unmatched predictions.
// Duplicate records within an instance are scored once.
EvalReport score(const std::vector<InstancePredictions>& preds,
                 const std::vector<TaskInstance>& golds, const MatchConfig& config);

enum class ComplicatedKind { kMinTriples, kMinRoles };

// Keeps instances with more than `n` gold records (kMinTriples) or with an
// event whose schema has more than `n` roles (kMinRoles).
std::vector<TaskInstance> filter_complicated(const std::vector<TaskInstance>& instances,
                                             ComplicatedKind kind, size_t n,
                                             const SchemaRegistry& registry);

// Component-wise mean of precision, recall and F1; counts are rounded means.
EvalReport average_runs(const std::vector<EvalReport>& reports);

}  // namespace planex
