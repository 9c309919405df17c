#include "planex/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace planex {

using nlohmann::json;

void MatchConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("match threshold must be in [0, 1]");
  }
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
}

MatchConfig MatchConfig::from_json(const json& j) {
  MatchConfig c;
  c.threshold = j.value("threshold", c.threshold);
  if (j.contains("tokenizer")) c.tokens = parse_token_mode(j.at("tokenizer").get<std::string>());
  c.runs = j.value("runs", c.runs);
  c.validate();
  return c;
}

json MatchConfig::to_json() const {
  return {{"threshold", threshold}, {"tokenizer", to_string(tokens)}, {"runs", runs}};
}

std::vector<int> max_bipartite_matching(const std::vector<std::vector<bool>>& adjacent) {
  const size_t rows = adjacent.size();
  const size_t cols = rows == 0 ? 0 : adjacent.front().size();
  std::vector<int> row_of_col(cols, -1);
  std::vector<int> col_of_row(rows, -1);
  std::vector<char> seen;
  std::function<bool(size_t)> augment = [&](size_t r) {
    for (size_t c = 0; c < cols; ++c) {
      if (!adjacent[r][c] || seen[c]) continue;
      seen[c] = 1;
      if (row_of_col[c] < 0 || augment(static_cast<size_t>(row_of_col[c]))) {
        row_of_col[c] = static_cast<int>(r);
        col_of_row[r] = static_cast<int>(c);
        return true;
      }
    }
    return false;
  };
  for (size_t r = 0; r < rows; ++r) {
    seen.assign(cols, 0);
    augment(r);
  }
  return col_of_row;
}

namespace {

const std::vector<std::string> kNone;

const std::vector<std::string>& args_of(const RoleArgs& args, const std::string& role) {
  auto it = args.find(role);
  return it == args.end() ? kNone : it->second;
}

// Roles with no arguments are dropped so that {} and {"r": []} compare equal.
RoleArgs canonical(const RoleArgs& args) {
  RoleArgs out;
  for (const auto& [role, values] : args) {
    if (!values.empty()) out.emplace(role, values);
  }
  return out;
}

}  // namespace

// Identical token sets always pass, so a threshold of 1.0 means exact match.
bool argument_match(const std::string& pred, const std::string& gold, const MatchConfig& config) {
  const double sim = jaccard(pred, gold, config.tokens);
  return sim > config.threshold || sim == 1.0;
}

bool record_match(const StructuredOutput& pred, const GoldRecord& gold,
                  const MatchConfig& config) {
  if (pred.type_label != gold.type_label) return false;
  std::set<std::string> roles;
  for (const auto& [role, args] : pred.role_args) roles.insert(role);
  for (const auto& [role, args] : gold.role_args) roles.insert(role);
  for (const auto& role : roles) {
    const auto& p = args_of(pred.role_args, role);
    const auto& g = args_of(gold.role_args, role);
    if (p.size() != g.size()) return false;
    if (g.empty()) continue;
    std::vector<std::vector<bool>> adj(g.size(), std::vector<bool>(p.size()));
    for (size_t i = 0; i < g.size(); ++i) {
      for (size_t j = 0; j < p.size(); ++j) {
        adj[i][j] = argument_match(p[j], g[i], config);
      }
    }
    const auto m = max_bipartite_matching(adj);
    for (int c : m) {
      if (c < 0) return false;
    }
  }
  return true;
}

EvalReport make_report(size_t matched, size_t predicted, size_t gold) {
  EvalReport r;
  r.matched = matched;
  r.predicted = predicted;
  r.gold = gold;
  r.precision = predicted == 0 ? 0.0 : static_cast<double>(matched) / predicted;
  r.recall = gold == 0 ? 0.0 : static_cast<double>(matched) / gold;
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

EvalReport score(const std::vector<InstancePredictions>& preds,
                 const std::vector<TaskInstance>& golds, const MatchConfig& config) {
  config.validate();
  std::map<std::string, std::vector<StructuredOutput>> by_id;
  for (const auto& p : preds) {
    auto& bucket = by_id[p.id];
    for (const auto& out : p.outputs) {
      StructuredOutput c{out.type_label, canonical(out.role_args), {}};
      if (std::find(bucket.begin(), bucket.end(), c) == bucket.end()) bucket.push_back(c);
    }
  }

  size_t matched = 0, predicted = 0, gold_total = 0;
  std::vector<LedgerEntry> ledger;
  std::set<std::string> seen_ids;
  for (const auto& inst : golds) {
    seen_ids.insert(inst.id);
    const auto it = by_id.find(inst.id);
    const auto& outputs = it == by_id.end() ? std::vector<StructuredOutput>{} : it->second;
    std::vector<std::vector<bool>> adj(inst.gold_records.size(),
                                       std::vector<bool>(outputs.size()));
    for (size_t g = 0; g < inst.gold_records.size(); ++g) {
      for (size_t p = 0; p < outputs.size(); ++p) {
        adj[g][p] = record_match(outputs[p], inst.gold_records[g], config);
      }
    }
    LedgerEntry entry{inst.id, outputs.size(), inst.gold_records.size(), 0, {}};
    const auto m = max_bipartite_matching(adj);
    for (size_t g = 0; g < m.size(); ++g) {
      if (m[g] >= 0) {
        ++entry.matched;
        entry.pairs.emplace_back(static_cast<size_t>(m[g]), g);
      }
    }
    matched += entry.matched;
    predicted += entry.predicted;
    gold_total += entry.gold;
    ledger.push_back(std::move(entry));
  }
  for (const auto& [id, outputs] : by_id) {
    if (seen_ids.count(id) || outputs.empty()) continue;
    predicted += outputs.size();
    ledger.push_back({id, outputs.size(), 0, 0, {}});
  }
  auto report = make_report(matched, predicted, gold_total);
  report.ledger = std::move(ledger);
  return report;
}

std::vector<TaskInstance> filter_complicated(const std::vector<TaskInstance>& instances,
                                             ComplicatedKind kind, size_t n,
                                             const SchemaRegistry& registry) {
  if (n < 1) throw std::invalid_argument("complicated-subset threshold must be >= 1");
  std::vector<TaskInstance> out;
  for (const auto& inst : instances) {
    bool keep = false;
    if (kind == ComplicatedKind::kMinTriples) {
      keep = inst.gold_records.size() > n;
    } else {
      for (const auto& g : inst.gold_records) {
        if (registry.contains(g.type_label) && registry.get(g.type_label).roles.size() > n) {
          keep = true;
        }
      }
    }
    if (keep) out.push_back(inst);
  }
  return out;
}

EvalReport average_runs(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_runs of no reports");
  EvalReport avg;
  double matched = 0, predicted = 0, gold = 0;
  for (const auto& r : reports) {
    avg.precision += r.precision;
    avg.recall += r.recall;
    avg.f1 += r.f1;
    matched += static_cast<double>(r.matched);
    predicted += static_cast<double>(r.predicted);
    gold += static_cast<double>(r.gold);
  }
  const double n = static_cast<double>(reports.size());
  avg.precision /= n;
  avg.recall /= n;
  avg.f1 /= n;
  avg.matched = static_cast<size_t>(std::llround(matched / n));
  avg.predicted = static_cast<size_t>(std::llround(predicted / n));
  avg.gold = static_cast<size_t>(std::llround(gold / n));
  return avg;
}

json EvalReport::to_json(bool with_ledger) const {
  json j{{"precision", precision}, {"recall", recall},       {"f1", f1},
         {"matched", matched},     {"predicted", predicted}, {"gold", gold}};
  if (with_ledger) {
    json rows = json::array();
    for (const auto& e : ledger) {
      rows.push_back({{"id", e.id},
                      {"predicted", e.predicted},
                      {"gold", e.gold},
                      {"matched", e.matched},
                      {"pairs", e.pairs}});
    }
    j["ledger"] = std::move(rows);
  }
  return j;
}

std::string EvalReport::table(const std::string& title) const {
  char line[160];
  std::ostringstream out;
  std::snprintf(line, sizeof(line), "%-16s %9s %9s %9s %9s %9s %9s\n", title.c_str(), "Prec.",
                "Reca.", "F1", "matched", "pred", "gold");
  out << line;
  std::snprintf(line, sizeof(line), "%-16s %9.4f %9.4f %9.4f %9zu %9zu %9zu\n", "", precision,
                recall, f1, matched, predicted, gold);
  out << line;
  return out.str();
}

}  // namespace planex
