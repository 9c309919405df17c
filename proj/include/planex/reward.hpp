#pragma once

#include <atomic>
#include <set>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "planex/backend.hpp"
#include "planex/datasets.hpp"

namespace planex {

enum class TokenMode { kWord, kCharacter };

TokenMode token_mode_for(LanguageMode language);
TokenMode parse_token_mode(const std::string& text);
std::string to_string(TokenMode mode);

// Word mode: whitespace tokens, ASCII-lowercased, ASCII punctuation removed.
// Character mode: every non-whitespace code point.
std::set<std::string> tokenize(std::string_view text, TokenMode mode);

// |A ∩ B| / |A ∪ B| over token sets; 1 when both are empty.
double jaccard(std::string_view a, std::string_view b, TokenMode mode);

enum class JudgeKind { kLlm, kAliasOracle };

struct RewardConfig {
  double threshold = 0.85;
  double magnitude = 10.0;
  JudgeKind judge = JudgeKind::kAliasOracle;
  TokenMode tokens = TokenMode::kWord;

  void validate() const;
  static RewardConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Two-valued reward: 0 when the similarity gate rejects, otherwise the
// judge decides between 0 and the configured magnitude.
class RewardModule {
 public:
  RewardModule(RewardConfig config, Judge& judge);

  // `gold` must be non-empty. Judge failures score 0.
  double reward(const std::string& extracted, const std::string& gold);

  const RewardConfig& config() const { return config_; }
  size_t judge_calls() const { return judge_calls_.load(); }

 private:
  RewardConfig config_;
  Judge& judge_;
  std::atomic<size_t> judge_calls_{0};
};

}  // namespace planex
