#include "planex/reward.hpp"

#include <stdexcept>

#include "planex/log.hpp"
#include "planex/text.hpp"

namespace planex {

TokenMode token_mode_for(LanguageMode language) {
  return language == LanguageMode::kCharacter ? TokenMode::kCharacter
                                              : TokenMode::kWord;
}

TokenMode parse_token_mode(const std::string& text) {
  if (text == "word") return TokenMode::kWord;
  if (text == "character") return TokenMode::kCharacter;
  throw std::invalid_argument("unknown tokenizer mode '" + text + "'");
}

std::string to_string(TokenMode mode) {
  return mode == TokenMode::kWord ? "word" : "character";
}

std::set<std::string> tokenize(std::string_view text, TokenMode mode) {
  std::set<std::string> tokens;
  const auto cps = decode_utf8(text);
  if (mode == TokenMode::kCharacter) {
    for (char32_t cp : cps) {
      if (!is_space(cp)) tokens.insert(encode_utf8(cp));
    }
    return tokens;
  }
  std::string current;
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      if (!current.empty()) tokens.insert(std::move(current));
      current.clear();
    } else if (!is_ascii_punct(cp)) {
      current += cp < 0x80 ? ascii_lower(encode_utf8(cp)) : encode_utf8(cp);
    }
  }
  if (!current.empty()) tokens.insert(std::move(current));
  return tokens;
}

double jaccard(std::string_view a, std::string_view b, TokenMode mode) {
  const auto ta = tokenize(a, mode);
  const auto tb = tokenize(b, mode);
  if (ta.empty() && tb.empty()) return 1.0;
  size_t common = 0;
  for (const auto& t : ta) common += tb.count(t);
  const size_t total = ta.size() + tb.size() - common;
  return static_cast<double>(common) / static_cast<double>(total);
}

void RewardConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("reward threshold must be in [0, 1]");
  }
  if (!(magnitude > 0.0)) throw std::invalid_argument("reward magnitude must be > 0");
}

RewardConfig RewardConfig::from_json(const nlohmann::json& j) {
  RewardConfig c;
  c.threshold = j.value("threshold", c.threshold);
  c.magnitude = j.value("magnitude", c.magnitude);
  const auto judge = j.value("judge", std::string("alias-oracle"));
  if (judge == "llm") {
    c.judge = JudgeKind::kLlm;
  } else if (judge == "alias-oracle") {
    c.judge = JudgeKind::kAliasOracle;
  } else {
    throw std::invalid_argument("unknown judge kind '" + judge + "'");
  }
  if (j.contains("tokenizer")) c.tokens = parse_token_mode(j.at("tokenizer"));
  c.validate();
  return c;
}

nlohmann::json RewardConfig::to_json() const {
  return {{"threshold", threshold},
          {"magnitude", magnitude},
          {"judge", judge == JudgeKind::kLlm ? "llm" : "alias-oracle"},
          {"tokenizer", to_string(tokens)}};
}

RewardModule::RewardModule(RewardConfig config, Judge& judge)
    : config_(config), judge_(judge) {
  config_.validate();
}

double RewardModule::reward(const std::string& extracted, const std::string& gold) {
  if (gold.empty()) throw std::invalid_argument("reward needs a non-empty gold argument");
  if (jaccard(extracted, gold, config_.tokens) <= config_.threshold) return 0.0;
  ++judge_calls_;
  try {
    return judge_.judge(extracted, gold) == 1 ? config_.magnitude : 0.0;
  } catch (const std::exception& e) {
    log_warning(std::string("judge failed (") + e.what() + "); reward 0");
    return 0.0;
  }
}

}  // namespace planex
