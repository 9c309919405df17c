#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "planex/environment.hpp"

namespace planex {

struct EncoderConfig {
  uint64_t buckets = uint64_t{1} << 18;
  int embed_dim = 64;
  int hidden_dim = 128;
  size_t max_length = 512;

  void validate() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  bool operator==(const EncoderConfig&) const = default;
};

inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

// Lowercased ASCII words; every CJK character and punctuation mark is its
// own token.
std::vector<std::string> encoder_tokens(const std::string& text);

// [CLS] action [SEP] type, extracted pairs, sentence [SEP]. When longer than
// `max_length` the sentence tail is cut; the closing [SEP] is kept.
std::vector<std::string> encode_pair(const ExtractionState& state, const std::string& action,
                                     size_t max_length);

uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);

// Hashed unigram and bigram buckets. Tokens are tagged with the index of the
// segment they belong to, so an action word and the same word in the
// sentence land in different buckets.
std::vector<uint64_t> hash_features(const std::vector<std::string>& tokens, uint64_t buckets);

using Features = std::vector<uint64_t>;

inline Features featurize(const ExtractionState& state, const std::string& action,
                          const EncoderConfig& config) {
  return hash_features(encode_pair(state, action, config.max_length), config.buckets);
}

}  // namespace planex
