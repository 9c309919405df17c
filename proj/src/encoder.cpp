#include "planex/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "planex/text.hpp"

namespace planex {

using nlohmann::json;

void EncoderConfig::validate() const {
  if (buckets < 2) throw std::invalid_argument("encoder buckets must be >= 2");
  if (embed_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  if (max_length < 4) throw std::invalid_argument("max_length must be >= 4");
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig c;
  c.buckets = j.value("buckets", c.buckets);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.max_length = j.value("max_length", c.max_length);
  c.validate();
  return c;
}

json EncoderConfig::to_json() const {
  return {{"buckets", buckets},
          {"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"max_length", max_length}};
}

namespace {

bool is_cjk(char32_t c) {
  return (c >= 0x3040 && c <= 0x30FF) || (c >= 0x3400 && c <= 0x4DBF) ||
         (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0xAC00 && c <= 0xD7AF) ||
         (c >= 0xF900 && c <= 0xFAFF) || (c >= 0xFF00 && c <= 0xFFEF) ||
         (c >= 0x3000 && c <= 0x303F);
}

void append(std::vector<std::string>& out, const std::vector<std::string>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

std::vector<std::string> encoder_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::u32string word;
  auto flush = [&] {
    if (word.empty()) return;
    std::string bytes;
    for (char32_t c : word) bytes += encode_utf8(c);
    out.push_back(ascii_lower(bytes));
    word.clear();
  };
  for (char32_t c : decode_utf8(text)) {
    if (is_space(c)) {
      flush();
    } else if (is_cjk(c) || is_ascii_punct(c)) {
      flush();
      out.push_back(encode_utf8(c));
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

std::vector<std::string> encode_pair(const ExtractionState& state, const std::string& action,
                                     size_t max_length) {
  std::vector<std::string> head{kClsToken};
  append(head, encoder_tokens(action));
  head.push_back(kSepToken);
  append(head, encoder_tokens(state.type_label));
  for (const auto& [role, args] : state.extracted) {
    append(head, encoder_tokens(role));
    head.push_back(":");
    for (size_t i = 0; i < args.size(); ++i) {
      if (i > 0) head.push_back(",");
      append(head, encoder_tokens(args[i]));
    }
    head.push_back(";");
  }
  auto sentence = encoder_tokens(state.sentence);

  if (head.size() + sentence.size() + 1 > max_length) {
    const size_t room = max_length > head.size() + 1 ? max_length - head.size() - 1 : 0;
    sentence.resize(std::min(sentence.size(), room));
    if (head.size() + 1 > max_length) head.resize(max_length - 1);
  }
  append(head, sentence);
  head.push_back(kSepToken);
  return head;
}

uint64_t fnv1a64(std::string_view bytes, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<uint64_t> hash_features(const std::vector<std::string>& tokens,
                                    uint64_t buckets) {
  std::vector<uint64_t> out;
  out.reserve(tokens.size() * 2);
  int segment = 0;
  std::string prev;
  for (const auto& tok : tokens) {
    const std::string tag = std::to_string(segment) + '\x1f';
    out.push_back(fnv1a64(tag + tok) % buckets);
    if (!prev.empty()) out.push_back(fnv1a64(tag + prev + '\x1f' + tok) % buckets);
    prev = tok;
    if (tok == kSepToken) ++segment;
  }
  return out;
}

}  // namespace planex
