#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace planex {

// UTF-8 helpers. Invalid bytes decode to U+FFFD and advance by one byte.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(char32_t cp);

bool is_space(char32_t cp);
bool is_ascii_punct(char32_t cp);

std::string trim(std::string_view text);
std::string ascii_lower(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace planex
