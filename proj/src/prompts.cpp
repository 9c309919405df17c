#include "planex/prompts.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "planex/builtin_templates.hpp"
#include "planex/text.hpp"

namespace planex {

using nlohmann::json;

std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::kClassify:
      return "classify";
    case TemplateId::kExtract:
      return "extract";
    case TemplateId::kJudge:
      return "judge";
  }
  return "unknown";
}

namespace {

std::string strip_one_newline(std::string body) {
  if (!body.empty() && body.back() == '\n') body.pop_back();
  if (!body.empty() && body.back() == '\r') body.pop_back();
  return body;
}

}  // namespace

PromptTemplate PromptTemplate::builtin(TemplateId id) {
  switch (id) {
    case TemplateId::kClassify:
      return {id, strip_one_newline(builtin::kClassifyTemplate)};
    case TemplateId::kExtract:
      return {id, strip_one_newline(builtin::kExtractTemplate)};
    case TemplateId::kJudge:
      return {id, strip_one_newline(builtin::kJudgeTemplate)};
  }
  throw PromptError("unknown template id");
}

PromptTemplate PromptTemplate::load(TemplateId id,
                                    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PromptError("cannot open template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return {id, strip_one_newline(ss.str())};
}

std::string render_placeholders(std::string_view body,
                                const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(body.size() + 256);
  size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(body.substr(pos));
      break;
    }
    const auto close = body.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw PromptError("unterminated placeholder in template");
    }
    out.append(body.substr(pos, open - pos));
    const std::string name(body.substr(open + 2, close - open - 2));
    auto it = values.find(name);
    if (it == values.end()) {
      throw PromptError("unresolved placeholder {{" + name + "}}");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

// ---- examples ----

std::vector<JudgeExample> PromptExamples::default_judge_examples() {
  return {{"USA", "the United States", 1},
          {"Beijing City", "Nanjing City", 0},
          {"California", "Hotel California", 0}};
}

namespace {

std::vector<std::string> strings(const json& j) {
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

ExtractedContent content_from_json(const json& j) {
  ExtractedContent c;
  for (const auto& pair : j) {
    c.emplace_back(pair.at(0).get<std::string>(), strings(pair.at(1)));
  }
  return c;
}

}  // namespace

PromptExamples PromptExamples::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PromptError("cannot open prompt examples " + path.string());
  PromptExamples ex;
  try {
    const json j = json::parse(in);
    for (const auto& e : j.value("classify", json::array())) {
      ex.classify.push_back({e.at("sentence").get<std::string>(),
                             strings(e.at("candidates")),
                             strings(e.at("output"))});
    }
    for (const auto& e : j.value("extract", json::array())) {
      ExtractExample x;
      x.input.sentence = e.at("sentence").get<std::string>();
      x.input.type_label = e.at("type").get<std::string>();
      x.input.extracted_content =
          content_from_json(e.value("extracted", json::array()));
      x.input.wanted_role = e.at("role").get<std::string>();
      x.output = strings(e.at("output"));
      ex.extract.push_back(std::move(x));
    }
    if (j.contains("judge")) {
      ex.judge.clear();
      for (const auto& e : j.at("judge")) {
        ex.judge.push_back({e.at("extracted").get<std::string>(),
                            e.at("ground_truth").get<std::string>(),
                            e.at("score").get<int>()});
      }
    }
  } catch (const json::exception& e) {
    throw PromptError(path.string() + ": " + e.what());
  }
  return ex;
}

PromptSet PromptSet::from_directory(const std::filesystem::path& dir) {
  PromptSet set;
  set.classify = PromptTemplate::load(TemplateId::kClassify, dir / "classify.txt");
  set.extract = PromptTemplate::load(TemplateId::kExtract, dir / "extract.txt");
  set.judge = PromptTemplate::load(TemplateId::kJudge, dir / "judge.txt");
  return set;
}

// ---- formatting ----

std::string format_extracted_content(const ExtractedContent& content) {
  std::vector<std::string> parts;
  parts.reserve(content.size());
  for (const auto& [role, args] : content) parts.push_back(role + ": " + join(args, ", "));
  return join(parts, "; ");
}

std::string format_extractor_input(const ExtractorInput& input) {
  return "{\"text\": \"" + input.sentence + "\", \"relation/event\": \"" +
         input.type_label + "\", \"extracted content\": {" +
         format_extracted_content(input.extracted_content) +
         "}, \"the role I want\": \"" + input.wanted_role + "\"}";
}

std::string format_candidate_list(const std::vector<std::string>& candidates) {
  std::vector<std::string> quoted;
  quoted.reserve(candidates.size());
  for (const auto& c : candidates) quoted.push_back("\"" + c + "\"");
  return "[" + join(quoted, ", ") + "]";
}

namespace {

void check_extractor_input(const ExtractorInput& input) {
  if (input.wanted_role.empty()) throw PromptError("wanted role is empty");
  for (const auto& [role, args] : input.extracted_content) {
    if (role == input.wanted_role) {
      throw PromptError("role '" + role + "' has already been extracted");
    }
  }
}

}  // namespace

std::string render_classification_prompt(
    const std::string& sentence, const std::vector<std::string>& candidates,
    const std::vector<ClassifyExample>& examples, const PromptTemplate& tmpl) {
  if (candidates.empty()) throw PromptError("candidate list is empty");
  std::vector<std::string> blocks;
  for (const auto& ex : examples) {
    blocks.push_back("Input: " + ex.sentence + ", " +
                     format_candidate_list(ex.candidates) +
                     "\nOutput: " + join(ex.output, ","));
  }
  return render_placeholders(tmpl.body,
                             {{"examples", join(blocks, "\n")},
                              {"sentence", sentence},
                              {"candidates", format_candidate_list(candidates)}});
}

std::string render_extraction_prompt(const ExtractorInput& input,
                                     const std::vector<ExtractExample>& examples,
                                     const PromptTemplate& tmpl) {
  check_extractor_input(input);
  std::vector<std::string> blocks;
  for (const auto& ex : examples) {
    blocks.push_back("Input: " + format_extractor_input(ex.input) +
                     "\nOutput: " + join(ex.output, ","));
  }
  return render_placeholders(tmpl.body, {{"examples", join(blocks, "\n")},
                                         {"input", format_extractor_input(input)}});
}

std::string render_judge_prompt(const std::string& extracted,
                                const std::string& ground_truth,
                                const std::vector<JudgeExample>& examples,
                                const PromptTemplate& tmpl) {
  if (extracted.empty() || ground_truth.empty()) {
    throw PromptError("judge prompt needs non-empty extracted and ground truth");
  }
  std::vector<std::string> blocks;
  for (const auto& ex : examples) {
    blocks.push_back("Extracted: " + ex.extracted + "; Ground-truth: " +
                     ex.ground_truth + "; Output: " + std::to_string(ex.score));
  }
  return render_placeholders(tmpl.body, {{"examples", join(blocks, "\n")},
                                         {"extracted", extracted},
                                         {"ground_truth", ground_truth}});
}

// ---- parsing ----

std::vector<std::string> parse_list_reply(std::string_view reply) {
  static constexpr std::string_view kFullWidthComma = "\xEF\xBC\x8C";
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto emit = [&](std::string_view piece) {
    auto item = trim(piece);
    if (!item.empty() && seen.insert(item).second) out.push_back(std::move(item));
  };
  size_t start = 0;
  size_t i = 0;
  while (i < reply.size()) {
    if (reply[i] == ',') {
      emit(reply.substr(start, i - start));
      start = ++i;
    } else if (reply.substr(i, kFullWidthComma.size()) == kFullWidthComma) {
      emit(reply.substr(start, i - start));
      i += kFullWidthComma.size();
      start = i;
    } else {
      ++i;
    }
  }
  emit(reply.substr(start));
  return out;
}

namespace {

bool is_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

int parse_judge_reply(std::string_view reply) {
  for (size_t i = 0; i < reply.size(); ++i) {
    const char c = reply[i];
    if (c != '0' && c != '1') continue;
    const bool left_ok =
        i == 0 || (!is_alnum(reply[i - 1]) &&
                   !(reply[i - 1] == '.' && i >= 2 && is_digit(reply[i - 2])));
    const bool right_ok =
        i + 1 == reply.size() ||
        (!is_alnum(reply[i + 1]) &&
         !(reply[i + 1] == '.' && i + 2 < reply.size() && is_digit(reply[i + 2])));
    if (left_ok && right_ok) return c - '0';
  }
  throw JudgeParseError("no standalone 0 or 1 in judge reply '" +
                        std::string(reply) + "'");
}

}  // namespace planex
