#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace planex {

enum class TemplateId { kClassify, kExtract, kJudge };

std::string to_string(TemplateId id);

// Template body with {{name}} placeholders. One trailing newline of the
// source file is dropped so that rendered prompts end at "Output:".
struct PromptTemplate {
  TemplateId id = TemplateId::kClassify;
  std::string body;

  static PromptTemplate builtin(TemplateId id);
  static PromptTemplate load(TemplateId id, const std::filesystem::path& path);
};

class PromptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class JudgeParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Replaces every {{name}} in `body`. Unknown or missing names throw.
std::string render_placeholders(std::string_view body,
                                 const std::map<std::string, std::string>& values);

// Role -> arguments in extraction order.
using ExtractedContent = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct ExtractorInput {
  std::string sentence;
  std::string type_label;
  ExtractedContent extracted_content;
  std::string wanted_role;
};

struct ClassifyExample {
  std::string sentence;
  std::vector<std::string> candidates;
  std::vector<std::string> output;
};

struct ExtractExample {
  ExtractorInput input;
  std::vector<std::string> output;
};

struct JudgeExample {
  std::string extracted;
  std::string ground_truth;
  int score = 0;
};

// In-context examples for each prompt family.
struct PromptExamples {
  std::vector<ClassifyExample> classify;
  std::vector<ExtractExample> extract;
  std::vector<JudgeExample> judge = default_judge_examples();

  static std::vector<JudgeExample> default_judge_examples();
  // JSON object with optional "classify", "extract", "judge" arrays.
  static PromptExamples load_json(const std::filesystem::path& path);
};

// Templates and examples used by a remote backend.
struct PromptSet {
  PromptTemplate classify = PromptTemplate::builtin(TemplateId::kClassify);
  PromptTemplate extract = PromptTemplate::builtin(TemplateId::kExtract);
  PromptTemplate judge = PromptTemplate::builtin(TemplateId::kJudge);
  PromptExamples examples;

  // Loads classify.txt, extract.txt and judge.txt from `dir`.
  static PromptSet from_directory(const std::filesystem::path& dir);
};

// "role: a1, a2; role2: b1" in extraction order.
std::string format_extracted_content(const ExtractedContent& content);
// {"text": ..., "relation/event": ..., "extracted content": {...}, "the role I want": ...}
std::string format_extractor_input(const ExtractorInput& input);
std::string format_candidate_list(const std::vector<std::string>& candidates);

std::string render_classification_prompt(
    const std::string& sentence, const std::vector<std::string>& candidates,
    const std::vector<ClassifyExample>& examples,
    const PromptTemplate& tmpl = PromptTemplate::builtin(TemplateId::kClassify));

std::string render_extraction_prompt(
    const ExtractorInput& input, const std::vector<ExtractExample>& examples,
    const PromptTemplate& tmpl = PromptTemplate::builtin(TemplateId::kExtract));

std::string render_judge_prompt(
    const std::string& extracted, const std::string& ground_truth,
    const std::vector<JudgeExample>& examples =
        PromptExamples::default_judge_examples(),
    const PromptTemplate& tmpl = PromptTemplate::builtin(TemplateId::kJudge));

// Splits on ',' and '，', trims, drops empties and repeats.
std::vector<std::string> parse_list_reply(std::string_view reply);

// First standalone 0 or 1 in the reply; JudgeParseError if none.
int parse_judge_reply(std::string_view reply);

}  // namespace planex
