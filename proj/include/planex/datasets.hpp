#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace planex {

enum class TaskKind { kRelation, kEvent };
enum class LanguageMode { kWhitespace, kCharacter };

TaskKind parse_task_kind(const std::string& text);
LanguageMode parse_language_mode(const std::string& text);
std::string to_string(TaskKind kind);
std::string to_string(LanguageMode mode);

// Role name -> arguments. Roles absent from the map have no gold argument.
using RoleArgs = std::map<std::string, std::vector<std::string>>;

struct GoldRecord {
  std::string type_label;  // naturalized
  RoleArgs role_args;

  bool operator==(const GoldRecord&) const = default;
};

struct TaskInstance {
  std::string id;
  std::string sentence;
  std::vector<GoldRecord> gold_records;
  LanguageMode language = LanguageMode::kWhitespace;
};

struct RoleSchema {
  std::string type_label;
  std::vector<std::string> roles;  // canonical (fixed-baseline) order

  bool operator==(const RoleSchema&) const = default;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LabelLookupError : public std::runtime_error {
 public:
  explicit LabelLookupError(const std::string& raw)
      : std::runtime_error("no natural label for raw label '" + raw + "'"),
        raw_(raw) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class SchemaNotFoundError : public std::runtime_error {
 public:
  explicit SchemaNotFoundError(const std::string& type_label)
      : std::runtime_error("no role schema registered for '" + type_label + "'") {}
};

// Raw dataset label <-> plain-language phrase. Injective on the raw side.
class LabelMap {
 public:
  // Two columns separated by a tab; '#' starts a comment line.
  static LabelMap load_tsv(const std::filesystem::path& path);

  void insert(const std::string& raw, const std::string& natural);
  std::optional<std::string> to_natural(const std::string& raw) const;
  std::optional<std::string> to_raw(const std::string& natural) const;
  size_t size() const { return forward_.size(); }
  const std::map<std::string, std::string>& entries() const { return forward_; }

 private:
  std::map<std::string, std::string> forward_;
  std::map<std::string, std::string> backward_;
};

// Returns the mapped phrase. Without strict mode an unknown label passes
// through unchanged with a warning; with it, LabelLookupError is thrown.
std::string naturalize_label(const std::string& raw, const LabelMap& map,
                             bool strict = false);

class SchemaRegistry {
 public:
  // JSON object: type_label -> ordered role list.
  static SchemaRegistry load_json(const std::filesystem::path& path);
  static SchemaRegistry from_json(const nlohmann::ordered_json& j);

  void add(RoleSchema schema);
  bool contains(const std::string& type_label) const;
  const RoleSchema& get(const std::string& type_label) const;
  // Registered type labels in registration order.
  const std::vector<std::string>& type_labels() const { return order_; }
  nlohmann::ordered_json to_json() const;

  // Checks the relation-schema shape: exactly two roles,
  // "subject: <type>" then "object: <type>".
  void validate_relation_schemas() const;

 private:
  std::map<std::string, RoleSchema> schemas_;
  std::vector<std::string> order_;
};

RoleSchema derive_role_schema(const std::string& type_label,
                              const SchemaRegistry& registry);

struct Diagnostic {
  size_t line = 0;
  std::string message;
};

struct LoadOptions {
  bool strict_labels = false;
  LanguageMode language = LanguageMode::kWhitespace;
};

// Loads line-delimited JSON records. Malformed lines are skipped and
// reported in `diagnostics`; LabelLookupError aborts in strict mode.
std::vector<TaskInstance> load_dataset(const std::filesystem::path& path,
                                       TaskKind format, const LabelMap& labels,
                                       const SchemaRegistry& registry,
                                       const LoadOptions& options,
                                       std::vector<Diagnostic>* diagnostics);

std::vector<TaskInstance> parse_dataset(std::istream& in, TaskKind format,
                                        const LabelMap& labels,
                                        const SchemaRegistry& registry,
                                        const LoadOptions& options,
                                        std::vector<Diagnostic>* diagnostics);

// Inverse of the loader for one instance; labels are mapped back to raw.
nlohmann::json serialize_instance(const TaskInstance& instance, TaskKind format,
                                  const LabelMap& labels,
                                  const SchemaRegistry& registry);

struct DatasetManifest {
  std::string name;
  TaskKind task = TaskKind::kRelation;
  LanguageMode language = LanguageMode::kWhitespace;
  std::filesystem::path records;
  std::filesystem::path label_map;  // empty: identity map
  std::filesystem::path schemas;
  bool strict_labels = false;

  nlohmann::json to_json() const;
};

// Relative paths in the manifest resolve against its directory.
DatasetManifest load_manifest(const std::filesystem::path& path);

struct Dataset {
  DatasetManifest manifest;
  LabelMap labels;
  SchemaRegistry registry;
  std::vector<TaskInstance> instances;
  std::vector<Diagnostic> diagnostics;
};

Dataset load_dataset_from_manifest(const std::filesystem::path& manifest_path);

}  // namespace planex
