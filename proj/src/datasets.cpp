#include "planex/datasets.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "planex/log.hpp"
#include "planex/text.hpp"

namespace planex {

using nlohmann::json;

TaskKind parse_task_kind(const std::string& text) {
  if (text == "re") return TaskKind::kRelation;
  if (text == "ee") return TaskKind::kEvent;
  throw DataError("unknown task kind '" + text + "' (expected re or ee)");
}

LanguageMode parse_language_mode(const std::string& text) {
  if (text == "whitespace" || text == "word") return LanguageMode::kWhitespace;
  if (text == "character" || text == "char") return LanguageMode::kCharacter;
  throw DataError("unknown language mode '" + text +
                  "' (expected whitespace or character)");
}

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kRelation ? "re" : "ee";
}

std::string to_string(LanguageMode mode) {
  return mode == LanguageMode::kWhitespace ? "whitespace" : "character";
}

// ---- LabelMap ----

LabelMap LabelMap::load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label map " + path.string());
  LabelMap map;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected two tab-separated columns");
    }
    map.insert(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
  }
  return map;
}

void LabelMap::insert(const std::string& raw, const std::string& natural) {
  if (raw.empty() || natural.empty()) {
    throw DataError("label map entries must be non-empty");
  }
  auto it = forward_.find(raw);
  if (it != forward_.end() && it->second != natural) {
    throw DataError("raw label '" + raw + "' mapped twice");
  }
  auto back = backward_.find(natural);
  if (back != backward_.end() && back->second != raw) {
    throw DataError("natural label '" + natural + "' is not reversible");
  }
  forward_[raw] = natural;
  backward_[natural] = raw;
}

std::optional<std::string> LabelMap::to_natural(const std::string& raw) const {
  auto it = forward_.find(raw);
  if (it == forward_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> LabelMap::to_raw(const std::string& natural) const {
  auto it = backward_.find(natural);
  if (it == backward_.end()) return std::nullopt;
  return it->second;
}

std::string naturalize_label(const std::string& raw, const LabelMap& map,
                             bool strict) {
  if (auto natural = map.to_natural(raw)) return *natural;
  if (map.size() == 0) return raw;
  if (strict) throw LabelLookupError(raw);
  if (!map.to_raw(raw)) {
    log_warning("label '" + raw + "' has no natural form; using it unchanged");
  }
  return raw;
}

// ---- SchemaRegistry ----

SchemaRegistry SchemaRegistry::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema registry " + path.string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

SchemaRegistry SchemaRegistry::from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw DataError("schema registry must be a JSON object");
  SchemaRegistry registry;
  for (const auto& [label, roles] : j.items()) {
    if (!roles.is_array()) {
      throw DataError("roles of '" + label + "' must be an array");
    }
    RoleSchema schema{label, {}};
    for (const auto& r : roles) schema.roles.push_back(r.get<std::string>());
    registry.add(std::move(schema));
  }
  return registry;
}

void SchemaRegistry::add(RoleSchema schema) {
  if (schema.roles.empty()) {
    throw DataError("schema '" + schema.type_label + "' has no roles");
  }
  std::set<std::string> seen;
  for (const auto& r : schema.roles) {
    if (r.empty() || !seen.insert(r).second) {
      throw DataError("schema '" + schema.type_label +
                      "' has an empty or repeated role");
    }
  }
  if (!schemas_.count(schema.type_label)) order_.push_back(schema.type_label);
  schemas_[schema.type_label] = std::move(schema);
}

bool SchemaRegistry::contains(const std::string& type_label) const {
  return schemas_.count(type_label) > 0;
}

const RoleSchema& SchemaRegistry::get(const std::string& type_label) const {
  auto it = schemas_.find(type_label);
  if (it == schemas_.end()) throw SchemaNotFoundError(type_label);
  return it->second;
}

nlohmann::ordered_json SchemaRegistry::to_json() const {
  auto j = nlohmann::ordered_json::object();
  for (const auto& label : order_) j[label] = schemas_.at(label).roles;
  return j;
}

void SchemaRegistry::validate_relation_schemas() const {
  for (const auto& label : order_) {
    const auto& roles = schemas_.at(label).roles;
    if (roles.size() != 2 || roles[0].rfind("subject: ", 0) != 0 ||
        roles[1].rfind("object: ", 0) != 0) {
      throw DataError("relation schema '" + label +
                      "' must be [\"subject: <type>\", \"object: <type>\"]");
    }
  }
}

RoleSchema derive_role_schema(const std::string& type_label,
                              const SchemaRegistry& registry) {
  return registry.get(type_label);
}

// ---- records ----

namespace {

std::vector<std::string> string_list(const json& j) {
  std::vector<std::string> out;
  if (j.is_string()) {
    out.push_back(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& v : j) out.push_back(v.get<std::string>());
  } else {
    throw DataError("argument values must be a string or a list of strings");
  }
  return out;
}

void check_argument(const std::string& arg) {
  if (trim(arg).empty()) throw DataError("empty argument string");
}

GoldRecord parse_triple(const json& t, const LabelMap& labels,
                        const SchemaRegistry& registry, bool strict) {
  const auto raw = t.at("relation").get<std::string>();
  GoldRecord rec;
  rec.type_label = naturalize_label(raw, labels, strict);
  const auto& schema = registry.get(rec.type_label);
  if (schema.roles.size() != 2) {
    throw DataError("relation '" + rec.type_label + "' schema needs two roles");
  }
  rec.role_args[schema.roles[0]] = string_list(t.at("subject"));
  rec.role_args[schema.roles[1]] = string_list(t.at("object"));
  return rec;
}

GoldRecord parse_event(const json& e, const LabelMap& labels,
                       const SchemaRegistry& registry, bool strict) {
  GoldRecord rec;
  rec.type_label =
      naturalize_label(e.at("event_type").get<std::string>(), labels, strict);
  const auto& schema = registry.get(rec.type_label);
  const std::set<std::string> allowed(schema.roles.begin(), schema.roles.end());
  for (const auto& [role, values] : e.at("args").items()) {
    if (!allowed.count(role)) {
      throw DataError("role '" + role + "' is not in the schema of '" +
                      rec.type_label + "'");
    }
    rec.role_args[role] = string_list(values);
  }
  return rec;
}

TaskInstance parse_record(const json& j, TaskKind format, const LabelMap& labels,
                          const SchemaRegistry& registry,
                          const LoadOptions& options) {
  TaskInstance inst;
  inst.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                   : j.at("id").dump();
  inst.sentence = j.at("sentence").get<std::string>();
  inst.language = options.language;
  if (trim(inst.sentence).empty()) throw DataError("empty sentence");
  if (format == TaskKind::kRelation) {
    for (const auto& t : j.at("triples")) {
      inst.gold_records.push_back(
          parse_triple(t, labels, registry, options.strict_labels));
    }
  } else {
    for (const auto& e : j.at("events")) {
      inst.gold_records.push_back(
          parse_event(e, labels, registry, options.strict_labels));
    }
  }
  for (const auto& rec : inst.gold_records) {
    for (const auto& [role, args] : rec.role_args) {
      if (args.empty()) throw DataError("role '" + role + "' has no arguments");
      for (const auto& a : args) check_argument(a);
    }
  }
  return inst;
}

}  // namespace

std::vector<TaskInstance> parse_dataset(std::istream& in, TaskKind format,
                                        const LabelMap& labels,
                                        const SchemaRegistry& registry,
                                        const LoadOptions& options,
                                        std::vector<Diagnostic>* diagnostics) {
  std::vector<TaskInstance> out;
  std::set<std::string> ids;
  std::string line;
  size_t lineno = 0;
  auto report = [&](const std::string& msg) {
    log_warning("line " + std::to_string(lineno) + ": " + msg);
    if (diagnostics) diagnostics->push_back({lineno, msg});
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto inst = parse_record(json::parse(line), format, labels, registry,
                               options);
      if (!ids.insert(inst.id).second) {
        report("duplicate id '" + inst.id + "'");
        continue;
      }
      out.push_back(std::move(inst));
    } catch (const LabelLookupError&) {
      throw;
    } catch (const json::exception& e) {
      report(std::string("malformed record: ") + e.what());
    } catch (const std::exception& e) {
      report(e.what());
    }
  }
  return out;
}

std::vector<TaskInstance> load_dataset(const std::filesystem::path& path,
                                       TaskKind format, const LabelMap& labels,
                                       const SchemaRegistry& registry,
                                       const LoadOptions& options,
                                       std::vector<Diagnostic>* diagnostics) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_dataset(in, format, labels, registry, options, diagnostics);
}

json serialize_instance(const TaskInstance& instance, TaskKind format,
                        const LabelMap& labels, const SchemaRegistry& registry) {
  auto values = [](const std::vector<std::string>& args) -> json {
    if (args.size() == 1) return args.front();
    return args;
  };
  json j;
  j["id"] = instance.id;
  j["sentence"] = instance.sentence;
  if (format == TaskKind::kRelation) {
    json triples = json::array();
    for (const auto& rec : instance.gold_records) {
      const auto& schema = registry.get(rec.type_label);
      triples.push_back({{"relation", labels.to_raw(rec.type_label)
                                          .value_or(rec.type_label)},
                         {"subject", values(rec.role_args.at(schema.roles[0]))},
                         {"object", values(rec.role_args.at(schema.roles[1]))}});
    }
    j["triples"] = std::move(triples);
  } else {
    json events = json::array();
    for (const auto& rec : instance.gold_records) {
      json args = json::object();
      for (const auto& [role, a] : rec.role_args) args[role] = a;
      events.push_back(
          {{"event_type", labels.to_raw(rec.type_label).value_or(rec.type_label)},
           {"args", std::move(args)}});
    }
    j["events"] = std::move(events);
  }
  return j;
}

// ---- manifest ----

json DatasetManifest::to_json() const {
  json j{{"name", name},
         {"task", to_string(task)},
         {"language", to_string(language)},
         {"records", records.string()},
         {"schemas", schemas.string()},
         {"strict_labels", strict_labels}};
  if (!label_map.empty()) j["label_map"] = label_map.string();
  return j;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.task = parse_task_kind(j.at("task").get<std::string>());
    m.language = parse_language_mode(j.at("language").get<std::string>());
    m.records = resolve(j.at("records").get<std::string>());
    m.schemas = resolve(j.at("schemas").get<std::string>());
    if (j.contains("label_map")) {
      m.label_map = resolve(j.at("label_map").get<std::string>());
    }
    m.strict_labels = j.value("strict_labels", false);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return m;
}

Dataset load_dataset_from_manifest(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  if (!ds.manifest.label_map.empty()) {
    ds.labels = LabelMap::load_tsv(ds.manifest.label_map);
  }
  ds.registry = SchemaRegistry::load_json(ds.manifest.schemas);
  if (ds.manifest.task == TaskKind::kRelation) {
    ds.registry.validate_relation_schemas();
  }
  LoadOptions opts{ds.manifest.strict_labels, ds.manifest.language};
  ds.instances = load_dataset(ds.manifest.records, ds.manifest.task, ds.labels,
                              ds.registry, opts, &ds.diagnostics);
  return ds;
}

}  // namespace planex
