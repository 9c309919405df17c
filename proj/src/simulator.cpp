#include "planex/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>

#include "planex/environment.hpp"
#include "planex/text.hpp"

namespace planex {

using nlohmann::json;

namespace {

std::string normalize_surface(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char c : ascii_lower(trim(text))) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::set<std::string> normalized_set(const std::vector<std::string>& args) {
  std::set<std::string> out;
  for (const auto& a : args) out.insert(normalize_surface(a));
  return out;
}

// Throws DataError when the prerequisite relation has a cycle.
void check_acyclic(const std::vector<std::string>& roles,
                   const std::map<std::string, std::set<std::string>>& prereqs,
                   const std::string& where) {
  std::map<std::string, int> mark;  // 0 new, 1 on stack, 2 done
  std::function<void(const std::string&)> visit = [&](const std::string& role) {
    mark[role] = 1;
    auto it = prereqs.find(role);
    if (it != prereqs.end()) {
      for (const auto& dep : it->second) {
        if (mark[dep] == 1) {
          throw DataError(where + ": cyclic prerequisites through '" + dep + "'");
        }
        if (mark[dep] == 0) visit(dep);
      }
    }
    mark[role] = 2;
  };
  for (const auto& r : roles) {
    if (mark[r] == 0) visit(r);
  }
}

void check_prerequisites(const std::vector<std::string>& roles,
                         const std::map<std::string, std::set<std::string>>& prereqs,
                         const std::string& where) {
  const std::set<std::string> known(roles.begin(), roles.end());
  for (const auto& [role, deps] : prereqs) {
    if (!known.count(role)) {
      throw DataError(where + ": prerequisite for unknown role '" + role + "'");
    }
    for (const auto& d : deps) {
      if (!known.count(d) || d == role) {
        throw DataError(where + ": bad prerequisite '" + d + "' of '" + role + "'");
      }
    }
  }
  check_acyclic(roles, prereqs, where);
}

}  // namespace

// ---- SimInstance ----

RoleSchema SimInstance::schema() const { return {type_label, roles}; }

GoldRecord SimInstance::gold_record() const { return {type_label, gold}; }

std::string SimInstance::decoy_for(const std::string& role) const {
  if (auto it = decoys.find(role); it != decoys.end()) return it->second;
  // Fallback: the last word of the first gold argument, or the first
  // sentence word that is not a gold argument.
  if (auto it = gold.find(role); it != gold.end() && !it->second.empty()) {
    const auto& first = it->second.front();
    const auto space = first.rfind(' ');
    if (space != std::string::npos) return first.substr(space + 1);
  }
  const auto words = tokenize(sentence, TokenMode::kWord);
  const auto gold_args = gold.count(role) ? normalized_set(gold.at(role))
                                          : std::set<std::string>{};
  for (const auto& w : words) {
    if (!gold_args.count(w)) return w;
  }
  return "none";
}

void SimInstance::validate() const {
  if (sentence.empty()) throw DataError(id + ": empty sentence");
  if (roles.empty()) throw DataError(id + ": no roles");
  std::set<std::string> unique(roles.begin(), roles.end());
  if (unique.size() != roles.size()) throw DataError(id + ": repeated role");
  check_prerequisites(roles, prerequisites, id);
  for (const auto& [role, args] : gold) {
    if (!unique.count(role)) throw DataError(id + ": gold for unknown role " + role);
  }
  for (const auto& role : roles) {
    const auto decoy = normalize_surface(decoy_for(role));
    if (gold.count(role) && normalized_set(gold.at(role)).count(decoy)) {
      throw DataError(id + ": decoy for '" + role + "' equals a gold argument");
    }
  }
}

json SimInstance::to_json() const {
  json prereq = json::object();
  for (const auto& [role, deps] : prerequisites) prereq[role] = deps;
  json j{{"id", id},
         {"sentence", sentence},
         {"type", type_label},
         {"roles", roles},
         {"gold", gold},
         {"prerequisites", prereq},
         {"decoys", decoys}};
  if (!optimal_orders.empty()) j["optimal_orders"] = optimal_orders;
  return j;
}

SimInstance SimInstance::from_json(const json& j) {
  SimInstance s;
  s.id = j.value("id", std::string());
  s.sentence = j.at("sentence").get<std::string>();
  s.type_label = j.at("type").get<std::string>();
  s.roles = j.at("roles").get<std::vector<std::string>>();
  s.gold = j.value("gold", RoleArgs{});
  const json prereq = j.value("prerequisites", json::object());
  for (const auto& [role, deps] : prereq.items()) {
    s.prerequisites[role] = deps.get<std::set<std::string>>();
  }
  s.decoys = j.value("decoys", std::map<std::string, std::string>{});
  s.optimal_orders = j.value("optimal_orders", std::vector<RoleOrder>{});
  return s;
}

// ---- SimWorld ----

SimWorld::SimWorld(std::vector<SimInstance> instances)
    : instances_(std::move(instances)) {
  for (size_t i = 0; i < instances_.size(); ++i) {
    instances_[i].validate();
    index_.emplace(std::make_pair(instances_[i].sentence, instances_[i].type_label), i);
  }
}

SimWorld SimWorld::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open simulated world " + path.string());
  std::vector<SimInstance> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(SimInstance::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return SimWorld(std::move(out));
}

void SimWorld::save_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& inst : instances_) out << inst.to_json().dump() << '\n';
}

const SimInstance* SimWorld::find(const std::string& sentence,
                                  const std::string& type_label) const {
  auto it = index_.find({sentence, type_label});
  return it == index_.end() ? nullptr : &instances_[it->second];
}

std::vector<const SimInstance*> SimWorld::find_all(const std::string& sentence) const {
  std::vector<const SimInstance*> out;
  for (auto it = index_.lower_bound({sentence, std::string()});
       it != index_.end() && it->first.first == sentence; ++it) {
    out.push_back(&instances_[it->second]);
  }
  return out;
}

// ---- SimulatorBackend ----

SimulatorBackend::SimulatorBackend(std::shared_ptr<const SimWorld> world)
    : world_(std::move(world)) {}

std::vector<std::string> SimulatorBackend::classify(
    const std::string& sentence, const std::vector<std::string>& candidates) {
  std::set<std::string> present;
  for (const auto* inst : world_->find_all(sentence)) present.insert(inst->type_label);
  std::vector<std::string> out;
  for (const auto& c : candidates) {
    if (present.count(c)) out.push_back(c);
  }
  return out;
}

std::string SimulatorBackend::extract(const ExtractorInput& input) {
  const SimInstance* inst = world_->find(input.sentence, input.type_label);
  if (inst == nullptr) return "";
  const auto& role = input.wanted_role;
  bool ready = true;
  if (auto it = inst->prerequisites.find(role); it != inst->prerequisites.end()) {
    for (const auto& dep : it->second) {
      auto got = std::find_if(input.extracted_content.begin(),
                              input.extracted_content.end(),
                              [&](const auto& pair) { return pair.first == dep; });
      if (got == input.extracted_content.end()) {
        ready = false;
        break;
      }
      const auto want = inst->gold.count(dep) ? normalized_set(inst->gold.at(dep))
                                              : std::set<std::string>{};
      if (normalized_set(got->second) != want) {
        ready = false;
        break;
      }
    }
  }
  if (!ready) return inst->decoy_for(role);
  auto it = inst->gold.find(role);
  return it == inst->gold.end() ? std::string() : join(it->second, ", ");
}

// ---- aliases ----

AliasTable AliasTable::load_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open alias table " + path.string());
  AliasTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("alias line without a tab: " + line);
    table.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return table;
}

void AliasTable::add(const std::string& a, const std::string& b) {
  const auto na = normalize_surface(a);
  const auto nb = normalize_surface(b);
  pairs_.emplace(na, nb);
  pairs_.emplace(nb, na);
}

bool AliasTable::equivalent(const std::string& a, const std::string& b) const {
  const auto na = normalize_surface(a);
  const auto nb = normalize_surface(b);
  return na == nb || pairs_.count({na, nb}) > 0;
}

int AliasJudge::judge(const std::string& extracted, const std::string& ground_truth) {
  return aliases_.equivalent(extracted, ground_truth) ? 1 : 0;
}

// ---- optimal orders ----

std::set<RoleOrder> sim_optimal_orders(const SimInstance& instance,
                                       const RewardConfig& config) {
  if (instance.roles.size() > kMaxEnumeratedRoles) {
    throw std::invalid_argument("refusing to enumerate " +
                                std::to_string(instance.roles.size()) +
                                " roles (limit " +
                                std::to_string(kMaxEnumeratedRoles) + ")");
  }
  auto world = std::make_shared<SimWorld>(std::vector<SimInstance>{instance});
  SimulatorBackend backend(world);
  AliasJudge judge;
  RewardModule reward(config, judge);
  const auto gold = instance.gold_record();
  const auto schema = instance.schema();

  std::vector<size_t> perm(instance.roles.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::set<RoleOrder> best;
  double best_total = -1.0;
  do {
    RoleOrder order;
    for (size_t i : perm) order.push_back(instance.roles[i]);
    auto state = reset(instance.sentence, schema).first;
    double total = 0.0;
    for (const auto& role : order) {
      auto outcome = step(state, role, backend, &reward, &gold);
      total += outcome.reward;
      state = std::move(outcome.realized_next);
    }
    if (total > best_total) {
      best_total = total;
      best.clear();
    }
    if (total == best_total) best.insert(std::move(order));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// ---- generation ----

WorldSpec WorldSpec::from_json(const json& j) {
  WorldSpec spec;
  try {
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("language")) {
      spec.language = parse_language_mode(j.at("language").get<std::string>());
    }
    spec.holdout_fraction = j.value("holdout_fraction", spec.holdout_fraction);
    for (const auto& t : j.value("types", json::array())) {
      SimTypeSpec ts;
      ts.type_label = t.at("type").get<std::string>();
      ts.roles = t.at("roles").get<std::vector<std::string>>();
      const json prereq = t.value("prerequisites", json::object());
      for (const auto& [role, deps] : prereq.items()) {
        ts.prerequisites[role] = deps.get<std::set<std::string>>();
      }
      ts.instances = t.value("instances", 1);
      check_prerequisites(ts.roles, ts.prerequisites, ts.type_label);
      if (ts.roles.size() > kMaxEnumeratedRoles) {
        throw DataError(ts.type_label + ": more than " +
                        std::to_string(kMaxEnumeratedRoles) + " roles");
      }
      spec.types.push_back(std::move(ts));
    }
    if (j.contains("generate")) {
      const auto& g = j.at("generate");
      GenerateSpec gs;
      gs.types = g.value("types", gs.types);
      gs.instances = g.value("instances", gs.instances);
      gs.min_roles = g.value("min_roles", gs.min_roles);
      gs.max_roles = g.value("max_roles", gs.max_roles);
      gs.topological_fraction = g.value("topological_fraction", gs.topological_fraction);
      gs.multi_argument_probability =
          g.value("multi_argument_probability", gs.multi_argument_probability);
      if (gs.min_roles < 2 || gs.max_roles < gs.min_roles ||
          gs.max_roles > static_cast<int>(kMaxEnumeratedRoles) || gs.types < 1 ||
          gs.instances < gs.types) {
        throw DataError("invalid generate block in world spec");
      }
      spec.generate = gs;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("world spec: ") + e.what());
  }
  if (spec.types.empty() && !spec.generate) {
    throw DataError("world spec needs a types list or a generate block");
  }
  if (spec.holdout_fraction < 0.0 || spec.holdout_fraction >= 1.0) {
    throw DataError("holdout_fraction must be in [0, 1)");
  }
  return spec;
}

namespace {

const std::vector<std::string> kTypeNames = {
    "acquisition", "appointment", "transfer",  "lawsuit",    "merger",
    "shipment",    "election",    "donation",  "arrest",     "launch",
    "recall",      "sponsorship", "expedition", "audit",     "broadcast",
    "treaty",      "relocation",  "tournament", "investment", "rescue"};

const std::vector<std::string> kRoleNames = {
    "agent",    "target",   "place",      "time",     "instrument", "beneficiary",
    "origin",   "destination", "price",   "vehicle",  "organizer",  "witness",
    "cause",    "outcome",  "sponsor",    "recipient"};

const std::vector<std::string> kFirstWords = {
    "Crimson", "Silver", "Northern", "Golden", "Quiet",  "Hollow", "Amber",
    "Iron",    "Velvet", "Coastal",  "Ivory",  "Scarlet", "Granite", "Misty",
    "Copper",  "Azure",  "Frosty",   "Emerald", "Shadow", "Sunny"};

const std::vector<std::string> kSecondWords = {
    "Harbor", "Falcon", "Bridge", "Summit", "Valley", "Tower",  "Garden",
    "Ridge",  "Lantern", "Meadow", "Forge",  "Harvest", "Canyon", "Orchard",
    "Beacon", "Anchor", "Circle", "Willow",  "Castle", "Prairie"};

const std::vector<std::string> kFillers = {
    "with", "near", "after", "via", "for", "beside", "before", "under", "amid", "toward"};

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

// Prerequisite graph over `order`: a chain, or a binary-tree fork rooted at
// order[0].
std::map<std::string, std::set<std::string>> make_graph(const std::vector<std::string>& order,
                                                        bool chain) {
  std::map<std::string, std::set<std::string>> g;
  for (size_t i = 1; i < order.size(); ++i) {
    const size_t parent = chain ? i - 1 : (i - 1) / 2;
    g[order[i]].insert(order[parent]);
  }
  return g;
}

std::vector<SimTypeSpec> generate_types(const GenerateSpec& gen,
                                        const RewardConfig& reward,
                                        std::mt19937_64& rng) {
  std::vector<SimTypeSpec> types;
  auto type_names = kTypeNames;
  std::shuffle(type_names.begin(), type_names.end(), rng);
  const int topological =
      static_cast<int>(std::floor(gen.topological_fraction * gen.types + 1e-9));
  for (int t = 0; t < gen.types; ++t) {
    SimTypeSpec ts;
    ts.type_label = t < static_cast<int>(type_names.size())
                        ? type_names[t]
                        : type_names[t % type_names.size()] + " " + std::to_string(t);
    std::uniform_int_distribution<int> nroles(gen.min_roles, gen.max_roles);
    auto role_names = kRoleNames;
    std::shuffle(role_names.begin(), role_names.end(), rng);
    std::vector<std::string> order(role_names.begin(), role_names.begin() + nroles(rng));
    ts.prerequisites = make_graph(order, t % 2 == 0);

    // Declared schema order: optimal for the first `topological` types,
    // deliberately suboptimal for the rest.
    const bool want_optimal = t < topological;
    SimInstance probe;
    probe.id = "probe";
    probe.sentence = "probe";
    probe.type_label = ts.type_label;
    probe.prerequisites = ts.prerequisites;
    for (const auto& r : order) probe.gold[r] = {"Probe " + r};
    probe.roles = order;
    const auto optimal = sim_optimal_orders(probe, reward);
    std::vector<std::string> declared = order;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      if (optimal.count(declared) == static_cast<size_t>(want_optimal)) break;
      std::shuffle(declared.begin(), declared.end(), rng);
    }
    ts.roles = declared;
    ts.instances = gen.instances / gen.types + (t < gen.instances % gen.types ? 1 : 0);
    types.push_back(std::move(ts));
  }
  return types;
}

SimInstance make_instance(const SimTypeSpec& ts, const std::string& id,
                          double multi_prob, std::mt19937_64& rng) {
  SimInstance inst;
  inst.id = id;
  inst.type_label = ts.type_label;
  inst.roles = ts.roles;
  inst.prerequisites = ts.prerequisites;

  std::set<std::string> used;
  auto fresh_argument = [&]() {
    for (;;) {
      auto arg = pick(kFirstWords, rng) + " " + pick(kSecondWords, rng);
      // Distinct last words keep every decoy away from all gold arguments.
      const auto last = arg.substr(arg.find(' ') + 1);
      if (used.insert(arg).second) {
        if (used.insert("#" + last).second) return arg;
        used.erase(arg);
      }
    }
  };
  std::bernoulli_distribution multi(multi_prob);
  for (const auto& role : ts.roles) {
    std::vector<std::string> args{fresh_argument()};
    if (multi(rng)) args.push_back(fresh_argument());
    inst.gold[role] = args;
    const auto& first = args.front();
    inst.decoys[role] = first.substr(first.find(' ') + 1);
  }

  auto mention_order = ts.roles;
  std::shuffle(mention_order.begin(), mention_order.end(), rng);
  std::string sentence = "Reports on the " + ts.type_label + " mention";
  for (size_t i = 0; i < mention_order.size(); ++i) {
    const auto& args = inst.gold[mention_order[i]];
    sentence += " " + join(args, " and ");
    sentence += i + 1 < mention_order.size() ? " " + pick(kFillers, rng) : " .";
  }
  inst.sentence = sentence;
  return inst;
}

}  // namespace

GeneratedWorld generate_world(const WorldSpec& spec, const RewardConfig& reward) {
  std::mt19937_64 rng(spec.seed);
  GeneratedWorld out;
  out.types = spec.types;
  if (spec.generate) {
    auto generated = generate_types(*spec.generate, reward, rng);
    out.types.insert(out.types.end(), generated.begin(), generated.end());
  }
  const double multi_prob =
      spec.generate ? spec.generate->multi_argument_probability : 0.0;

  std::vector<SimInstance> instances;
  std::set<std::string> sentences;
  for (const auto& ts : out.types) {
    const int holdout = static_cast<int>(std::round(ts.instances * spec.holdout_fraction));
    for (int k = 0; k < ts.instances; ++k) {
      SimInstance inst;
      do {
        inst = make_instance(ts, "sim-" + std::to_string(instances.size()), multi_prob,
                             rng);
      } while (!sentences.insert(inst.sentence).second);
      const auto orders = sim_optimal_orders(inst, reward);
      inst.optimal_orders.assign(orders.begin(), orders.end());
      instances.push_back(std::move(inst));
      out.held_out.push_back(k >= ts.instances - holdout);
    }
  }
  out.world = SimWorld(std::move(instances));
  return out;
}

json sim_record_json(const SimInstance& instance) {
  return {{"id", instance.id},
          {"sentence", instance.sentence},
          {"events", json::array({{{"event_type", instance.type_label},
                                   {"args", instance.gold}}})}};
}

}  // namespace planex
