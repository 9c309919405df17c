#include "oracles.hpp"

#include <algorithm>
#include <cctype>

namespace oracle {

double bellman_target(double reward, double gamma, bool terminal,
                      const std::vector<BranchTable>& branches, bool double_q) {
  if (terminal) return reward;
  double total = 0.0;
  for (const auto& b : branches) {
    const auto& chooser = double_q ? b.online : b.target;
    const auto best = std::max_element(chooser.begin(), chooser.end()) - chooser.begin();
    total += b.target[best];
  }
  return reward + gamma * (total / branches.size());
}

std::set<std::string> word_tokens(const std::string& text) {
  std::set<std::string> out;
  std::string word;
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!word.empty()) out.insert(word);
      word.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  if (!word.empty()) out.insert(word);
  return out;
}

std::set<std::string> char_tokens(const std::string& text) {
  std::set<std::string> out;
  for (size_t i = 0; i < text.size();) {
    const unsigned char c = text[i];
    const size_t len = c < 0x80 ? 1 : c < 0xE0 ? 2 : c < 0xF0 ? 3 : 4;
    const std::string ch = text.substr(i, len);
    if (ch != " " && ch != "\t" && ch != "\n" && ch != "\r") out.insert(ch);
    i += len;
  }
  return out;
}

double jaccard(const std::string& a, const std::string& b, bool words) {
  const auto ta = words ? word_tokens(a) : char_tokens(a);
  const auto tb = words ? word_tokens(b) : char_tokens(b);
  std::vector<std::string> both, either;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(both));
  std::set_union(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(either));
  if (either.empty()) return 1.0;
  return static_cast<double>(both.size()) / static_cast<double>(either.size());
}

namespace {

std::vector<std::string> role_args(const Args& args, const std::string& role) {
  auto it = args.find(role);
  return it == args.end() ? std::vector<std::string>{} : it->second;
}

std::set<std::string> roles_of(const Record& a, const Record& b) {
  std::set<std::string> roles;
  for (const auto& [r, v] : a.args) roles.insert(r);
  for (const auto& [r, v] : b.args) roles.insert(r);
  return roles;
}

}  // namespace

bool record_match(const Record& pred, const Record& gold, double threshold, bool words) {
  if (pred.type != gold.type) return false;
  for (const auto& role : roles_of(pred, gold)) {
    auto p = role_args(pred.args, role);
    const auto g = role_args(gold.args, role);
    if (p.size() != g.size()) return false;
    std::vector<size_t> perm(p.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    bool found = false;
    do {
      bool all = true;
      for (size_t i = 0; i < g.size() && all; ++i) {
        const double sim = jaccard(p[perm[i]], g[i], words);
        all = sim > threshold || sim == 1.0;
      }
      found = all;
    } while (!found && std::next_permutation(perm.begin(), perm.end()));
    if (!found) return false;
  }
  return true;
}

bool record_equal(const Record& pred, const Record& gold) {
  if (pred.type != gold.type) return false;
  for (const auto& role : roles_of(pred, gold)) {
    auto p = role_args(pred.args, role);
    auto g = role_args(gold.args, role);
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    if (p != g) return false;
  }
  return true;
}

namespace {

size_t search(const std::vector<std::vector<bool>>& adj, size_t row, std::vector<bool>& used) {
  if (row == adj.size()) return 0;
  size_t best = search(adj, row + 1, used);
  for (size_t c = 0; c < adj[row].size(); ++c) {
    if (!adj[row][c] || used[c]) continue;
    used[c] = true;
    best = std::max(best, 1 + search(adj, row + 1, used));
    used[c] = false;
  }
  return best;
}

}  // namespace

size_t max_matching(const std::vector<std::vector<bool>>& adjacent) {
  std::vector<bool> used(adjacent.empty() ? 0 : adjacent[0].size(), false);
  return search(adjacent, 0, used);
}

bool is_topological(const std::vector<std::string>& order,
                    const std::map<std::string, std::set<std::string>>& prerequisites) {
  std::set<std::string> done;
  for (const auto& role : order) {
    auto it = prerequisites.find(role);
    if (it != prerequisites.end()) {
      for (const auto& p : it->second) {
        if (!done.count(p)) return false;
      }
    }
    done.insert(role);
  }
  return true;
}

}  // namespace oracle
