#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

// Reference computations written without the library, for cross-checking.
namespace oracle {

// Per successor branch, the Q value of every next action in schema order.
struct BranchTable {
  std::vector<double> online;
  std::vector<double> target;
};

double bellman_target(double reward, double gamma, bool terminal,
                      const std::vector<BranchTable>& branches, bool double_q);

std::set<std::string> word_tokens(const std::string& text);
std::set<std::string> char_tokens(const std::string& text);
double jaccard(const std::string& a, const std::string& b, bool words);

using Args = std::map<std::string, std::vector<std::string>>;

struct Record {
  std::string type;
  Args args;
};

// Tries every permutation of the predicted arguments of each role.
bool record_match(const Record& pred, const Record& gold, double threshold, bool words);
bool record_equal(const Record& pred, const Record& gold);

// Largest matching by exhaustive search over assignments.
size_t max_matching(const std::vector<std::vector<bool>>& adjacent);

bool is_topological(const std::vector<std::string>& order,
                    const std::map<std::string, std::set<std::string>>& prerequisites);

}  // namespace oracle
