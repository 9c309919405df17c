#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "planex/prompts.hpp"

namespace planex {

// Transport failure, timeout or unusable reply after all retries.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stage 1: picks the relation/event types present in a sentence.
class Classifier {
 public:
  virtual ~Classifier() = default;
  // Returns a subset of `candidates`; never an item outside it.
  virtual std::vector<std::string> classify(
      const std::string& sentence, const std::vector<std::string>& candidates) = 0;
};

// Stage 2: returns the raw comma-separated arguments for one role.
class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual std::string extract(const ExtractorInput& input) = 0;
};

// Semantic correctness check used by the reward gate. Returns 0 or 1.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual int judge(const std::string& extracted, const std::string& ground_truth) = 0;
};

// Keeps reply items that are candidates, in reply order; others are
// dropped with a warning.
std::vector<std::string> filter_candidates(const std::vector<std::string>& reply_items,
                                           const std::vector<std::string>& candidates);

}  // namespace planex
