#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "planex/encoder.hpp"

namespace planex {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter gradients. Embedding rows are sparse: only touched buckets.
struct QGradient {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w;
  double b = 0.0;
  std::unordered_map<uint64_t, Eigen::VectorXd> rows;

  void reset(const EncoderConfig& config);
};

// Q(S, a) = w · tanh(W1 · mean(E[features]) + b1) + b.
//
// Embedding rows start as a pure function of (seed, bucket) and are only
// stored once an optimizer writes them, so reads never mutate the table.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(const EncoderConfig& config, uint64_t seed);

  double q_value(const Features& features) const;
  double q_value(const ExtractionState& state, const std::string& action) const;

  // Adds d(scale · Q)/dθ for one input to `grad`; returns Q.
  double accumulate_gradient(const Features& features, double scale, QGradient& grad) const;

  Eigen::VectorXd embedding(uint64_t bucket) const;
  Eigen::VectorXd& mutable_embedding(uint64_t bucket);

  const EncoderConfig& config() const { return config_; }
  uint64_t seed() const { return seed_; }

  Eigen::MatrixXd& w1() { return w1_; }
  Eigen::VectorXd& b1() { return b1_; }
  Eigen::VectorXd& w() { return w_; }
  double& b() { return b_; }
  const Eigen::MatrixXd& w1() const { return w1_; }
  const Eigen::VectorXd& b1() const { return b1_; }
  const Eigen::VectorXd& w() const { return w_; }
  double b() const { return b_; }
  const std::unordered_map<uint64_t, Eigen::VectorXd>& stored_rows() const { return rows_; }

  void save(const std::filesystem::path& path, const std::string& config_digest) const;
  static QNetwork load(const std::filesystem::path& path, std::string* config_digest = nullptr);

  bool operator==(const QNetwork& other) const;

 private:
  Eigen::VectorXd pooled(const Features& features) const;

  EncoderConfig config_;
  uint64_t seed_ = 0;
  Eigen::MatrixXd w1_;
  Eigen::VectorXd b1_;
  Eigen::VectorXd w_;
  double b_ = 0.0;
  std::unordered_map<uint64_t, Eigen::VectorXd> rows_;
};

uint64_t splitmix64(uint64_t& state);

}  // namespace planex
