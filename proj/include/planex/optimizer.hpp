#pragma once

#include <cstdint>
#include <unordered_map>

#include <Eigen/Dense>

#include "planex/qnetwork.hpp"

namespace planex {

// Linear warmup to the base rate, then linear decay to zero at `total`.
double scheduled_lr(double base, uint64_t update, uint64_t total, double warmup_fraction);

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;  // dense weights only
  double warmup_fraction = 0.1;
  uint64_t total_updates = 1;
};

// AdamW with lazy moments for embedding rows: a row's moments advance only
// on updates whose batch touches it.
class AdamW {
 public:
  AdamW(AdamWConfig config, const QNetwork& net);

  void step(QNetwork& net, const QGradient& grad);
  uint64_t updates() const { return t_; }
  double current_lr() const;

 private:
  struct Moments {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
  };

  AdamWConfig config_;
  uint64_t t_ = 0;
  Eigen::MatrixXd m_w1_, v_w1_;
  Eigen::VectorXd m_b1_, v_b1_, m_w_, v_w_;
  double m_b_ = 0.0, v_b_ = 0.0;
  std::unordered_map<uint64_t, Moments> rows_;
};

}  // namespace planex
