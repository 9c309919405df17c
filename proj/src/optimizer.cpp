#include "planex/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace planex {

double scheduled_lr(double base, uint64_t update, uint64_t total, double warmup_fraction) {
  total = std::max<uint64_t>(total, 1);
  const double warm = std::max(1.0, std::floor(warmup_fraction * static_cast<double>(total)));
  const double t = static_cast<double>(update);
  if (t <= warm) return base * t / warm;
  const double rest = static_cast<double>(total) - warm;
  if (rest <= 0) return base;
  return base * std::max(0.0, (static_cast<double>(total) - t) / rest);
}

AdamW::AdamW(AdamWConfig config, const QNetwork& net) : config_(config) {
  const auto& c = net.config();
  m_w1_ = v_w1_ = Eigen::MatrixXd::Zero(c.hidden_dim, c.embed_dim);
  m_b1_ = v_b1_ = Eigen::VectorXd::Zero(c.hidden_dim);
  m_w_ = v_w_ = Eigen::VectorXd::Zero(c.hidden_dim);
}

double AdamW::current_lr() const {
  return scheduled_lr(config_.lr, t_, config_.total_updates, config_.warmup_fraction);
}

void AdamW::step(QNetwork& net, const QGradient& grad) {
  ++t_;
  const double lr = current_lr();
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double eps = config_.eps;
  const double decay = 1.0 - lr * config_.weight_decay;

  auto dense = [&](auto& param, auto& m, auto& v, const auto& g, bool decayed) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    if (decayed) param *= decay;
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  dense(net.w1(), m_w1_, v_w1_, grad.w1, true);
  dense(net.b1(), m_b1_, v_b1_, grad.b1, false);
  dense(net.w(), m_w_, v_w_, grad.w, true);

  m_b_ = b1 * m_b_ + (1.0 - b1) * grad.b;
  v_b_ = b2 * v_b_ + (1.0 - b2) * grad.b * grad.b;
  net.b() -= lr * (m_b_ / c1) / (std::sqrt(v_b_ / c2) + eps);

  for (const auto& [bucket, g] : grad.rows) {
    auto it = rows_.find(bucket);
    if (it == rows_.end()) {
      it = rows_.emplace(bucket, Moments{Eigen::VectorXd::Zero(g.size()),
                                         Eigen::VectorXd::Zero(g.size())}).first;
    }
    dense(net.mutable_embedding(bucket), it->second.m, it->second.v, g, false);
  }
}

}  // namespace planex
