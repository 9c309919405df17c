#pragma once

#include <algorithm>
#include <random>
#include <stdexcept>
#include <vector>

namespace planex {

// Fixed-capacity ring; the oldest entry is evicted first.
template <typename T>
class ReplayMemory {
 public:
  explicit ReplayMemory(size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
    items_.reserve(capacity_);
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
    }
    head_ = (head_ + 1) % capacity_;
  }

  // Drops the `n` most recent entries.
  void discard_newest(size_t n) {
    n = std::min(n, items_.size());
    for (size_t i = 0; i < n; ++i) {
      head_ = (head_ + capacity_ - 1) % capacity_;
      if (items_.size() < capacity_) {
        items_.pop_back();
      } else {
        // Full ring: move the tail slot into place to keep a dense prefix.
        rebuild_without(head_);
      }
    }
  }

  // Uniform sampling with replacement.
  template <typename Rng>
  std::vector<const T*> sample(size_t n, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("sampling from an empty replay memory");
    std::uniform_int_distribution<size_t> pick(0, items_.size() - 1);
    std::vector<const T*> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(&items_[pick(rng)]);
    return out;
  }

  // Entries from oldest to newest.
  std::vector<const T*> ordered() const {
    std::vector<const T*> out;
    const size_t start = items_.size() < capacity_ ? 0 : head_;
    for (size_t i = 0; i < items_.size(); ++i) out.push_back(&items_[(start + i) % items_.size()]);
    return out;
  }

  size_t size() const { return items_.size(); }
  size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }

 private:
  void rebuild_without(size_t slot) {
    std::vector<T> kept;
    kept.reserve(capacity_);
    for (size_t i = 1; i <= items_.size(); ++i) {
      const size_t idx = (slot + i) % items_.size();
      if (idx != slot) kept.push_back(std::move(items_[idx]));
    }
    items_ = std::move(kept);
    head_ = items_.size() % capacity_;
  }

  size_t capacity_;
  size_t head_ = 0;
  std::vector<T> items_;
};

}  // namespace planex
