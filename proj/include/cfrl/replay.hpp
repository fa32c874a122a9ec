#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "cfrl/seeds.hpp"
#include "cfrl/transition.hpp"

namespace cfrl {

/// Bounded FIFO of transitions; the oldest entry is evicted once full.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition tr);
  /// Uniform minibatch: with replacement while size() < batch, without replacement otherwise.
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return buffer_.empty(); }
  /// i-th entry counted from the oldest.
  const Transition& at(std::size_t i) const { return buffer_.at((head_ + i) % buffer_.size()); }

  void write(std::ostream& out) const;
  static ReplayMemory read(std::istream& in);

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // index of the oldest entry once the buffer is full
  std::vector<Transition> buffer_;
};

}  // namespace cfrl
