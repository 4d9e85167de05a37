#ifndef BISWIFT_RL_REPLAY_BUFFER_HPP_
#define BISWIFT_RL_REPLAY_BUFFER_HPP_

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <numeric>
#include <vector>

#include "biswift/error.hpp"
#include "biswift/rl/mlp.hpp"

namespace biswift::rl {

template <typename Scalar>
struct Transition {
  VectorX<Scalar> state;
  VectorX<Scalar> action;
  Scalar reward = 0;
  VectorX<Scalar> next_state;
  bool done = false;
};

/// Fixed-capacity ring of transitions.
template <typename Scalar>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity_ == 0)
      throw PreconditionError("ReplayBuffer: capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  void push(Transition<Scalar> t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
    ++pushed_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t total_pushed() const { return pushed_; }
  const Transition<Scalar>& operator[](std::size_t i) const { return data_[i]; }

  /// Uniform sample of `n` distinct slots.
  template <typename Rng>
  std::vector<std::size_t> sample(std::size_t n, Rng& rng) const {
    if (n > data_.size())
      throw PreconditionError("ReplayBuffer::sample: not enough transitions");
    std::vector<std::size_t> all(data_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> out;
    out.reserve(n);
    std::sample(all.begin(), all.end(), std::back_inserter(out), n, rng);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition<Scalar>> data_;
  std::size_t head_ = 0;
  std::size_t pushed_ = 0;
};

}  // namespace biswift::rl

#endif  // BISWIFT_RL_REPLAY_BUFFER_HPP_
