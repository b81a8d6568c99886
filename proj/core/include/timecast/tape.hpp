#pragma once

#include <functional>
#include <vector>

#include "timecast/tensor.hpp"

namespace timecast {

// Ordered record of executed differentiable operations. Records are pushed
// in execution (topological) order; backward() runs them in exact reverse
// and marks the tape consumed. A consumed tape cannot run backward again.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn) {
    records_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
  // loss must be a single-element tensor recorded on this tape.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> records_;
  bool consumed_ = false;
};

// Thread-local active tape. Ops record themselves only while a tape is
// active and some input requires grad; with no active tape, forward passes
// are plain computations (inference).
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace timecast
