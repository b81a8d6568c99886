#include "timecast/tape.hpp"

#include "timecast/errors.hpp"

namespace timecast {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::backward(Tensor loss) {
  if (consumed_) {
    throw Error(errtag::kTape, "backward on an already-consumed tape");
  }
  if (loss.numel() != 1) {
    throw Error(errtag::kTape,
                "backward requires a scalar loss, got " + shape_str(loss.shape()));
  }
  if (records_.empty()) {
    throw Error(errtag::kTape, "backward on an empty tape");
  }
  consumed_ = true;
  if (!loss.requires_grad()) {
    // Loss does not depend on any tracked input; nothing to propagate.
    return;
  }
  loss.grad()[0] = 1.f;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    (*it)();
  }
  records_.clear();
}

}  // namespace timecast
