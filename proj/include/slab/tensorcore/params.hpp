#pragma once

#include <utility>
#include <vector>

#include "slab/tensorcore/tape.hpp"

namespace slab::tc {

// Places model tensors on a tape. Each tensor is bound once per tape, so
// reusing a parameter in several places accumulates into a single gradient.
// In trainable mode the bound tensors become leaves and sgd_step() writes
// the update back into them; otherwise they are constants.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}

  Var operator()(const Tensor& t);
  // Makes later binds of `t` return `v`; used to route one model tensor
  // through an externally created variable (gradient checks).
  void alias(const Tensor& t, Var v);

  Tape& tape() const { return tape_; }
  bool trainable() const { return trainable_; }

  // t -= lr · grad for every bound tensor. Requires trainable mode and a
  // completed backward pass.
  void sgd_step(double lr) const;

  // Largest absolute gradient entry over all bound tensors.
  double max_abs_grad() const;

 private:
  Tape& tape_;
  bool trainable_;
  std::vector<std::pair<const Tensor*, Var>> bound_;
};

}  // namespace slab::tc
