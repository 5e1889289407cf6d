#include "slab/tensorcore/params.hpp"

#include <cmath>

#include "slab/common/error.hpp"

namespace slab::tc {

Var ParamBinder::operator()(const Tensor& t) {
  for (const auto& [ptr, var] : bound_) {
    if (ptr == &t) return var;
  }
  Var v = trainable_ ? tape_.leaf(t) : tape_.constant(t);
  bound_.emplace_back(&t, v);
  return v;
}

void ParamBinder::alias(const Tensor& t, Var v) {
  for (const auto& [ptr, var] : bound_) {
    if (ptr == &t) throw ValidationError("alias: tensor already bound");
  }
  if (v.value().shape() != t.shape()) throw ValidationError("alias: shape mismatch");
  bound_.emplace_back(&t, v);
}

void ParamBinder::sgd_step(double lr) const {
  if (!trainable_) throw ValidationError("sgd_step on a non-trainable binding");
  for (const auto& [ptr, var] : bound_) {
    // Trainable bindings are only created over mutable model tensors.
    auto& target = const_cast<Tensor&>(*ptr);
    const Tensor& g = var.grad();
    for (std::size_t i = 0; i < target.size(); ++i) target[i] -= lr * g[i];
  }
}

double ParamBinder::max_abs_grad() const {
  double m = 0.0;
  for (const auto& [ptr, var] : bound_) {
    for (double g : var.grad().values()) m = std::max(m, std::abs(g));
  }
  return m;
}

}  // namespace slab::tc
