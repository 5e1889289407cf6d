#include "slab/tensorcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "slab/common/error.hpp"

namespace slab::tc {

GradCheckResult grad_check_against(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                   const Tensor& analytic, double eps) {
  if (analytic.shape() != x.shape()) throw ValidationError("analytic gradient shape does not match input");
  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto at = [&](double offset) {
      probe[i] = x[i] + offset;
      const double v = f(probe);
      probe[i] = x[i];
      return v;
    };
    // Five-point stencil, error O(eps^4); a wide step keeps roundoff small.
    const double numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
    const double rel = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  Tape tape;
  Var input = tape.leaf(x);
  Var loss = f(tape, input);
  tape.backward(loss);
  const Tensor analytic = input.grad();
  auto evaluate = [&f](const Tensor& probe) {
    Tape t;
    Var in = t.constant(probe);
    return f(t, in).value().item();
  };
  return grad_check_against(evaluate, x, analytic, eps);
}

}  // namespace slab::tc
