#pragma once

#include <functional>

#include "slab/tensorcore/tape.hpp"

namespace slab::tc {

// Builds a scalar loss from the input variable on the given tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

// Five-point central differences per coordinate; relative error
// |g_a - g_n| / max(1e-8, |g_a| + |g_n|). Inputs within 2·eps of a kink
// (sparsemax support changes) give meaningless results.
GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-3);

// Same check against an externally supplied analytic gradient.
GradCheckResult grad_check_against(const std::function<double(const Tensor&)>& f,
                                   const Tensor& x, const Tensor& analytic, double eps = 1e-3);

}  // namespace slab::tc
