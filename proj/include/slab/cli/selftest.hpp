#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slab::cli {

struct GradientCheck {
  std::string name;
  double max_rel_error = 0.0;  // worst over all instances
  std::size_t instances = 0;
};

// Every differentiable kernel plus the two ranker pipelines (query encoding,
// paragraph attention and the negative-sampling loss end to end), each on
// `instances` seeded random inputs.
std::vector<GradientCheck> gradient_suite(std::size_t instances, std::uint64_t seed);

struct PropertyCheck {
  std::string name;
  std::size_t trials = 0;
  double worst = 0.0;  // largest deviation seen
  double tolerance = 0.0;
  bool pass() const { return worst <= tolerance; }
};

// Kernel identities checked against tape-free reference computations.
std::vector<PropertyCheck> property_suite(std::size_t trials, std::uint64_t seed);

// Projection onto the probability simplex by bisection on the threshold.
std::vector<double> simplex_projection_bisection(const std::vector<double>& x);

}  // namespace slab::cli
