#pragma once

#include <span>
#include <vector>

namespace slab::tc {

// Tape-free forms of the scalar kernels, sharing the implementations the
// differentiable ops use.

std::vector<double> softmax(std::span<const double> x);

// Euclidean projection onto the probability simplex (sort + threshold).
std::vector<double> sparsemax(std::span<const double> x);

// loss = -ln( e^{pos} / (e^{pos} + sum e^{neg}) ), max-subtracted.
double ce_negsample(double y_pos, std::span<const double> y_negs);

// sum_i softmax(beta x)_i * i, 0-based indices. Throws ValidationError if beta < 1.
double softargmax(std::span<const double> x, double beta);

}  // namespace slab::tc
