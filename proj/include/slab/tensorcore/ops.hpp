#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slab/tensorcore/tape.hpp"

namespace slab {
class Rng;
}

namespace slab::tc {

// Differentiable kernels. Every function records one node on the tape of its
// first argument and throws ValidationError on shape mismatch.

Var matmul(Var a, Var b);                 // [m×k]·[k×n]
Var transpose(Var a);                     // 2-D only
Var reshape(Var a, Shape shape);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                    // elementwise
Var scale(Var a, double factor);
Var add_row(Var a, Var bias);             // [m×n] + [n] broadcast over rows
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var x);                       // vector
Var softmax_rows(Var x);                  // row-wise on a matrix
Var sparsemax(Var x);                     // vector
Var conv1d(Var x, Var filters);           // [M×d] * [w×d×F] -> [M×F]
Var avg_pool(Var z);                      // [M×d] -> [d]
Var dot(Var a, Var b);                    // vectors -> scalar
Var sum(Var a);                           // -> scalar
// Rows of table[|V|×d] selected by index; an index equal to kZeroRow yields a zero row.
inline constexpr std::size_t kZeroRow = static_cast<std::size_t>(-1);
Var gather_rows(Var table, std::vector<std::size_t> indices);
Var stack(std::span<const Var> items);    // equal-shape vectors -> [n×d]; scalars -> [n]
Var row(Var matrix, std::size_t index);   // -> vector
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
// Inverted dropout; identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);

// Losses.
Var ce_negsample(Var y_pos, std::span<const Var> y_negs);   // -ln p, p = softmax over [pos, negs...][0]
Var mse_matrix(Var pred, Var target);
Var softargmax(Var x, double beta);
// Mean over rows of -ln softmax(logits_r)[gold_r].
Var row_cross_entropy(Var logits, std::span<const std::size_t> gold);
// Binary cross-entropy of sigmoid(logit) against label.
Var bce_logit(Var logit, bool label);

}  // namespace slab::tc
