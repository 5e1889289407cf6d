#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <deque>
#include <vector>

#include "slab/tensorcore/tensor.hpp"

namespace slab::tc {

class Tape;

enum class OpKind {
  kLeaf,
  kConstant,
  kMatMul,
  kTranspose,
  kReshape,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddRow,
  kTanh,
  kSigmoid,
  kSoftmax,
  kSoftmaxRows,
  kSparsemax,
  kConv1d,
  kAvgPool,
  kDot,
  kSum,
  kGatherRows,
  kStack,
  kSliceCols,
  kConcatCols,
  kRow,
  kDropout,
  kCeNegSample,
  kMse,
  kSoftArgMax,
  kRowCrossEntropy,
  kBceLogit,
};

std::string_view op_name(OpKind kind);

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardContext {
  const Tensor& out_value;
  const Tensor& out_grad;
  std::vector<const Tensor*> in_values;
  // Null where the parent does not need a gradient.
  std::vector<Tensor*> in_grads;
};

using BackwardFn = std::function<void(BackwardContext&)>;

// Records operations in creation order, which is also a topological order.
// Gradients are accumulated in reverse creation order by backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(OpKind kind, Tensor value, std::vector<Var> parents, BackwardFn backward);

  // Loss must be a single element. Gradients of every node are reset first.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  // Zero tensor of matching shape when no gradient reached the node.
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_[id].kind; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;  // stable addresses: Var::value() refs survive later records
};

}  // namespace slab::tc
