#include "slab/tensorcore/tape.hpp"

#include "slab/common/error.hpp"

namespace slab::tc {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kSparsemax: return "sparsemax";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kAvgPool: return "avg_pool";
    case OpKind::kDot: return "dot";
    case OpKind::kSum: return "sum";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kStack: return "stack";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kRow: return "row";
    case OpKind::kDropout: return "dropout";
    case OpKind::kCeNegSample: return "ce_negsample";
    case OpKind::kMse: return "mse_matrix";
    case OpKind::kSoftArgMax: return "softargmax";
    case OpKind::kRowCrossEntropy: return "row_cross_entropy";
    case OpKind::kBceLogit: return "bce_logit";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{OpKind::kLeaf, std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kConstant, std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node node{kind, std::move(value), {}, {}, std::move(backward), false};
  node.parents.reserve(parents.size());
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ValidationError("operands live on different tapes");
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  Node& node = const_cast<Node&>(nodes_[id]);
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ValidationError("loss belongs to a different tape");
  if (loss.value().size() != 1) {
    throw ValidationError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    Node& n = nodes_[i];
    n.grad = n.requires_grad ? Tensor(n.value.shape()) : Tensor();
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad[0] = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    BackwardContext ctx{n.value, n.grad, {}, {}};
    ctx.in_values.reserve(n.parents.size());
    ctx.in_grads.reserve(n.parents.size());
    for (std::size_t p : n.parents) {
      ctx.in_values.push_back(&nodes_[p].value);
      ctx.in_grads.push_back(nodes_[p].requires_grad ? &nodes_[p].grad : nullptr);
    }
    n.backward(ctx);
  }
}

}  // namespace slab::tc
