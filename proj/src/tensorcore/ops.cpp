#include "slab/tensorcore/ops.hpp"

#include <algorithm>
#include <cmath>

#include "slab/common/error.hpp"
#include "slab/common/random.hpp"
#include "slab/tensorcore/kernels.hpp"

namespace slab::tc {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

void require_vector(const Tensor& t, const char* op) {
  require(t.rank() == 1, std::string(op) + " expects a vector, got " + shape_string(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + " shape mismatch " + shape_string(a.shape()) +
                                      " vs " + shape_string(b.shape()));
}

// c[m×n] += a[m×k] · b[k×n]; the transposes select which operand is read transposed.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
              bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      if (!trans_b) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  require(bv.rows() == k, "matmul inner dimensions differ: " + shape_string(av.shape()) + " · " +
                              shape_string(bv.shape()));
  Tensor out({m, n});
  gemm_acc(av.values().data(), bv.values().data(), out.values().data(), m, k, n, false, false);
  return a.tape().record(OpKind::kMatMul, std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    const double* g = ctx.out_grad.values().data();
    if (Tensor* ga = ctx.in_grads[0]) {
      // dA = G · Bᵀ
      gemm_acc(g, ctx.in_values[1]->values().data(), ga->values().data(), m, n, k, false, true);
    }
    if (Tensor* gb = ctx.in_grads[1]) {
      // dB = Aᵀ · G
      gemm_acc(ctx.in_values[0]->values().data(), g, gb->values().data(), k, m, n, true, false);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_matrix(av, "transpose");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  return a.tape().record(OpKind::kTranspose, std::move(out), {a}, [m, n](BackwardContext& ctx) {
    if (Tensor* ga = ctx.in_grads[0]) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga->at(i, j) += ctx.out_grad.at(j, i);
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record(OpKind::kReshape, std::move(out), {a}, [](BackwardContext& ctx) {
    if (Tensor* ga = ctx.in_grads[0]) {
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.out_grad[i];
    }
  });
}

Var add(Var a, Var b) {
  require_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record(OpKind::kAdd, std::move(out), {a, b}, [](BackwardContext& ctx) {
    for (Tensor* g : ctx.in_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(OpKind::kSub, std::move(out), {a, b}, [](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i];
    if (Tensor* g = ctx.in_grads[1])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= ctx.out_grad[i];
  });
}

Var mul(Var a, Var b) {
  require_same(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(OpKind::kMul, std::move(out), {a, b}, [](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i] * (*ctx.in_values[1])[i];
    if (Tensor* g = ctx.in_grads[1])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i] * (*ctx.in_values[0])[i];
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.tape().record(OpKind::kScale, std::move(out), {a}, [factor](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += factor * ctx.out_grad[i];
  });
}

Var add_row(Var a, Var bias) {
  const Tensor& av = a.value();
  require_matrix(av, "add_row");
  require_vector(bias.value(), "add_row");
  const std::size_t m = av.rows(), n = av.cols();
  require(bias.value().size() == n, "add_row bias length " + std::to_string(bias.value().size()) +
                                        " does not match " + std::to_string(n) + " columns");
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bias.value()[j];
  return a.tape().record(OpKind::kAddRow, std::move(out), {a, bias}, [m, n](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i];
    if (Tensor* g = ctx.in_grads[1])
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[j] += ctx.out_grad.at(i, j);
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = std::tanh(v);
  return a.tape().record(OpKind::kTanh, std::move(out), {a}, [](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = ctx.out_value[i];
        (*g)[i] += ctx.out_grad[i] * (1.0 - y * y);
      }
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return a.tape().record(OpKind::kSigmoid, std::move(out), {a}, [](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = ctx.out_value[i];
        (*g)[i] += ctx.out_grad[i] * y * (1.0 - y);
      }
  });
}

namespace {

void softmax_backward_span(std::span<const double> p, std::span<const double> g, std::span<double> gx) {
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += p[i] * g[i];
  for (std::size_t i = 0; i < p.size(); ++i) gx[i] += p[i] * (g[i] - inner);
}

}  // namespace

Var softmax(Var x) {
  require_vector(x.value(), "softmax");
  Tensor out = Tensor::vector(tc::softmax(x.value().values()));
  return x.tape().record(OpKind::kSoftmax, std::move(out), {x}, [](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0]) softmax_backward_span(ctx.out_value.values(), ctx.out_grad.values(), g->values());
  });
}

Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax_rows");
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto p = tc::softmax(xv.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  const std::size_t rows = xv.rows();
  return x.tape().record(OpKind::kSoftmaxRows, std::move(out), {x}, [rows](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t r = 0; r < rows; ++r) softmax_backward_span(ctx.out_value.row(r), ctx.out_grad.row(r), g->row(r));
  });
}

Var sparsemax(Var x) {
  require_vector(x.value(), "sparsemax");
  Tensor out = Tensor::vector(tc::sparsemax(x.value().values()));
  return x.tape().record(OpKind::kSparsemax, std::move(out), {x}, [](BackwardContext& ctx) {
    Tensor* g = ctx.in_grads[0];
    if (!g) return;
    // Jacobian: identity on the support minus uniform averaging over it.
    const auto p = ctx.out_value.values();
    double support_sum = 0.0;
    std::size_t support = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) {
        support_sum += ctx.out_grad[i];
        ++support;
      }
    }
    const double mean = support ? support_sum / static_cast<double>(support) : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) (*g)[i] += ctx.out_grad[i] - mean;
    }
  });
}

Var conv1d(Var x, Var filters) {
  const Tensor& xv = x.value();
  const Tensor& fv = filters.value();
  require_matrix(xv, "conv1d");
  require(fv.rank() == 3, "conv1d filters must be [w×d×F], got " + shape_string(fv.shape()));
  const std::size_t len = xv.rows(), d = xv.cols();
  const std::size_t w = fv.dim(0), nf = fv.dim(2);
  require(w % 2 == 1, "conv1d filter width must be odd, got " + std::to_string(w));
  require(fv.dim(1) == d, "conv1d filter depth " + std::to_string(fv.dim(1)) + " does not match input width " +
                              std::to_string(d));
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((w - 1) / 2);
  Tensor out({len, nf});
  const double* fp = fv.values().data();
  for (std::size_t m = 0; m < len; ++m) {
    double* orow = &out.at(m, 0);
    for (std::size_t o = 0; o < w; ++o) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(m) + static_cast<std::ptrdiff_t>(o) - pad;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      const auto xrow = xv.row(static_cast<std::size_t>(src));
      for (std::size_t c = 0; c < d; ++c) {
        const double xval = xrow[c];
        if (xval == 0.0) continue;
        const double* frow = fp + (o * d + c) * nf;
        for (std::size_t f = 0; f < nf; ++f) orow[f] += xval * frow[f];
      }
    }
  }
  return x.tape().record(OpKind::kConv1d, std::move(out), {x, filters}, [len, d, w, nf, pad](BackwardContext& ctx) {
    Tensor* gx = ctx.in_grads[0];
    Tensor* gf = ctx.in_grads[1];
    const Tensor& xv = *ctx.in_values[0];
    const double* fp = ctx.in_values[1]->values().data();
    for (std::size_t m = 0; m < len; ++m) {
      const auto grow = ctx.out_grad.row(m);
      for (std::size_t o = 0; o < w; ++o) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(m) + static_cast<std::ptrdiff_t>(o) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < d; ++c) {
          const std::size_t base = (o * d + c) * nf;
          if (gx) {
            double acc = 0.0;
            for (std::size_t f = 0; f < nf; ++f) acc += grow[f] * fp[base + f];
            gx->at(s, c) += acc;
          }
          if (gf) {
            const double xval = xv.at(s, c);
            double* gfp = gf->values().data() + base;
            for (std::size_t f = 0; f < nf; ++f) gfp[f] += grow[f] * xval;
          }
        }
      }
    }
  });
}

Var avg_pool(Var z) {
  const Tensor& zv = z.value();
  require_matrix(zv, "avg_pool");
  const std::size_t m = zv.rows(), d = zv.cols();
  Tensor out({d});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += zv.at(i, j);
  for (double& v : out.values()) v /= static_cast<double>(m);
  return z.tape().record(OpKind::kAvgPool, std::move(out), {z}, [m, d](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) g->at(i, j) += ctx.out_grad[j] / static_cast<double>(m);
  });
}

Var dot(Var a, Var b) {
  require_vector(a.value(), "dot");
  require_same(a.value(), b.value(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
  return a.tape().record(OpKind::kDot, Tensor::scalar(s), {a, b}, [](BackwardContext& ctx) {
    const double g = ctx.out_grad[0];
    if (Tensor* ga = ctx.in_grads[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g * (*ctx.in_values[1])[i];
    if (Tensor* gb = ctx.in_grads[1])
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += g * (*ctx.in_values[0])[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record(OpKind::kSum, Tensor::scalar(s), {a}, [](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (double& v : g->values()) v += ctx.out_grad[0];
  });
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  require(!indices.empty(), "gather_rows needs at least one index");
  const std::size_t d = tv.cols();
  Tensor out({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] == kZeroRow) continue;
    require(indices[r] < tv.rows(), "gather_rows index " + std::to_string(indices[r]) + " out of range");
    const auto src = tv.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return table.tape().record(OpKind::kGatherRows, std::move(out), {table},
                             [idx = std::move(indices), d](BackwardContext& ctx) {
                               Tensor* g = ctx.in_grads[0];
                               if (!g) return;
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 if (idx[r] == kZeroRow) continue;
                                 auto dst = g->row(idx[r]);
                                 const auto src = ctx.out_grad.row(r);
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                             });
}

Var stack(std::span<const Var> items) {
  require(!items.empty(), "stack needs at least one item");
  const Tensor& first = items.front().value();
  const bool scalars = first.size() == 1;
  if (!scalars) require_vector(first, "stack");
  const std::size_t d = first.size();
  std::vector<double> values;
  values.reserve(items.size() * d);
  for (const Var& v : items) {
    require(v.value().size() == d && (scalars || v.value().rank() == 1), "stack needs equal-length vectors");
    values.insert(values.end(), v.value().values().begin(), v.value().values().end());
  }
  Shape shape = scalars ? Shape{items.size()} : Shape{items.size(), d};
  std::vector<Var> parents(items.begin(), items.end());
  return parents.front().tape().record(OpKind::kStack, Tensor(std::move(shape), std::move(values)), std::move(parents),
                                       [d](BackwardContext& ctx) {
                                         for (std::size_t r = 0; r < ctx.in_grads.size(); ++r) {
                                           Tensor* g = ctx.in_grads[r];
                                           if (!g) continue;
                                           for (std::size_t j = 0; j < d; ++j) (*g)[j] += ctx.out_grad[r * d + j];
                                         }
                                       });
}

Var row(Var matrix, std::size_t index) {
  const Tensor& mv = matrix.value();
  require_matrix(mv, "row");
  require(index < mv.rows(), "row index out of range");
  const auto r = mv.row(index);
  Tensor out = Tensor::vector(std::vector<double>(r.begin(), r.end()));
  return matrix.tape().record(OpKind::kRow, std::move(out), {matrix}, [index](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0]) {
      auto dst = g->row(index);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += ctx.out_grad[j];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_cols");
  require(begin < end && end <= av.cols(), "slice_cols range out of bounds");
  const std::size_t m = av.rows(), w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = av.at(i, begin + j);
  return a.tape().record(OpKind::kSliceCols, std::move(out), {a}, [m, w, begin](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g->at(i, begin + j) += ctx.out_grad.at(i, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols needs at least one part");
  const std::size_t m = parts.front().value().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    require(p.value().rows() == m, "concat_cols row counts differ");
    offsets.push_back(total);
    total += p.value().cols();
  }
  Tensor out({m, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out.at(i, offsets[k] + j) = pv.at(i, j);
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return parents.front().tape().record(OpKind::kConcatCols, std::move(out), std::move(parents),
                                       [m, offsets](BackwardContext& ctx) {
                                         for (std::size_t k = 0; k < ctx.in_grads.size(); ++k) {
                                           Tensor* g = ctx.in_grads[k];
                                           if (!g) continue;
                                           for (std::size_t i = 0; i < m; ++i)
                                             for (std::size_t j = 0; j < g->cols(); ++j)
                                               g->at(i, j) += ctx.out_grad.at(i, offsets[k] + j);
                                         }
                                       });
}

Var dropout(Var x, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  Tensor mask(x.value().shape());
  const double keep = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape().record(OpKind::kDropout, std::move(out), {x}, [mask = std::move(mask)](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i] * mask[i];
  });
}

Var ce_negsample(Var y_pos, std::span<const Var> y_negs) {
  require(y_pos.value().size() == 1, "ce_negsample positive score must be scalar");
  std::vector<Var> parents{y_pos};
  std::vector<double> scores{y_pos.value()[0]};
  for (const Var& v : y_negs) {
    require(v.value().size() == 1, "ce_negsample negative scores must be scalars");
    parents.push_back(v);
    scores.push_back(v.value()[0]);
  }
  const double loss = tc::ce_negsample(scores[0], std::span<const double>(scores).subspan(1));
  auto p = tc::softmax(scores);
  return y_pos.tape().record(OpKind::kCeNegSample, Tensor::scalar(loss), std::move(parents),
                             [p = std::move(p)](BackwardContext& ctx) {
                               const double g = ctx.out_grad[0];
                               // p_0 - 1 written as -sum of the negatives' mass, without cancellation.
                               double rest = 0.0;
                               for (std::size_t i = 1; i < p.size(); ++i) rest += p[i];
                               if (Tensor* g0 = ctx.in_grads[0]) (*g0)[0] -= g * rest;
                               for (std::size_t i = 1; i < p.size(); ++i) {
                                 if (Tensor* gi = ctx.in_grads[i]) (*gi)[0] += g * p[i];
                               }
                             });
}

Var mse_matrix(Var pred, Var target) {
  require_same(pred.value(), target.value(), "mse_matrix");
  const std::size_t n = pred.value().size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = pred.value()[i] - target.value()[i];
    s += diff * diff;
  }
  return pred.tape().record(OpKind::kMse, Tensor::scalar(s / static_cast<double>(n)), {pred, target},
                            [n](BackwardContext& ctx) {
                              const double g = ctx.out_grad[0] * 2.0 / static_cast<double>(n);
                              for (std::size_t i = 0; i < n; ++i) {
                                const double diff = (*ctx.in_values[0])[i] - (*ctx.in_values[1])[i];
                                if (Tensor* gp = ctx.in_grads[0]) (*gp)[i] += g * diff;
                                if (Tensor* gt = ctx.in_grads[1]) (*gt)[i] -= g * diff;
                              }
                            });
}

Var softargmax(Var x, double beta) {
  require_vector(x.value(), "softargmax");
  require(beta >= 1.0, "softargmax needs beta >= 1");
  std::vector<double> scaled(x.value().values().begin(), x.value().values().end());
  for (double& v : scaled) v *= beta;
  auto p = tc::softmax(scaled);
  double y = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) y += p[i] * static_cast<double>(i);
  return x.tape().record(OpKind::kSoftArgMax, Tensor::scalar(y), {x}, [p = std::move(p), beta, y](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0])
      for (std::size_t j = 0; j < p.size(); ++j)
        (*g)[j] += ctx.out_grad[0] * beta * p[j] * (static_cast<double>(j) - y);
  });
}

Var row_cross_entropy(Var logits, std::span<const std::size_t> gold) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "row_cross_entropy");
  const std::size_t m = lv.rows(), t = lv.cols();
  require(gold.size() == m, "row_cross_entropy: " + std::to_string(gold.size()) + " labels for " + std::to_string(m) +
                                " rows");
  Tensor probs(lv.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    require(gold[r] < t, "row_cross_entropy label out of range");
    const auto p = tc::softmax(lv.row(r));
    std::copy(p.begin(), p.end(), probs.row(r).begin());
    const auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    loss += std::log(z) + mx - row[gold[r]];
  }
  std::vector<std::size_t> labels(gold.begin(), gold.end());
  return logits.tape().record(OpKind::kRowCrossEntropy, Tensor::scalar(loss / static_cast<double>(m)), {logits},
                              [probs = std::move(probs), labels = std::move(labels), m, t](BackwardContext& ctx) {
                                Tensor* g = ctx.in_grads[0];
                                if (!g) return;
                                const double s = ctx.out_grad[0] / static_cast<double>(m);
                                for (std::size_t r = 0; r < m; ++r)
                                  for (std::size_t c = 0; c < t; ++c)
                                    g->at(r, c) += s * (probs.at(r, c) - (c == labels[r] ? 1.0 : 0.0));
                              });
}

Var bce_logit(Var logit, bool label) {
  require(logit.value().size() == 1, "bce_logit expects a scalar logit");
  const double z = logit.value()[0];
  const double y = label ? 1.0 : 0.0;
  const double loss = std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
  const double p = 1.0 / (1.0 + std::exp(-z));
  return logit.tape().record(OpKind::kBceLogit, Tensor::scalar(loss), {logit}, [p, y](BackwardContext& ctx) {
    if (Tensor* g = ctx.in_grads[0]) (*g)[0] += ctx.out_grad[0] * (p - y);
  });
}

}  // namespace slab::tc
