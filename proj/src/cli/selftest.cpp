#include "slab/cli/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>

#include "slab/common/random.hpp"
#include "slab/rankers/rankers.hpp"
#include "slab/tensorcore/gradcheck.hpp"
#include "slab/tensorcore/kernels.hpp"
#include "slab/tensorcore/ops.hpp"

namespace slab::cli {

using tc::ScalarFn;
using tc::Shape;
using tc::Tape;
using tc::Tensor;
using tc::Var;

namespace {

struct Instance {
  ScalarFn fn;
  Tensor x;
  double eps = 1e-3;
};

using Maker = std::function<Instance(Rng&)>;

// Random fixed weights so every output coordinate reaches the scalar.
Var project(Tape& tape, Var v, std::uint64_t seed) {
  Rng rng(seed);
  return tc::sum(tc::mul(v, tape.constant(Tensor::uniform(v.shape(), rng, 1.0))));
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Distance from x to the nearest sparsemax support change; the derivative
// does not exist there.
double sparsemax_margin(std::span<const double> x) {
  if (x.size() < 2) return std::numeric_limits<double>::infinity();
  const auto p = tc::sparsemax(x);
  double tau = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (p[i] > 0.0) tau = x[i] - p[i];
  }
  double margin = std::numeric_limits<double>::infinity();
  for (double v : x) margin = std::min(margin, std::abs(v - tau));
  return margin;
}

Tensor sparsemax_input(Rng& rng, std::size_t n, double margin) {
  for (;;) {
    Tensor x = Tensor::uniform({n}, rng, 1.5);
    if (sparsemax_margin(x.values()) > margin) return x;
  }
}

std::vector<std::pair<std::string, Maker>> kernel_makers() {
  std::vector<std::pair<std::string, Maker>> m;
  auto unary = [&](std::string name, std::function<Var(Var)> op, double scale, bool matrix) {
    m.emplace_back(std::move(name), [op, scale, matrix](Rng& rng) {
      const Shape shape = matrix ? Shape{between(rng, 1, 4), between(rng, 1, 4)} : Shape{between(rng, 1, 6)};
      const std::uint64_t w = rng.next();
      return Instance{[op, w](Tape& t, Var x) { return project(t, op(x), w); }, Tensor::uniform(shape, rng, scale)};
    });
  };
  m.emplace_back("matmul", [](Rng& rng) {
    const std::size_t a = between(rng, 1, 4), k = between(rng, 1, 4), b = between(rng, 1, 4);
    const Tensor l = Tensor::uniform({a, k}, rng, 1.0), r = Tensor::uniform({k, b}, rng, 1.0);
    const std::uint64_t w = rng.next();
    // x appears on both sides so both backward branches are exercised.
    return Instance{[l, r, w](Tape& t, Var x) {
                      Var left = tc::matmul(t.constant(l), x);
                      Var right = tc::matmul(tc::transpose(x), tc::transpose(t.constant(l)));
                      return tc::add(project(t, tc::matmul(left, t.constant(r)), w), project(t, right, w + 1));
                    },
                    Tensor::uniform({k, k}, rng, 1.0)};
  });
  unary("transpose", [](Var x) { return tc::transpose(x); }, 1.0, true);
  m.emplace_back("reshape", [](Rng& rng) {
    const std::size_t a = between(rng, 1, 4), b = between(rng, 1, 4);
    const std::uint64_t w = rng.next();
    return Instance{[a, b, w](Tape& t, Var x) { return project(t, tc::reshape(x, {b, a}), w); },
                    Tensor::uniform({a, b}, rng, 1.0)};
  });
  m.emplace_back("add", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    const Tensor c = Tensor::uniform({n}, rng, 1.0);
    const std::uint64_t w = rng.next();
    return Instance{[c, w](Tape& t, Var x) { return project(t, tc::add(tc::add(x, t.constant(c)), x), w); },
                    Tensor::uniform({n}, rng, 1.0)};
  });
  m.emplace_back("sub", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    const Tensor c = Tensor::uniform({n}, rng, 1.0);
    const std::uint64_t w = rng.next();
    return Instance{[c, w](Tape& t, Var x) {
                      return project(t, tc::sub(tc::sub(x, t.constant(c)), tc::scale(x, 3.0)), w);
                    },
                    Tensor::uniform({n}, rng, 1.0)};
  });
  m.emplace_back("mul", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    const Tensor c = Tensor::uniform({n}, rng, 1.0);
    const std::uint64_t w = rng.next();
    return Instance{[c, w](Tape& t, Var x) { return project(t, tc::mul(tc::mul(x, t.constant(c)), x), w); },
                    Tensor::uniform({n}, rng, 1.0)};
  });
  m.emplace_back("scale", [](Rng& rng) {
    const double f = rng.uniform(-3.0, 3.0);
    const std::uint64_t w = rng.next();
    return Instance{[f, w](Tape& t, Var x) { return project(t, tc::scale(x, f), w); },
                    Tensor::uniform({between(rng, 1, 6)}, rng, 1.0)};
  });
  m.emplace_back("add_row", [](Rng& rng) {
    const std::size_t r = between(rng, 1, 4), c = between(rng, 1, 4);
    const std::uint64_t w = rng.next();
    return Instance{[c, w](Tape& t, Var x) {
                      Var mat = tc::slice_cols(x, 0, c);
                      Var bias = tc::row(tc::slice_cols(x, c, 2 * c), 0);
                      return project(t, tc::add_row(mat, bias), w);
                    },
                    Tensor::uniform({r, 2 * c}, rng, 1.0)};
  });
  unary("tanh", [](Var x) { return tc::tanh(x); }, 2.0, true);
  unary("sigmoid", [](Var x) { return tc::sigmoid(x); }, 3.0, true);
  unary("softmax", [](Var x) { return tc::softmax(x); }, 3.0, false);
  unary("softmax_rows", [](Var x) { return tc::softmax_rows(x); }, 3.0, true);
  m.emplace_back("sparsemax", [](Rng& rng) {
    const std::uint64_t w = rng.next();
    return Instance{[w](Tape& t, Var x) { return project(t, tc::sparsemax(x), w); },
                    sparsemax_input(rng, between(rng, 2, 8), 1e-2)};
  });
  m.emplace_back("conv1d/input", [](Rng& rng) {
    const std::size_t len = between(rng, 1, 5), d = between(rng, 1, 3), w = 2 * rng.below(2) + 1, f = between(rng, 1, 3);
    const Tensor filters = Tensor::uniform({w, d, f}, rng, 1.0);
    const std::uint64_t seed = rng.next();
    return Instance{[filters, seed](Tape& t, Var x) { return project(t, tc::conv1d(x, t.constant(filters)), seed); },
                    Tensor::uniform({len, d}, rng, 1.0)};
  });
  m.emplace_back("conv1d/filters", [](Rng& rng) {
    const std::size_t len = between(rng, 1, 5), d = between(rng, 1, 3), w = 2 * rng.below(2) + 1, f = between(rng, 1, 3);
    const Tensor input = Tensor::uniform({len, d}, rng, 1.0);
    const std::uint64_t seed = rng.next();
    return Instance{[input, seed](Tape& t, Var x) { return project(t, tc::conv1d(t.constant(input), x), seed); },
                    Tensor::uniform({w, d, f}, rng, 1.0)};
  });
  unary("avg_pool", [](Var x) { return tc::avg_pool(x); }, 1.0, true);
  m.emplace_back("dot", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    const Tensor c = Tensor::uniform({n}, rng, 1.0);
    return Instance{[c](Tape& t, Var x) { return tc::add(tc::dot(x, t.constant(c)), tc::dot(x, x)); },
                    Tensor::uniform({n}, rng, 1.0)};
  });
  m.emplace_back("sum", [](Rng& rng) {
    return Instance{[](Tape&, Var x) { return tc::sum(tc::mul(x, x)); },
                    Tensor::uniform({between(rng, 1, 4), between(rng, 1, 4)}, rng, 1.0)};
  });
  m.emplace_back("gather_rows", [](Rng& rng) {
    const std::size_t v = between(rng, 1, 5), d = between(rng, 1, 4), n = between(rng, 1, 6);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) idx.push_back(rng.below(5) == 0 ? tc::kZeroRow : rng.below(v));
    const std::uint64_t w = rng.next();
    return Instance{[idx, w](Tape& t, Var x) { return project(t, tc::gather_rows(x, idx), w); },
                    Tensor::uniform({v, d}, rng, 1.0)};
  });
  m.emplace_back("stack", [](Rng& rng) {
    const std::uint64_t w = rng.next();
    return Instance{[w](Tape& t, Var x) {
                      std::vector<Var> rows{tc::row(x, 1), tc::scale(tc::row(x, 0), 2.0), tc::row(x, 1)};
                      std::vector<Var> scalars{tc::sum(x), tc::dot(tc::row(x, 0), tc::row(x, 1))};
                      return tc::add(project(t, tc::stack(rows), w), project(t, tc::stack(scalars), w + 1));
                    },
                    Tensor::uniform({2, between(rng, 1, 4)}, rng, 1.0)};
  });
  m.emplace_back("row", [](Rng& rng) {
    const std::size_t r = between(rng, 1, 4);
    const std::size_t pick = rng.below(r);
    const std::uint64_t w = rng.next();
    return Instance{[pick, w](Tape& t, Var x) { return project(t, tc::row(x, pick), w); },
                    Tensor::uniform({r, between(rng, 1, 4)}, rng, 1.0)};
  });
  m.emplace_back("slice_cols", [](Rng& rng) {
    const std::size_t c = between(rng, 1, 5);
    const std::size_t b = rng.below(c), e = b + 1 + rng.below(c - b);
    const std::uint64_t w = rng.next();
    return Instance{[b, e, w](Tape& t, Var x) { return project(t, tc::slice_cols(x, b, e), w); },
                    Tensor::uniform({between(rng, 1, 4), c}, rng, 1.0)};
  });
  m.emplace_back("concat_cols", [](Rng& rng) {
    const std::uint64_t w = rng.next();
    return Instance{[w](Tape& t, Var x) {
                      std::vector<Var> parts{x, tc::tanh(x), x};
                      return project(t, tc::concat_cols(parts), w);
                    },
                    Tensor::uniform({between(rng, 1, 4), between(rng, 1, 3)}, rng, 1.0)};
  });
  m.emplace_back("dropout", [](Rng& rng) {
    const std::uint64_t mask = rng.next(), w = rng.next();
    const double rate = rng.uniform(0.1, 0.6);
    return Instance{[mask, w, rate](Tape& t, Var x) {
                      Rng local(mask);  // same mask on every evaluation
                      return project(t, tc::dropout(x, rate, local), w);
                    },
                    Tensor::uniform({between(rng, 1, 4), between(rng, 1, 4)}, rng, 1.0)};
  });
  m.emplace_back("ce_negsample", [](Rng& rng) {
    const std::size_t n = between(rng, 2, 6), d = between(rng, 1, 4);
    const Tensor q = Tensor::uniform({d}, rng, 1.5);
    return Instance{[q, n](Tape& t, Var x) {
                      Var qv = t.constant(q);
                      std::vector<Var> negs;
                      for (std::size_t i = 1; i < n; ++i) negs.push_back(tc::dot(tc::row(x, i), qv));
                      return tc::ce_negsample(tc::dot(tc::row(x, 0), qv), negs);
                    },
                    Tensor::uniform({n, d}, rng, 1.5)};
  });
  m.emplace_back("mse_matrix", [](Rng& rng) {
    const std::size_t r = between(rng, 1, 5), c = between(rng, 1, 5);
    const Tensor target = Tensor::uniform({r, c}, rng, 1.0);
    return Instance{[target](Tape& t, Var x) { return tc::mse_matrix(x, t.constant(target)); },
                    Tensor::uniform({r, c}, rng, 1.0)};
  });
  m.emplace_back("softargmax", [](Rng& rng) {
    const double beta = rng.uniform(1.0, 4.0);
    return Instance{[beta](Tape&, Var x) { return tc::softargmax(x, beta); },
                    Tensor::uniform({between(rng, 2, 8)}, rng, 1.5)};
  });
  m.emplace_back("row_cross_entropy", [](Rng& rng) {
    const std::size_t r = between(rng, 1, 5), c = between(rng, 2, 10);
    std::vector<std::size_t> gold;
    for (std::size_t i = 0; i < r; ++i) gold.push_back(rng.below(c));
    return Instance{[gold](Tape&, Var x) { return tc::row_cross_entropy(x, gold); },
                    Tensor::uniform({r, c}, rng, 2.0)};
  });
  m.emplace_back("bce_logit", [](Rng& rng) {
    const bool label = rng.below(2) == 1;
    return Instance{[label](Tape&, Var x) { return tc::bce_logit(x, label); }, Tensor::scalar(rng.uniform(-4.0, 4.0))};
  });
  return m;
}

// Paragraph attention scores a_i = q^T tanh(A r_i + b) of one article.
std::vector<double> paragraph_scores(const rank::RankerModel& model, const Tensor& q, const corpus::Article& art) {
  const Tensor& A = model.paragraph.A;
  const Tensor& b = model.paragraph.b;
  std::vector<double> out;
  for (const auto& s : art.statements) {
    Tape tape;
    tc::ParamBinder bind(tape, false);
    const Tensor r = rank::encode_text(bind, model, lexical::tokenize(s)).value();
    double a = 0.0;
    for (std::size_t i = 0; i < A.rows(); ++i) {
      double h = b[i];
      for (std::size_t j = 0; j < A.cols(); ++j) h += A.at(i, j) * r[j];
      a += q[i] * std::tanh(h);
    }
    out.push_back(a);
  }
  return out;
}

// One query, one relevant and two other articles through the full ranker
// scoring path; the checked tensor is one parameter chosen per instance.
// Draws whose paragraph weights sit near a sparsemax kink are redrawn.
Instance ranker_instance(Rng& rng, rank::ModelKind kind) {
  const std::vector<std::string> vocab{"gift", "lien", "party", "claim", "debt", "void"};
  rank::ModelDims dims;
  dims.embedding_dim = 4;
  dims.n_filters = 3;
  dims.width = 3;
  dims.attention_dim = 2;
  dims.n_layers = 2;
  dims.n_heads = 2;
  dims.max_len = 6;
  dims.init_scale = 0.8;
  for (;;) {
    auto model = std::make_shared<rank::RankerModel>(rank::RankerModel::create(kind, vocab, dims, rng.next()));
    auto sentence = [&] {
      std::string s;
      const std::size_t len = between(rng, 1, 4);
      for (std::size_t i = 0; i < len; ++i) s += (i ? " " : "") + vocab[rng.below(vocab.size())];
      return s + ".";
    };
    auto articles = std::make_shared<std::vector<corpus::Article>>();
    for (int a = 0; a < 3; ++a) {
      corpus::Article art{"a" + std::to_string(a), "", "", {}};
      const std::size_t n = between(rng, 1, 3);
      for (std::size_t s = 0; s < n; ++s) art.statements.push_back(sentence());
      articles->push_back(std::move(art));
    }
    const auto query = lexical::tokenize(sentence());
    std::vector<const Tensor*> params = std::as_const(*model).parameters();
    const Tensor* target = params[rng.below(params.size())];

    Tape tape;
    tc::ParamBinder bind(tape, false);
    const Tensor q = rank::encode_text(bind, *model, query).value();
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& art : *articles) margin = std::min(margin, sparsemax_margin(paragraph_scores(*model, q, art)));
    if (margin < 1e-2) continue;

    ScalarFn fn = [model, articles, query, target](Tape& t, Var v) {
      tc::ParamBinder b(t, false);
      b.alias(*target, v);
      Var qv = rank::encode_text(b, *model, query);
      Var pos = rank::score_article(b, *model, qv, (*articles)[0]);
      std::vector<Var> negs{rank::score_article(b, *model, qv, (*articles)[1]),
                            rank::score_article(b, *model, qv, (*articles)[2])};
      return tc::ce_negsample(pos, negs);
    };
    return {fn, *target, 1e-4};
  }
}

}  // namespace

std::vector<GradientCheck> gradient_suite(std::size_t instances, std::uint64_t seed) {
  auto makers = kernel_makers();
  makers.emplace_back("attentive_cnn", [](Rng& rng) { return ranker_instance(rng, rank::ModelKind::kAttentiveCnn); });
  makers.emplace_back("paraformer_lite",
                      [](Rng& rng) { return ranker_instance(rng, rank::ModelKind::kParaformerLite); });
  std::vector<GradientCheck> out;
  for (std::size_t k = 0; k < makers.size(); ++k) {
    Rng rng(seed * 1000003 + k);
    GradientCheck c{makers[k].first, 0.0, instances};
    for (std::size_t i = 0; i < instances; ++i) {
      const Instance inst = makers[k].second(rng);
      c.max_rel_error = std::max(c.max_rel_error, tc::grad_check(inst.fn, inst.x, inst.eps).max_rel_error);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> simplex_projection_bisection(const std::vector<double>& x) {
  double lo = *std::min_element(x.begin(), x.end()) - 1.0;
  double hi = *std::max_element(x.begin(), x.end());
  auto mass = [&](double tau) {
    double s = 0.0;
    for (double v : x) s += std::max(v - tau, 0.0);
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = std::max(x[i] - tau, 0.0);
  return p;
}

std::vector<PropertyCheck> property_suite(std::size_t trials, std::uint64_t seed) {
  Rng rng(seed);
  PropertyCheck simplex{"sparsemax on simplex", trials, 0.0, 1e-12};
  PropertyCheck shift{"sparsemax translation invariance", trials, 0.0, 0.0};
  PropertyCheck bisect{"sparsemax vs bisection projection", trials, 0.0, 1e-8};
  PropertyCheck soft{"softmax vs direct exponentials", trials, 0.0, 1e-12};
  PropertyCheck ce{"ce_negsample vs log-sum-exp", trials, 0.0, 1e-12};
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = between(rng, 2, 16);
    // Dyadic grid: x + c is exact, so the shifted input is a true translate.
    std::vector<double> x(n);
    for (double& v : x) v = std::ldexp(static_cast<double>(rng.below(6u << 20)) - (3u << 20), -20);
    const auto p = tc::sparsemax(x);
    double s = 0.0, neg = 0.0;
    for (double v : p) {
      s += v;
      neg = std::max(neg, -v);
    }
    simplex.worst = std::max({simplex.worst, std::abs(s - 1.0), neg});

    const double c = std::ldexp(static_cast<double>(rng.below(1u << 24)) - (1u << 23), -20);
    std::vector<double> xs(x);
    for (double& v : xs) v += c;
    const auto ps = tc::sparsemax(xs);
    for (std::size_t i = 0; i < n; ++i) shift.worst = std::max(shift.worst, std::abs(ps[i] - p[i]));

    const auto ref = simplex_projection_bisection(x);
    for (std::size_t i = 0; i < n; ++i) bisect.worst = std::max(bisect.worst, std::abs(ref[i] - p[i]));

    const auto sm = tc::softmax(x);
    double z = 0.0;
    for (double v : x) z += std::exp(v);
    for (std::size_t i = 0; i < n; ++i) soft.worst = std::max(soft.worst, std::abs(sm[i] - std::exp(x[i]) / z));

    const std::vector<double> negs(x.begin() + 1, x.end());
    const double direct = std::log(z) - x[0];
    ce.worst = std::max(ce.worst, std::abs(tc::ce_negsample(x[0], negs) - direct));
  }
  return {simplex, shift, bisect, soft, ce};
}

}  // namespace slab::cli
