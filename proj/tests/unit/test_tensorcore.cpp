#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "slab/common/error.hpp"
#include "slab/common/random.hpp"
#include "slab/tensorcore/gradcheck.hpp"
#include "slab/tensorcore/kernels.hpp"
#include "slab/tensorcore/ops.hpp"

using namespace slab;
using namespace slab::tc;

namespace {

// Random weights make every output coordinate matter in the scalar loss.
Var weighted_sum(Tape& tape, Var v, std::uint64_t seed) {
  Rng rng(seed);
  Var w = tape.constant(Tensor::uniform(v.shape(), rng, 1.0));
  return sum(mul(v, w));
}

}  // namespace

TEST_CASE("tensor construction validates shape and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(Tensor::vector({1.0, std::nan("")}), ValidationError);
  CHECK_THROWS_AS(Tensor({0, 3}), ValidationError);
  const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.at(1, 2) == 6);
  CHECK(t.row(1)[0] == 4);
}

TEST_CASE("SLTN1 round trip preserves shape and bits") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Shape shape;
    const std::size_t rank = 1 + rng.below(3);
    for (std::size_t r = 0; r < rank; ++r) shape.push_back(1 + rng.below(5));
    const Tensor t = Tensor::normal(shape, rng, 3.0);
    std::stringstream ss;
    write_tensor(ss, t);
    CHECK(read_tensor(ss) == t);
  }
  std::stringstream bad("SLTNX");
  CHECK_THROWS_AS(read_tensor(bad), ValidationError);
}

TEST_CASE("SLTN1 layout is magic, u64 dims, f64 values") {
  std::stringstream ss;
  write_tensor(ss, Tensor::vector({1.0}));
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 5 + 8 + 8 + 8);
  CHECK(bytes.substr(0, 5) == "SLTN1");
  CHECK(bytes[5] == 1);   // rank, little-endian
  CHECK(bytes[13] == 1);  // dim 0
  CHECK(static_cast<unsigned char>(bytes[28]) == 0x3F);  // 1.0 = 0x3FF0000000000000
}

TEST_CASE("matmul") {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var ones = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  CHECK(matmul(a, ones).value() == Tensor::matrix(2, 1, {3, 7}));
  Var id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  CHECK(matmul(id, a).value() == a.value());
  CHECK_THROWS_AS(matmul(a, tape.constant(Tensor::matrix(3, 1, {1, 1, 1}))), ValidationError);

  Rng rng(3);
  const Tensor b = Tensor::uniform({3, 3}, rng, 1.0);
  auto f = [&](Tape& t, Var x) { return weighted_sum(t, matmul(x, t.constant(b)), 5); };
  CHECK(grad_check(f, Tensor::uniform({3, 3}, rng, 1.0)).max_rel_error < 1e-6);
  auto g = [&](Tape& t, Var x) { return weighted_sum(t, matmul(t.constant(b), x), 6); };
  CHECK(grad_check(g, Tensor::uniform({3, 3}, rng, 1.0)).max_rel_error < 1e-6);
}

TEST_CASE("softmax") {
  CHECK(softmax(std::vector<double>{0, 0}) == std::vector<double>{0.5, 0.5});
  const auto big = softmax(std::vector<double>{1000, 0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] == doctest::Approx(0.0));
  const std::vector<double> x{1, 2, 3};
  const auto expected = oracle::softmax_direct(x);  // 0.0900, 0.2447, 0.6652
  const auto got = softmax(x);
  for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-14));
  CHECK(got[0] == doctest::Approx(0.0900).epsilon(1e-3));
  CHECK(got[1] == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK(got[2] == doctest::Approx(0.6652).epsilon(1e-3));
}

TEST_CASE("sparsemax") {
  CHECK(sparsemax(std::vector<double>{1, 0, -1}) == std::vector<double>{1, 0, 0});
  const auto u = sparsemax(std::vector<double>{0.3, 0.3, 0.3, 0.3});
  for (double v : u) CHECK(v == doctest::Approx(0.25));

  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(15);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-3, 3);
    const auto p = sparsemax(x);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
    const auto ref = oracle::simplex_projection_bisection(x);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(p[i] - ref[i]) < 1e-8);
    // A point already on the simplex is a fixed point.
    const auto again = sparsemax(p);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(again[i] - p[i]) < 1e-12);
  }

  std::vector<double> x{0.5, -1.25, 2.0, 0.75};
  auto shifted = x;
  for (double& v : shifted) v += 4.0;  // exact in binary
  CHECK(sparsemax(x) == sparsemax(shifted));
}

TEST_CASE("sparsemax gradient is identity on the support minus its mean") {
  Tape tape;
  Var x = tape.leaf(Tensor::vector({1.0, 0.8, -2.0}));
  Var p = sparsemax(x);
  Var loss = dot(p, tape.constant(Tensor::vector({1.0, 3.0, 5.0})));
  tape.backward(loss);
  // support {0, 1}: g - mean(g_support) = [1-2, 3-2, 0]
  CHECK(x.grad() == Tensor::vector({-1.0, 1.0, 0.0}));
}

TEST_CASE("conv1d") {
  Tape tape;
  Rng rng(5);
  // w = 1 is a per-position linear map
  const Tensor x = Tensor::uniform({4, 3}, rng, 1.0);
  const Tensor f1 = Tensor::uniform({1, 3, 2}, rng, 1.0);
  Var c = conv1d(tape.constant(x), tape.constant(f1));
  Var lin = matmul(tape.constant(x), tape.constant(f1.reshaped({3, 2})));
  CHECK(max_abs_diff(c.value(), lin.value()) < 1e-15);

  Var z = conv1d(tape.constant(Tensor({5, 3})), tape.constant(Tensor::uniform({3, 3, 4}, rng, 1.0)));
  for (double v : z.value().values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(conv1d(tape.constant(x), tape.constant(Tensor({2, 3, 2}))), ValidationError);

  const Tensor filters = Tensor::uniform({3, 3, 4}, rng, 1.0);
  auto fx = [&](Tape& t, Var in) { return weighted_sum(t, conv1d(in, t.constant(filters)), 8); };
  CHECK(grad_check(fx, Tensor::uniform({5, 3}, rng, 1.0)).max_rel_error < 1e-6);
  const Tensor input = Tensor::uniform({5, 3}, rng, 1.0);
  auto ff = [&](Tape& t, Var w) { return weighted_sum(t, conv1d(t.constant(input), w), 9); };
  CHECK(grad_check(ff, filters).max_rel_error < 1e-6);
}

TEST_CASE("avg_pool") {
  Tape tape;
  CHECK(avg_pool(tape.constant(Tensor::matrix(1, 3, {1, 2, 3}))).value() == Tensor::vector({1, 2, 3}));
  CHECK(avg_pool(tape.constant(Tensor::matrix(2, 2, {1, 3, 3, 1}))).value() == Tensor::vector({2, 2}));
  Var z = tape.leaf(Tensor::matrix(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}));
  tape.backward(sum(avg_pool(z)));
  for (double g : z.grad().values()) CHECK(g == 0.25);
  Rng rng(1);
  auto f = [&](Tape& t, Var in) { return weighted_sum(t, avg_pool(in), 2); };
  CHECK(grad_check(f, Tensor::uniform({4, 3}, rng, 1.0)).max_rel_error < 1e-6);
}

TEST_CASE("ce_negsample") {
  CHECK(ce_negsample(0.3, std::vector<double>{}) == 0.0);
  CHECK(ce_negsample(0.0, std::vector<double>{0.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // p = e / (e + 1 + e^-1)
  const double p = std::exp(1.0) / (std::exp(1.0) + 1.0 + std::exp(-1.0));
  CHECK(p == doctest::Approx(0.6652).epsilon(1e-4));
  const double loss = ce_negsample(1.0, std::vector<double>{0.0, -1.0});
  CHECK(loss == doctest::Approx(-std::log(p)).epsilon(1e-14));
  CHECK(loss == doctest::Approx(0.4076).epsilon(1e-4));
  // large scores do not overflow
  CHECK(std::isfinite(ce_negsample(1000.0, std::vector<double>{999.0})));

  // strictly decreasing in the positive score
  double prev = ce_negsample(-5.0, std::vector<double>{0.2, -0.4});
  for (double y = -4.5; y <= 5.0; y += 0.5) {
    const double cur = ce_negsample(y, std::vector<double>{0.2, -0.4});
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("mse_matrix") {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(mse_matrix(a, a).value().item() == 0.0);
  CHECK(mse_matrix(a, tape.constant(Tensor::matrix(2, 2, {2, 1, 4, 3}))).value().item() == 1.0);
  CHECK_THROWS_AS(mse_matrix(a, tape.constant(Tensor::matrix(1, 2, {1, 1}))), ValidationError);
  Rng rng(4);
  const Tensor p = Tensor::uniform({5, 5}, rng, 2.0), t = Tensor::uniform({5, 5}, rng, 2.0);
  double loop = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) loop += (p.at(i, j) - t.at(i, j)) * (p.at(i, j) - t.at(i, j));
  loop /= 25.0;
  CHECK(std::abs(mse_matrix(tape.constant(p), tape.constant(t)).value().item() - loop) < 1e-12);
}

TEST_CASE("softargmax") {
  CHECK(softargmax(std::vector<double>{0, 0}, 1.0) == doctest::Approx(0.5));
  // e^10 / (1 + e^10)
  CHECK(softargmax(std::vector<double>{0, 10}, 1.0) == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(softargmax(std::vector<double>{0.1, 0.9, 0.3}, 500.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(softargmax(std::vector<double>{0, 1}, 0.5), ValidationError);
  Rng rng(2);
  auto f = [](Tape&, Var x) { return softargmax(x, 2.5); };
  CHECK(grad_check(f, Tensor::uniform({6}, rng, 1.0)).max_rel_error < 1e-6);
}

TEST_CASE("backward") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  tape.backward(mul(x, x));
  CHECK(x.grad().item() == 6.0);

  Tape t2;
  Var y = t2.leaf(Tensor::vector({1, 2}));
  Var c = t2.constant(Tensor::scalar(4.0));
  t2.backward(c);
  CHECK(y.grad() == Tensor::vector({0, 0}));

  Tape t3;
  Var v = t3.leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(t3.backward(v), ValidationError);
}

TEST_CASE("tape records creation order and parent ids") {
  Tape tape;
  Var a = tape.leaf(Tensor::vector({1, 2}));
  Var b = tape.constant(Tensor::vector({3, 4}));
  Var c = dot(a, b);
  CHECK(tape.size() == 3);
  CHECK(tape.kind(c.id()) == OpKind::kDot);
  CHECK(tape.parents(c.id()) == std::vector<std::size_t>{a.id(), b.id()});
  CHECK(op_name(tape.kind(c.id())) == "dot");
  CHECK(tape.requires_grad(c.id()));
  CHECK_FALSE(tape.requires_grad(b.id()));
}

TEST_CASE("grad_check catches a wrong gradient") {
  auto f = [](const Tensor& x) { return x[0] * x[0] + 3.0 * x[1]; };
  const Tensor x = Tensor::vector({0.7, -1.1});
  CHECK(grad_check_against(f, x, Tensor::vector({1.4, 3.0})).max_rel_error < 1e-9);
  CHECK(grad_check_against(f, x, Tensor::vector({2.8, -3.0})).max_rel_error > 0.3);

  auto linear = [](Tape& t, Var v) { return dot(v, t.constant(Tensor::vector({2.0, -1.0, 0.5}))); };
  CHECK(grad_check(linear, Tensor::vector({1, 2, 3})).max_rel_error < 1e-9);

  auto composite = [](Tape&, Var v) {
    Var p = softmax(v);
    return row_cross_entropy(reshape(p, {1, 4}), std::vector<std::size_t>{2});
  };
  CHECK(grad_check(composite, Tensor::vector({0.1, -0.3, 0.8, 0.2})).max_rel_error < 1e-6);
}

TEST_CASE("remaining kernels pass grad_check") {
  Rng rng(21);
  auto check = [&](const ScalarFn& f, const Tensor& x) { CHECK(grad_check(f, x).max_rel_error < 1e-6); };
  check([](Tape& t, Var x) { return weighted_sum(t, tanh(x), 1); }, Tensor::uniform({3, 2}, rng, 1.5));
  check([](Tape& t, Var x) { return weighted_sum(t, sigmoid(x), 2); }, Tensor::uniform({4}, rng, 2.0));
  check([](Tape& t, Var x) { return weighted_sum(t, softmax(x), 3); }, Tensor::uniform({5}, rng, 2.0));
  check([](Tape& t, Var x) { return weighted_sum(t, softmax_rows(x), 4); }, Tensor::uniform({3, 4}, rng, 2.0));
  check([](Tape& t, Var x) { return weighted_sum(t, transpose(x), 5); }, Tensor::uniform({3, 4}, rng, 2.0));
  check([](Tape& t, Var x) { return weighted_sum(t, slice_cols(x, 1, 3), 6); }, Tensor::uniform({3, 4}, rng, 2.0));
  check([](Tape& t, Var x) { return weighted_sum(t, row(x, 1), 7); }, Tensor::uniform({3, 4}, rng, 2.0));
  check([](Tape& t, Var x) { return weighted_sum(t, gather_rows(x, {2, 0, 2, kZeroRow}), 8); },
        Tensor::uniform({3, 4}, rng, 2.0));
  check([](Tape& t, Var x) {
          std::vector<Var> parts{x, scale(x, 2.0)};
          return weighted_sum(t, concat_cols(parts), 9);
        },
        Tensor::uniform({2, 3}, rng, 1.0));
  check([](Tape& t, Var x) { return weighted_sum(t, add_row(x, row(x, 0)), 10); }, Tensor::uniform({3, 3}, rng, 1.0));
  check([](Tape&, Var x) { return bce_logit(x, true); }, Tensor::scalar(0.4));
  check([](Tape&, Var x) { return bce_logit(x, false); }, Tensor::scalar(-1.3));
  check([](Tape&, Var x) {
          std::vector<std::size_t> gold{0, 2, 1};
          return row_cross_entropy(x, gold);
        },
        Tensor::uniform({3, 3}, rng, 2.0));
  check([](Tape& t, Var x) {
          Var s = sum(mul(x, x));
          std::vector<Var> ns{scale(s, 0.5), sum(x)};
          return ce_negsample(dot(x, t.constant(Tensor::vector({1, -1, 2}))), ns);
        },
        Tensor::uniform({3}, rng, 1.0));
}

TEST_CASE("kernels are bit-deterministic") {
  Rng a(9), b(9);
  const Tensor x1 = Tensor::uniform({4, 4}, a, 1.0), x2 = Tensor::uniform({4, 4}, b, 1.0);
  Tape t1, t2;
  Var l1 = sum(softmax_rows(matmul(t1.leaf(x1), transpose(t1.leaf(x1)))));
  Var l2 = sum(softmax_rows(matmul(t2.leaf(x2), transpose(t2.leaf(x2)))));
  CHECK(l1.value() == l2.value());
}
