#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "synthetic_inject.hpp"
#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/rankers/rankers.hpp"
#include "slab/tensorcore/gradcheck.hpp"
#include "temp_dir.hpp"

using namespace slab;
using namespace slab::inject;
using tc::Tensor;

namespace {

std::vector<std::vector<double>> to_rows(const Tensor& t) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < t.rows(); ++r) out.emplace_back(t.row(r).begin(), t.row(r).end());
  return out;
}

using Mat = std::vector<std::vector<double>>;

Mat matmul(const Mat& a, const Tensor& b) {
  Mat out(a.size(), std::vector<double>(b.cols(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.rows(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) out[i][j] += a[i][k] * b.at(k, j);
  return out;
}

// Loop forward of a position-aware stack: returns per layer per head weights.
std::vector<std::vector<Mat>> attention_by_hand(const enc::TransformerEncoder& m, const std::vector<std::string>& toks) {
  Mat x;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::vector<double> row(m.d(), 0.0);
    if (auto r = m.embeddings.index(toks[i])) {
      for (std::size_t j = 0; j < m.d(); ++j) row[j] = m.embeddings.vector(*r)[j];
    }
    if (m.use_positions) {
      for (std::size_t j = 0; j < m.d(); ++j) row[j] += m.positions.at(i, j);
    }
    x.push_back(row);
  }
  std::vector<std::vector<Mat>> out;
  for (const auto& layer : m.layers) {
    const Mat q = matmul(x, layer.wq), k = matmul(x, layer.wk), v = matmul(x, layer.wv);
    const std::size_t dh = layer.head_dim(), n = x.size();
    Mat z(n, std::vector<double>(m.d(), 0.0));
    out.emplace_back();
    for (std::size_t h = 0; h < layer.n_heads; ++h) {
      Mat w(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n, 0.0);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < dh; ++c) s[j] += q[i][h * dh + c] * k[j][h * dh + c] / std::sqrt(double(dh));
        w[i] = oracle::softmax_direct(s);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < dh; ++c) z[i][h * dh + c] += w[i][j] * v[j][h * dh + c];
      }
      out.back().push_back(w);
    }
    const Mat proj = matmul(z, layer.wo);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m.d(); ++j) x[i][j] += proj[i][j];
  }
  return out;
}

std::vector<Tag> tags(std::initializer_list<const char*> names) {
  std::vector<Tag> out;
  for (const char* n : names) out.push_back(parse_tag(n));
  return out;
}

}  // namespace

TEST_CASE("SDOI matrices validate and round trip") {
  SdoiMatrix ok{{"a", "b"}, Tensor::from_rows({{0, 1}, {1, 0}})};
  CHECK_NOTHROW(ok.validate());
  SdoiMatrix frac{{"a", "b"}, Tensor::from_rows({{0, 0.5}, {1, 0}})};
  CHECK_THROWS_AS(frac.validate(), ValidationError);
  SdoiMatrix rect{{"a", "b", "c"}, Tensor::from_rows({{0, 1}, {1, 0}})};
  CHECK_THROWS_AS(rect.validate(), ValidationError);

  testing::TempDir dir;
  save_sdoi(dir / "s.jsonl", {ok, ok});
  const auto back = load_sdoi(dir / "s.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].tokens == ok.tokens);
  CHECK(back[1].matrix == ok.matrix);
  write_text_file(dir / "bad.jsonl", "{\"tokens\":[\"a\"],\"matrix\":[[1]]}\n{\"tokens\":[\"a\"],\"matrix\":[[2]]}\n");
  CHECK_THROWS_WITH_AS(load_sdoi(dir / "bad.jsonl"), doctest::Contains(":2"), ValidationError);
}

TEST_CASE("hydra_scores matches a loop") {
  Rng rng(2);
  const Tensor h = Tensor::uniform({5, 6}, rng, 1.0);
  const HydraHead head = HydraHead::random(6, 3, rng, 1.0);
  const Tensor m = hydra_scores(h, head);
  const Mat q = matmul(to_rows(h), head.wq), k = matmul(to_rows(h), head.wk);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s += q[i][c] * k[j][c];
      CHECK(std::abs(m.at(i, j) - s / std::sqrt(3.0)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(hydra_scores(Tensor({5, 4}), head), ValidationError);
}

TEST_CASE("hydra_pretrain at an exact fit stays put") {
  // H = I, W_q = I, W_k = 2I, d_head = 4: M^h = 2I / 2 = I exactly.
  Tensor eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  Tensor two = eye;
  for (double& v : two.values()) v *= 2.0;
  std::vector<HydraHead> heads{{eye, two}};
  const SdoiMatrix target{{"a", "b", "c", "d"}, eye};
  HydraConfig cfg;
  cfg.steps = 5;
  const auto trace = hydra_pretrain(std::vector<Tensor>{eye}, {target}, heads, cfg);
  for (double l : trace.loss) CHECK(l == 0.0);
  CHECK(heads[0].wq == eye);
  CHECK(heads[0].wk == two);
}

TEST_CASE("hydra_pretrain fits attainable targets with a frozen body") {
  auto f = testing::make_hydra_fixture(1);
  const std::string before = rank::checkpoint_bytes(f.body);
  const auto trace = hydra_pretrain(f.body, f.targets, f.heads, HydraConfig{});
  CHECK(trace.loss.size() == 500);
  CHECK(trace.final_loss <= 1e-3);
  CHECK(trace.final_loss < trace.loss.front());
  CHECK(rank::checkpoint_bytes(f.body) == before);
  CHECK(std::abs(hydra_loss(body_states(f.body, f.targets), f.targets, f.heads) - trace.final_loss) == 0.0);

  auto g = testing::make_hydra_fixture(1);
  hydra_pretrain(g.body, g.targets, g.heads, HydraConfig{});
  CHECK(g.heads[0].wq == f.heads[0].wq);

  std::vector<Tensor> short_states{Tensor({3, 16})};
  CHECK_THROWS_AS(hydra_pretrain(short_states, {f.targets[0]}, f.heads, HydraConfig{}), ValidationError);
  CHECK_THROWS_AS(hydra_pretrain(std::vector<Tensor>{}, f.targets, f.heads, HydraConfig{}), ValidationError);
}

TEST_CASE("hydra_attach preserves outputs and adds the analytic parameter count") {
  auto f = testing::make_hydra_fixture(4);
  const auto model = hydra_attach(f.body, f.heads);
  REQUIRE(model.layers.size() == f.body.layers.size() + 1);
  for (const auto& t : f.targets) {
    tc::Tape a, b;
    tc::ParamBinder ba(a, false), bb(b, false);
    const Tensor body_out = enc::transformer_forward(ba, t.tokens, f.body).hidden.back().value();
    const Tensor model_out = enc::transformer_forward(bb, t.tokens, model).hidden.back().value();
    CHECK(tc::max_abs_diff(body_out, model_out) == 0.0);
  }
  const std::size_t d = 16, dh = 8, h = 2;
  const std::size_t added = 2 * d * dh * h + 2 * d * d;
  CHECK(parameter_count(model) - parameter_count(f.body) == added);
  // Four [d×d] tensors (5-byte magic, u64 rank, two u64 dims, f64 values)
  // plus ",2" in the head-count list.
  const std::size_t bytes = rank::checkpoint_bytes(model).size() - rank::checkpoint_bytes(f.body).size();
  CHECK(bytes == 4 * (5 + 8 + 16) + 8 * added + 2);

  CHECK(rank::checkpoint_bytes(hydra_detach(model)) == rank::checkpoint_bytes(f.body));
  const auto back = heads_of(model.layers.back());
  REQUIRE(back.size() == 2);
  CHECK(back[1].wq == f.heads[1].wq);
  CHECK(back[1].wk == f.heads[1].wk);

  Rng rng(1);
  std::vector<HydraHead> wrong{HydraHead::random(12, 6, rng, 0.1)};
  CHECK_THROWS_AS(hydra_attach(f.body, wrong), ValidationError);
  std::vector<HydraHead> narrow{f.heads[0]};
  CHECK_THROWS_AS(hydra_attach(f.body, narrow), ValidationError);
}

TEST_CASE("the annotation table fixture") {
  const auto data = load_bioe(testing::fixture("annotation_sample.tsv"));
  REQUIRE(data.size() == 1);
  const auto& s = data[0];
  REQUIRE(s.tokens.size() == 33);
  CHECK(s.tokens[0] == "Gifts");
  CHECK(s.levels[0][0] == Tag::BR);
  CHECK(s.levels[1][0] == Tag::BE);
  CHECK(s.levels[2][0] == Tag::O);

  const auto stats = tag_stats(data);
  const std::map<std::string, std::size_t> expect{{"B-R", 2}, {"I-R", 10}, {"E-R", 2},  {"B-E", 2}, {"I-E", 13},
                                                  {"E-E", 2}, {"B-U", 1},  {"I-U", 19}, {"E-U", 1}, {"O", 47}};
  CHECK(stats == expect);
  std::size_t sum = 0;
  for (const auto& [tag, n] : stats) sum += n;
  CHECK(sum == 3 * s.tokens.size());

  const std::vector<Segment> l1{{'R', 0, 3}, {'R', 22, 31}};
  CHECK(segments(s.levels[0]) == l1);
  // The effectuation on L2 skips "not in writing".
  const std::vector<Segment> l2{{'E', 0, 9}, {'E', 16, 25}};
  CHECK(segments(s.levels[1]) == l2);
  CHECK(parse_bioe(format_bioe(data))[0].levels == s.levels);
}

TEST_CASE("BIOE validation") {
  for (const auto& v : tag_stats({})) CHECK(v.second == 0);
  CHECK(tag_stats({}).size() == kTagCount);
  CHECK_THROWS_WITH_AS(parse_tag("B-X"), doctest::Contains("B-X"), ValidationError);
  CHECK(parse_tag("-") == Tag::O);

  auto sample = [](std::vector<Tag> l1) {
    BioeSample s;
    for (std::size_t i = 0; i < l1.size(); ++i) s.tokens.push_back("t" + std::to_string(i));
    s.levels = {l1, std::vector<Tag>(l1.size(), Tag::O), std::vector<Tag>(l1.size(), Tag::O)};
    return s;
  };
  CHECK_NOTHROW(sample(tags({"B-R", "I-R", "E-R", "O"})).validate());
  CHECK_NOTHROW(sample(tags({"B-R", "E-R", "B-E", "E-E"})).validate());
  CHECK_THROWS_AS(sample(tags({"E-R", "O"})).validate(), ValidationError);
  CHECK_THROWS_AS(sample(tags({"O", "I-R", "E-R"})).validate(), ValidationError);
  CHECK_THROWS_AS(sample(tags({"B-R", "I-E", "E-R"})).validate(), ValidationError);
  CHECK_THROWS_AS(sample(tags({"B-R", "I-R"})).validate(), ValidationError);
  CHECK_NOTHROW(sample(tags({"B-R", "O", "E-R"})).validate());
  CHECK_THROWS_AS(sample(tags({"B-R", "B-R", "E-R"})).validate(), ValidationError);
  BioeSample ragged = sample(tags({"O", "O"}));
  ragged.levels[2].pop_back();
  CHECK_THROWS_AS(ragged.validate(), ValidationError);
  CHECK_THROWS_WITH_AS(parse_bioe("a\tO\tO\nb\tO\tO\tO\n"), doctest::Contains("line 1"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_bioe("a\tO\tO\tQ\n"), doctest::Contains("\"Q\""), ValidationError);

  // Lenient segment extraction from predictions.
  const std::vector<Segment> got{{'E', 3, 4}};
  CHECK(segments(tags({"B-R", "I-R", "O", "B-E", "E-E", "E-U"})) == got);
}

TEST_CASE("tre_needle_loss") {
  Rng rng(6);
  const Tensor z = Tensor::uniform({4, 5}, rng, 1.0);
  const auto gold = tags({"B-R", "I-R", "E-R", "O"});
  CHECK(std::abs(tre_needle_loss(z, gold, Tensor({5, kTagCount}), Tensor({kTagCount})) - std::log(10.0)) < 1e-12);

  // Large logits for the gold tag only.
  Tensor one_hot({4, 4});
  for (std::size_t i = 0; i < 4; ++i) one_hot.at(i, i) = 1.0;
  Tensor W({4, kTagCount});
  for (std::size_t i = 0; i < 4; ++i) W.at(i, static_cast<std::size_t>(gold[i])) = 60.0;
  CHECK(tre_needle_loss(one_hot, gold, W, Tensor({kTagCount})) < 1e-20);

  CHECK_THROWS_AS(tre_needle_loss(z, tags({"O"}), Tensor({5, kTagCount}), Tensor({kTagCount})), ValidationError);
  CHECK_THROWS_AS(tre_needle_loss(z, gold, Tensor({5, 3}), Tensor({3})), ValidationError);

  const Tensor w0 = Tensor::uniform({5, kTagCount}, rng, 1.0), b0 = Tensor::uniform({kTagCount}, rng, 1.0);
  auto on_z = [&](tc::Tape& tape, tc::Var x) {
    tc::ParamBinder bind(tape, false);
    return tre_needle_loss(bind, x, gold, w0, b0);
  };
  CHECK(tc::grad_check(on_z, z).max_rel_error < 1e-4);
  auto on_w = [&](tc::Tape& tape, tc::Var x) {
    tc::ParamBinder bind(tape, false);
    bind.alias(w0, x);
    return tre_needle_loss(bind, tape.constant(z), gold, w0, b0);
  };
  CHECK(tc::grad_check(on_w, w0).max_rel_error < 1e-4);
}

TEST_CASE("injection configs and needle layout") {
  CHECK_NOTHROW(InjectionConfig({{2, 3, 4}, {0.2, 0.3, 0.5}}).validate(4));
  CHECK_THROWS_AS(InjectionConfig({{2, 2, 4}, {0.2, 0.3, 0.5}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{1, 1, 1}, {0.2, 0.3, 0.5}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{0, 3}, {0.5, 0.5}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{3, 5}, {0.5, 0.5}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{2, 3}, {0.5, 0.6}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{2, 3}, {1.5, -0.5}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{2, 3}, {1.0}}).validate(4), ValidationError);
  CHECK_THROWS_AS(InjectionConfig({{}, {}}).validate(4), ValidationError);

  auto layout = [](std::size_t p) {
    InjectionConfig c;
    for (std::size_t i = 0; i < p; ++i) {
      c.positions.push_back(i + 1);
      c.portions.push_back(1.0 / static_cast<double>(p));
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& n : make_needles(c, 4)) out.emplace_back(n.slot, n.level);
    return out;
  };
  using P = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(layout(1) == P{{0, 0}, {0, 1}, {0, 2}});
  CHECK(layout(2) == P{{0, 0}, {1, 1}, {0, 2}});
  CHECK(layout(3) == P{{0, 0}, {1, 1}, {2, 2}});
  CHECK(layout(4) == P{{0, 0}, {1, 1}, {2, 2}, {3, 0}});
}

TEST_CASE("TRE losses are the portion-weighted needle losses") {
  const auto f = testing::make_tre_fixture(3, 40);
  Rng rng(8);
  const auto model = enc::TransformerEncoder::random(f.vocab, 8, 3, 2, 16, rng, 0.3);
  const InjectionConfig two{{1, 3}, {0.5, 0.5}}, first{{1, 3}, {1.0, 0.0}}, single{{2}, {1.0}};
  auto needles = make_needles(two, 8);
  for (auto& n : needles) {
    n.W = Tensor::uniform(n.W.shape(), rng, 0.5);
    n.b = Tensor::uniform(n.b.shape(), rng, 0.5);
  }
  for (const auto& s : f.train) {
    tc::Tape tape;
    tc::ParamBinder bind(tape, false);
    const auto states = enc::transformer_forward(bind, s.tokens, model);
    // Independent recomputation from hidden states.
    std::vector<double> slot(2, 0.0);
    std::vector<int> count(2, 0);
    for (const auto& n : needles) {
      slot[n.slot] += tre_needle_loss(states.hidden[two.positions[n.slot]].value(), s.levels[n.level], n.W, n.b);
      ++count[n.slot];
    }
    for (int j = 0; j < 2; ++j) slot[j] /= count[j];
    const auto a = tre_losses(model, needles, two, s);
    const auto b = tre_losses(model, needles, first, s);
    CHECK(std::abs(a.total - (0.5 * slot[0] + 0.5 * slot[1])) < 1e-12);
    CHECK(std::abs(b.total - slot[0]) < 1e-12);
    CHECK(a.slot == b.slot);
    CHECK(a.needle == b.needle);

    const auto one = tre_losses(model, make_needles(single, 8), single, s);
    CHECK(one.total == one.slot[0]);
  }
}

TEST_CASE("tre_train learns the bracket grammar deterministically") {
  const auto f = testing::make_tre_fixture(5, 300);
  const InjectionConfig cfg{{2, 3}, {0.4, 0.6}};
  auto run = [&] {
    Rng rng(2);
    auto model = enc::TransformerEncoder::random(f.vocab, 16, 3, 2, 16, rng, 0.3);
    auto r = tre_train(model, cfg, f.train, f.val, TreTrainConfig{6, 0.1, 9});
    return std::make_pair(rank::checkpoint_bytes(model), r);
  };
  const auto [bytes, r] = run();
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  CHECK(r.val_eval.token_accuracy >= 0.95);
  CHECK(r.steps.size() == 6 * f.train.size());
  for (const auto& st : r.steps) CHECK(std::abs(st.total - (0.4 * st.slot[0] + 0.6 * st.slot[1])) < 1e-12);
  const auto [bytes2, r2] = run();
  CHECK(bytes == bytes2);
  CHECK(to_json(r.val_eval).dump() == to_json(r2.val_eval).dump());

  Rng rng(1);
  auto shallow = enc::TransformerEncoder::random(f.vocab, 8, 2, 2, 16, rng, 0.3);
  CHECK_THROWS_AS(tre_train(shallow, cfg, f.train, f.val, TreTrainConfig{}), ValidationError);
  CHECK_THROWS_AS(tre_train(shallow, InjectionConfig{{1}, {1.0}}, {}, f.val, TreTrainConfig{}), ValidationError);
}

TEST_CASE("attention_weights_report") {
  const auto f = testing::make_tre_fixture(2, 10);
  Rng rng(4);
  const auto model = enc::TransformerEncoder::random(f.vocab, 8, 2, 2, 16, rng, 0.7);
  const auto report = attention_weights_report(model, f.train[0].tokens);
  REQUIRE(report.size() == 2);
  for (const auto& layer : report) {
    REQUIRE(layer.size() == 2);
    for (const Tensor& w : layer) {
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (double v : w.row(r)) s += v;
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
    }
  }
  const auto one = attention_weights_report(model, {"if"});
  CHECK(one[0][0] == Tensor::from_rows({{1.0}}));

  testing::TempDir dir;
  rank::save_checkpoint(dir / "body.slrk", model);
  const auto loaded = rank::load_body(dir / "body.slrk");
  const auto by_hand = attention_by_hand(loaded, f.train[0].tokens);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < by_hand[l][h].size(); ++i)
        for (std::size_t j = 0; j < by_hand[l][h].size(); ++j)
          CHECK(std::abs(report[l][h].at(i, j) - by_hand[l][h][i][j]) < 1e-12);
}
