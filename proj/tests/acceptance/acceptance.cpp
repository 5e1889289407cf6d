// Acceptance runner: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "planted.hpp"
#include "slab/augment/augment.hpp"
#include "slab/cli/selftest.hpp"
#include "slab/common/random.hpp"
#include "slab/embedmetrics/embedmetrics.hpp"
#include "slab/evalkit/evalkit.hpp"
#include "slab/inject/inject.hpp"
#include "slab/lexical/lexical.hpp"
#include "slab/rankers/rankers.hpp"
#include "slab/tensorcore/kernels.hpp"
#include "synthetic_inject.hpp"

using namespace slab;
using nlohmann::json;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 60.0;
constexpr std::size_t kGradInstances = 100;
constexpr std::size_t kSparsemaxVectors = 1000;
constexpr double kSimplexTol = 1e-12;
constexpr double kOracleTol = 1e-8;
constexpr double kHandTol = 1e-12;
constexpr double kBm25OnlyMax = 0.6;
constexpr double kEnsembleMin = 0.90;
constexpr double kRetrievalBudgetSec = 300.0;
constexpr double kHydraMse = 1e-3;
constexpr std::size_t kHydraSteps = 500;
constexpr double kTreAccuracy = 0.95;
constexpr double kF2Hand = 0.5556, kF2HandTol = 1e-4;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "" : "FAILED ") + what);
  }
  void info(const std::string& what) { notes.push_back(what); }
};

// ---- 1 ----------------------------------------------------------------------

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto suite = cli::gradient_suite(kGradInstances, 1);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& g : suite) {
    if (g.max_rel_error >= kGradTol || g.instances != kGradInstances) v.check(false, g.name + " " + fmt("%.2e", g.max_rel_error));
    if (g.max_rel_error >= worst) {
      worst = g.max_rel_error;
      worst_name = g.name;
    }
  }
  bool rankers = false;
  for (const auto& g : suite) rankers |= g.name == "paraformer_lite";
  v.check(rankers, "both ranker pipelines included");
  v.check(worst < kGradTol, std::to_string(suite.size()) + " checks x " + std::to_string(kGradInstances) +
                                " instances, worst " + fmt("%.2e", worst) + " (" + worst_name + ")");
  v.check(secs < kGradBudgetSec, fmt("%.1f s", secs));
  return v;
}

// ---- 2 ----------------------------------------------------------------------

Verdict sparsemax() {
  Verdict v;
  Rng rng(17);
  double simplex = 0.0, oracle = 0.0;
  std::size_t shift_mismatch = 0;
  for (std::size_t t = 0; t < kSparsemaxVectors; ++t) {
    const std::size_t n = 2 + rng.below(15);
    std::vector<double> x(n);
    // A 2^-20 grid keeps x + c exact in floating point.
    for (double& e : x) e = std::ldexp(std::round(rng.uniform(-3.0, 3.0) * 0x1p20), -20);
    const double c = std::ldexp(std::round(rng.uniform(-50.0, 50.0) * 0x1p20), -20);

    const auto p = tc::sparsemax(x);
    double sum = 0.0, neg = 0.0;
    for (double e : p) {
      sum += e;
      neg = std::max(neg, -e);
    }
    simplex = std::max({simplex, std::abs(sum - 1.0), neg});

    std::vector<double> xs = x;
    for (double& e : xs) e += c;
    if (tc::sparsemax(xs) != p) ++shift_mismatch;

    const auto q = oracle::simplex_projection_bisection(x);
    for (std::size_t i = 0; i < n; ++i) oracle = std::max(oracle, std::abs(p[i] - q[i]));
  }
  v.check(simplex <= kSimplexTol, "simplex deviation " + fmt("%.1e", simplex));
  v.check(shift_mismatch == 0, "translation mismatches " + std::to_string(shift_mismatch));
  v.check(oracle <= kOracleTol, "bisection oracle gap " + fmt("%.1e", oracle));
  return v;
}

// ---- 3 ----------------------------------------------------------------------

corpus::Corpus docs_from(const std::vector<std::vector<std::string>>& toks) {
  corpus::Corpus c;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::string text;
    for (const auto& t : toks[i]) text += (text.empty() ? "" : " ") + t;
    c.push_back({"d" + std::to_string(i), "", text, {}});
  }
  return c;
}

// Compares every document score and the top-n list for each query.
bool bm25_agrees(const std::vector<std::vector<std::string>>& docs,
                 const std::vector<std::vector<std::string>>& queries, std::size_t& compared) {
  const auto index = lexical::build_index(docs_from(docs));
  oracle::Bm25Oracle ref;
  ref.docs = docs;
  for (std::size_t i = 0; i < docs.size(); ++i) ref.ids.push_back("d" + std::to_string(i));
  bool ok = true;
  for (const auto& q : queries) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      ok &= lexical::bm25_score(index, q, ref.ids[d]) == ref.score(q, d);
      ++compared;
    }
    for (std::size_t n : {std::size_t{1}, std::size_t{3}, docs.size(), docs.size() + 2}) {
      ok &= lexical::top_n(index, q, n) == ref.rank(q, n);
    }
  }
  return ok;
}

Verdict bm25() {
  Verdict v;
  std::size_t compared = 0;
  const std::vector<std::vector<std::string>> fixed{
      {"the", "lien", "holder", "shall", "pay"},
      {"a", "gift", "in", "writing", "may", "be", "revoked"},
      {"the", "lessor", "of", "land", "shall", "repair", "the", "land"},
      {"fruit", "of", "the", "land", "belongs", "to", "the", "owner"},
      {"lien", "lien", "gift"}};
  const std::vector<std::vector<std::string>> fixed_q{
      {"lien"}, {"land", "owner"}, {"the"}, {"gift", "gift", "writing"}, {"absent"}, {"shall", "pay", "lien"}};
  v.check(bm25_agrees(fixed, fixed_q, compared), "fixed 5-document fixture");

  Rng rng(2025);
  const std::vector<std::string> vocab{"lien", "gift", "party", "shall", "lease", "rent",
                                       "owner", "claim", "heir", "debt", "land", "fruit"};
  bool random_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<std::string>> docs(1 + rng.below(100));
    for (auto& d : docs) {
      for (std::size_t t = 0, len = 1 + rng.below(15); t < len; ++t) d.push_back(vocab[rng.below(vocab.size())]);
    }
    std::vector<std::vector<std::string>> qs(3);
    for (auto& q : qs) {
      for (std::size_t t = 0, len = 1 + rng.below(4); t < len; ++t) q.push_back(vocab[rng.below(vocab.size())]);
    }
    random_ok &= bm25_agrees(docs, qs, compared);
  }
  v.check(random_ok, "50 random corpora");
  v.info(std::to_string(compared) + " scores compared bit-exactly");

  // Two docs, query term in one of them: idf = ln 2, tf part = 1.
  const auto index = lexical::build_index(docs_from({{"a", "b"}, {"b", "c"}}));
  const std::vector<std::string> q{"a"};
  const double s = lexical::bm25_score(index, q, "d0");
  v.check(std::abs(s - std::log(2.0)) <= kHandTol, "hand example " + fmt("%.15f", s));
  return v;
}

// ---- 4 ----------------------------------------------------------------------

struct RetrievalRun {
  double bm25_f2 = 0.0, f2 = 0.0, alpha = 0.0, seconds = 0.0;
  std::string checkpoint, report;
};

double test_f2(const rank::SemanticCache& cache, const lexical::InvertedIndex& index,
               const std::vector<corpus::Query>& queries, double alpha) {
  const auto ranked = rank::rank_all(cache, index, queries, lexical::kDefaultTopNPredict, alpha);
  std::vector<eval::RetrievalJudgment> js;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    eval::RetrievalJudgment j{queries[i].id, queries[i].relevant_ids, {}};
    for (const auto& c : ranked[i]) j.retrieved.push_back(c.article_id);
    js.push_back(std::move(j));
  }
  return eval::macro_f2(js, 1).f2;
}

RetrievalRun retrieval_run() {
  const auto t0 = Clock::now();
  const auto data = testing::make_planted_retrieval(1);
  std::vector<std::string> texts;
  for (const auto& q : data.train) texts.push_back(q.text);
  rank::ModelDims dims;
  dims.embedding_dim = dims.n_filters = 16;
  dims.attention_dim = 8;
  dims.init_scale = 0.5;
  auto model = rank::RankerModel::create(rank::ModelKind::kAttentiveCnn,
                                         rank::build_vocabulary(data.articles, texts, 5), dims, 1);
  model.config.lr = 0.1;
  model.config.epochs = 30;
  model.config.k_negatives = 2;
  model.config.seed = 1;
  const auto trained = rank::train_ranker(model, data.articles, data.train);

  const auto index = lexical::build_index(data.articles);
  const rank::SemanticCache cache(model, data.articles);
  const auto grid = rank::grid_search_alpha(cache, index, data.val, 0.01, lexical::kDefaultTopNPredict, 1);

  RetrievalRun r;
  r.bm25_f2 = test_f2(cache, index, data.test, 1.0);
  r.alpha = grid.alpha;
  r.f2 = test_f2(cache, index, data.test, grid.alpha);
  r.checkpoint = rank::checkpoint_bytes(model);
  r.report = json{{"epoch_loss", trained.epoch_loss}, {"alpha", grid.alpha}, {"val_f2", grid.f2},
                  {"curve", grid.curve}, {"test_f2", r.f2}, {"bm25_f2", r.bm25_f2}}
                 .dump();
  r.seconds = seconds_since(t0);
  return r;
}

Verdict retrieval(const RetrievalRun& r) {
  Verdict v;
  v.check(r.bm25_f2 <= kBm25OnlyMax, "BM25-only macro-F2 " + fmt("%.4f", r.bm25_f2));
  v.check(r.f2 >= kEnsembleMin, "ensemble macro-F2 " + fmt("%.4f", r.f2));
  v.check(r.alpha > 0.0 && r.alpha < 1.0, "alpha* " + fmt("%.2f", r.alpha));
  v.check(r.seconds < kRetrievalBudgetSec, fmt("%.1f s", r.seconds));
  return v;
}

// ---- 5 ----------------------------------------------------------------------

const std::vector<std::string> kEnglish{
    "The donor does not deliver the thing",  // one sentence per rule, in table order
    "The seller shall deliver the thing",
    "The lessee should repair the house",
    "An unborn child may acquire rights",
    "The buyer must pay the price",
    "This contract is void",
    "Both parties are liable",
    "The obligation will be extinguished",
    "The heir can renounce the inheritance",
    "The minor cannot revoke the gift",
    "The gift was made with consent",
    "The sale was made without consent",
    "A guarantor pays the debt",
    "An heir succeeds to the estate",
    "Possession passes by delivery",
    "Ownership of land extends above and below",
};

const std::vector<std::string> kJapanese{
    "売主は責任を負いません",
    "債権者は契約を解除できる",
    "相続人は放棄できない",
    "当事者は契約した",
    "その遺言は有効でない",
    "買主は所有権を取得できた",
    "債権者は債務者に履行させる",
    "占有者は物を占有している",
    "贈与者に責任がない",
    "これは贈与ではない",
    "契約を取り消すことがある",
    "債務者は履行しなければならない",
    "代金を支払わなければならない",
    "物の所有者",
};

// Whole-word presence for the ASCII fixture sentences, substring for Japanese.
bool has_trigger(const std::string& text, augment::Language lang) {
  for (const auto& r : augment::default_rules(lang)) {
    if (lang == augment::Language::kJapanese) {
      if (text.find(r.trigger) != std::string::npos) return true;
    } else if ((" " + text + " ").find(" " + r.trigger + " ") != std::string::npos) {
      return true;
    }
  }
  return false;
}

Verdict augmentation() {
  using augment::Language;
  Verdict v;
  std::vector<std::string> pool = kEnglish;
  pool.insert(pool.end(), kJapanese.begin(), kJapanese.end());  // 30 sentences

  // 22 statements over 10 articles, 8 labeled queries, 2 unlabeled queries.
  corpus::Corpus articles;
  for (std::size_t a = 0; a < 10; ++a) articles.push_back({"art" + std::to_string(a), "", "", {}});
  for (std::size_t i = 0; i < 22; ++i) articles[i % 10].statements.push_back(pool[i]);
  std::vector<corpus::Query> queries;
  for (std::size_t i = 22; i < 30; ++i) {
    queries.push_back({"q" + std::to_string(i), pool[i], {}, i % 2 == 0});
  }
  queries.push_back({"u1", "The party shall pay", {}, std::nullopt});
  queries.push_back({"u2", "売主は責任を負いません", {}, std::nullopt});

  const auto base = augment::derive_lawfulness(articles, queries);
  const std::size_t expected_base = 22 + 8;
  v.check(base.size() == expected_base, "lawfulness records " + std::to_string(base.size()) + " = 22 + 8");

  bool counts_ok = true, flips_ok = true, coverage_ok = true;
  for (auto lang : {Language::kEnglish, Language::kJapanese}) {
    std::size_t fire = 0;
    for (const auto& s : base) fire += has_trigger(s.text, lang);
    const auto out = augment::augment_negation(base, lang);
    counts_ok &= out.size() == base.size() + fire;

    std::set<int> ranks;
    std::size_t src = 0;
    for (std::size_t i = base.size(); i < out.size(); ++i) {
      while (src < base.size() && !has_trigger(base[src].text, lang)) ++src;
      if (src == base.size() || !out[i].rule_rank) {
        flips_ok = false;
        break;
      }
      flips_ok &= out[i].lawful != base[src].lawful && out[i].provenance == augment::Provenance::kNegated;
      ranks.insert(*out[i].rule_rank);
      ++src;
    }
    for (const auto& r : augment::default_rules(lang)) coverage_ok &= ranks.count(r.rank) == 1;
    v.info(std::string(augment::language_code(lang)) + ": " + std::to_string(out.size()) + " = " +
           std::to_string(base.size()) + " + " + std::to_string(fire) + ", " + std::to_string(ranks.size()) + "/" +
           std::to_string(augment::default_rules(lang).size()) + " rules fired");
  }
  v.check(counts_ok, "closed-form record counts");
  v.check(flips_ok, "negated records flip the label");
  v.check(coverage_ok, "every rule of both tables fires");

  bool invol = true;
  for (const auto& s : {kEnglish[8], kEnglish[9], kEnglish[10], kEnglish[11]}) {
    const auto once = augment::negate(s, Language::kEnglish);
    const auto twice = once ? augment::negate(once->text, Language::kEnglish) : std::nullopt;
    invol &= once && once->text != s && twice && twice->text == s;
  }
  v.check(invol, "can/cannot and with/without involutions");
  return v;
}

// ---- 6 ----------------------------------------------------------------------

struct HydraRun {
  double final_loss = 0.0, attach_dev = -1.0;
  std::size_t steps = 0;
  bool body_frozen = false;
  std::string checkpoint, report;
};

double attach_deviation(const testing::HydraFixture& f, const enc::TransformerEncoder& model) {
  double dev = 0.0;
  for (const auto& t : f.targets) {
    tc::Tape a, b;
    tc::ParamBinder ba(a, false), bb(b, false);
    const auto x = enc::transformer_forward(ba, t.tokens, f.body).hidden.back().value();
    const auto y = enc::transformer_forward(bb, t.tokens, model).hidden.back().value();
    dev = std::max(dev, tc::max_abs_diff(x, y));
  }
  return dev;
}

HydraRun hydra_run() {
  auto f = testing::make_hydra_fixture(1);
  HydraRun r;
  r.attach_dev = attach_deviation(f, inject::hydra_attach(f.body, f.heads));
  const std::string before = rank::checkpoint_bytes(f.body);
  inject::HydraConfig cfg;
  cfg.steps = kHydraSteps;
  const auto trace = inject::hydra_pretrain(f.body, f.targets, f.heads, cfg);
  r.final_loss = trace.final_loss;
  r.steps = trace.loss.size();
  r.body_frozen = rank::checkpoint_bytes(f.body) == before;
  const auto model = inject::hydra_attach(f.body, f.heads);
  r.attach_dev = std::max(r.attach_dev, attach_deviation(f, model));
  r.checkpoint = rank::checkpoint_bytes(model);
  r.report = json{{"loss", trace.loss}, {"final_loss", trace.final_loss}}.dump();
  return r;
}

Verdict hydra(const HydraRun& r) {
  Verdict v;
  v.check(r.final_loss <= kHydraMse && r.steps <= kHydraSteps,
          "MSE " + fmt("%.2e", r.final_loss) + " after " + std::to_string(r.steps) + " steps");
  v.check(r.body_frozen, "body byte-identical");
  v.check(r.attach_dev == 0.0, "attach deviation " + fmt("%g", r.attach_dev));
  return v;
}

// ---- 7 ----------------------------------------------------------------------

struct TreRun {
  inject::TreEval late, early;
  std::string checkpoint, report;
};

TreRun tre_run() {
  const auto f = testing::make_tre_fixture(7);
  auto train = [&](const inject::InjectionConfig& cfg, std::string& bytes) {
    Rng rng(3);
    auto model = enc::TransformerEncoder::random(f.vocab, 16, 4, 2, 16, rng, 0.3);
    const auto r = inject::tre_train(model, cfg, f.train, f.val, inject::TreTrainConfig{3, 0.02, 5});
    bytes += rank::checkpoint_bytes(model);
    return r.val_eval;
  };
  TreRun r;
  const double third = 1.0 / 3.0;
  r.late = train({{2, 3, 4}, {third, third, third}}, r.checkpoint);
  r.early = train({{1, 2, 3}, {third, third, third}}, r.checkpoint);
  r.report = json{{"late", inject::to_json(r.late)},
                  {"early", inject::to_json(r.early)},
                  {"late_ge_early", r.late.overall.f1 >= r.early.overall.f1}}
                 .dump();
  return r;
}

Verdict tre(const TreRun& r) {
  Verdict v;
  v.check(r.late.token_accuracy >= kTreAccuracy, "{2,3,4} token accuracy " + fmt("%.4f", r.late.token_accuracy));
  v.info("val F1 late " + fmt("%.4f", r.late.overall.f1) + " vs early {1,2,3} " + fmt("%.4f", r.early.overall.f1));
  v.info(std::string("late >= early: ") + (r.late.overall.f1 >= r.early.overall.f1 ? "yes" : "no") + " (informational)");
  return v;
}

// ---- 8 ----------------------------------------------------------------------

Verdict metrics() {
  Verdict v;
  const enc::EmbeddingTable t({"law", "up", "same", "lien"},
                              tc::Tensor::from_rows({{1, 0}, {0, 1}, {3, 0}, {2, 0}}));
  const double lvc0 = embed::lvc(t, {"estoppel", "bailment"});
  const double lvc_half = embed::lvc(t, {"law", "lien", "estoppel", "bailment"});
  const double lvc1 = embed::lvc(t, {"law", "lien"});
  const double leca0 = embed::leca(t, {"law"}, {{"same", "lien"}}).value;
  const double leca_half = embed::leca(t, {"law"}, {{"up", "oov"}, {"law"}}).value;
  const double leca1 = embed::leca(t, {"law"}, {{"up"}}).value;
  v.check(lvc0 == 0.0 && lvc_half == 0.5 && lvc1 == 1.0,
          "lvc " + fmt("%g", lvc0) + " " + fmt("%g", lvc_half) + " " + fmt("%g", lvc1));
  v.check(leca0 == 0.0 && leca_half == 0.5 && leca1 == 1.0,
          "leca " + fmt("%g", leca0) + " " + fmt("%g", leca_half) + " " + fmt("%g", leca1));

  const std::vector<eval::RetrievalJudgment> js{{"q", {"a", "b"}, {"a"}}};
  const double f2 = eval::macro_f2(js, 1).f2;
  v.check(std::abs(f2 - kF2Hand) <= kF2HandTol, "macro F2 " + eval::format_metric(f2));

  std::vector<bool> preds(81, true), golds(81, true);
  for (std::size_t i = 43; i < 81; ++i) golds[i] = false;
  const std::string acc = eval::format_metric(eval::accuracy(preds, golds));
  v.check(acc == "0.5309", "accuracy 43/81 prints " + acc);
  return v;
}

// ---- 9 ----------------------------------------------------------------------

augment::BilingualDoc make_doc(std::size_t n) {
  augment::BilingualDoc doc;
  for (std::size_t i = 0; i < n; ++i) doc.pairs.emplace_back("a" + std::to_string(i), "b" + std::to_string(i));
  return doc;
}

// (index, side b) recovered from the sentence text alone.
std::pair<long, bool> parse_sentence(const std::string& s) { return {std::stol(s.substr(1)), s[0] == 'b'}; }

Verdict pair_labels() {
  using augment::PairLabel;
  using augment::PairTask;
  Verdict v;
  std::size_t docs = 0, examples = 0, bad_label = 0, bad_positive_set = 0, bad_negative_set = 0;
  double worst_balance = 0.0;
  for (std::size_t n = 2; n <= 10; ++n) {
    for (double ratio : {0.0, 0.5, 1.0, 2.0}) {
      if (n < 3 && ratio > 0.0) continue;  // no pair is two or more apart
      for (auto task : {PairTask::kNfsp, PairTask::kNmsp}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
          const auto ex = task == PairTask::kNfsp ? augment::gen_nfsp(make_doc(n), seed, ratio)
                                                  : augment::gen_nmsp(make_doc(n), seed, ratio);
          ++docs;
          std::set<std::string> positives, negatives;
          std::size_t neg = 0;
          for (const auto& e : ex) {
            ++examples;
            const auto [i, ib] = parse_sentence(e.first);
            const auto [j, jb] = parse_sentence(e.second);
            // The label every (i, j) must get, from the indices alone.
            PairLabel want;
            if (std::abs(j - i) >= 2) want = task == PairTask::kNfsp ? PairLabel::kNotConsecutive : PairLabel::kNone;
            else if (j - i == 1) want = task == PairTask::kNfsp ? PairLabel::kConsecutive : PairLabel::kNext;
            else if (j - i == -1 && task == PairTask::kNmsp) want = PairLabel::kPrev;
            else {
              ++bad_label;
              continue;
            }
            if (task == PairTask::kNfsp && ib == jb) ++bad_label;
            if (e.label != want) ++bad_label;
            if (want == PairLabel::kNotConsecutive || want == PairLabel::kNone) {
              ++neg;
              negatives.insert(e.first + "|" + e.second);
            } else {
              positives.insert(e.first + "|" + e.second);
            }
          }
          // Exhaustive positive set.
          std::set<std::string> expect;
          for (std::size_t i = 0; i + 1 < n; ++i) {
            const std::string si = std::to_string(i), sj = std::to_string(i + 1);
            if (task == PairTask::kNfsp) {
              expect.insert("a" + si + "|b" + sj);
              expect.insert("b" + si + "|a" + sj);
            } else {
              for (const char* x : {"a", "b"}) {
                for (const char* y : {"a", "b"}) {
                  expect.insert(x + si + "|" + y + sj);
                  expect.insert(x + sj + "|" + y + si);
                }
              }
            }
          }
          bad_positive_set += positives != expect;
          // Negatives repeat only once every candidate has been drawn.
          std::size_t pool = 0;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) pool += (i > j ? i - j : j - i) >= 2;
          }
          pool *= task == PairTask::kNfsp ? 2 : 4;
          bad_negative_set += negatives.size() != std::min(neg, pool);
          worst_balance = std::max(worst_balance,
                                   std::abs(static_cast<double>(neg) - ratio * static_cast<double>(positives.size())));
        }
      }
    }
  }
  v.info(std::to_string(docs) + " docs, " + std::to_string(examples) + " examples scanned");
  v.check(bad_label == 0, "label mismatches " + std::to_string(bad_label));
  v.check(bad_positive_set == 0, "incomplete positive sets " + std::to_string(bad_positive_set));
  v.check(bad_negative_set == 0, "negatives repeated before the pool ran out " + std::to_string(bad_negative_set));
  v.check(worst_balance <= 1.0, "worst |negatives - ratio x positives| " + fmt("%g", worst_balance));
  return v;
}

// ---- 10 ---------------------------------------------------------------------

Verdict determinism(const RetrievalRun& r4, const HydraRun& r6, const TreRun& r7) {
  Verdict v;
  const auto r4b = retrieval_run();
  v.check(r4b.checkpoint == r4.checkpoint && r4b.report == r4.report, "retrieval checkpoint and report");
  const auto r6b = hydra_run();
  v.check(r6b.checkpoint == r6.checkpoint && r6b.report == r6.report, "HYDRA checkpoint and trace");
  const auto r7b = tre_run();
  v.check(r7b.checkpoint == r7.checkpoint && r7b.report == r7.report, "TRE checkpoints and report");
  return v;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  int failed = 0;
  auto report = [&](int id, const std::function<Verdict()>& fn) {
    const auto t = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    failed += !v.pass;
    std::ostringstream line;
    line << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " [" << fmt("%.1f s", seconds_since(t)) << "]";
    for (std::size_t i = 0; i < v.notes.size(); ++i) line << (i ? "; " : " ") << v.notes[i];
    std::cout << line.str() << std::endl;
  };

  RetrievalRun r4;
  HydraRun r6;
  TreRun r7;
  report(1, gradients);
  report(2, sparsemax);
  report(3, bm25);
  report(4, [&] {
    r4 = retrieval_run();
    return retrieval(r4);
  });
  report(5, augmentation);
  report(6, [&] {
    r6 = hydra_run();
    return hydra(r6);
  });
  report(7, [&] {
    r7 = tre_run();
    return tre(r7);
  });
  report(8, metrics);
  report(9, pair_labels);
  report(10, [&] { return determinism(r4, r6, r7); });
  std::cout << "total " << fmt("%.1f s", seconds_since(t0)) << ", " << failed << " failed" << std::endl;
  return failed == 0 ? 0 : 1;
}
