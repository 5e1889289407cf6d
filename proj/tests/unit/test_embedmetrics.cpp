#include <cmath>
#include <sstream>

#include "doctest.h"
#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/common/random.hpp"
#include "slab/embedmetrics/embedmetrics.hpp"
#include "temp_dir.hpp"

using namespace slab;
using namespace slab::embed;
using tc::Tensor;

namespace {

enc::EmbeddingTable table(const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::vector<std::string> words;
  std::vector<std::vector<double>> m;
  for (const auto& [w, v] : rows) {
    words.push_back(w);
    m.push_back(v);
  }
  return enc::EmbeddingTable(words, Tensor::from_rows(m));
}

}  // namespace

TEST_CASE("lvc") {
  const auto t = table({{"lien", {1, 0}}, {"tort", {0, 1}}, {"the", {1, 1}}});
  CHECK(lvc(t, {"lien", "tort"}) == 1.0);
  CHECK(lvc(t, {"estoppel", "bailment"}) == 0.0);
  CHECK(lvc(t, {"lien", "tort", "estoppel", "bailment"}) == 0.5);
  CHECK_THROWS_AS(lvc(t, {}), ValidationError);
  // Monotone in the vocabulary.
  const auto bigger = table({{"lien", {1, 0}}, {"tort", {0, 1}}, {"the", {1, 1}}, {"estoppel", {2, 2}}});
  CHECK(lvc(bigger, {"lien", "tort", "estoppel", "bailment"}) >= lvc(t, {"lien", "tort", "estoppel", "bailment"}));
}

TEST_CASE("centroid") {
  const auto t = table({{"a", {1, 2}}, {"b", {-1, -2}}, {"c", {3, 0}}, {"d", {0, 6}}});
  CHECK(centroid(t, {"c", "zz"}) == std::vector<double>{3, 0});
  CHECK(centroid(t, {"a", "b"}) == std::vector<double>{0, 0});
  // (1+3+0)/3, (2+0+6)/3
  const auto m = centroid(t, {"a", "c", "d"});
  CHECK(std::abs(m[0] - 4.0 / 3.0) < 1e-15);
  CHECK(std::abs(m[1] - 8.0 / 3.0) < 1e-15);
  CHECK_THROWS_AS(centroid(t, {"zz"}), ValidationError);
}

TEST_CASE("leca examples") {
  const auto t = table({{"law", {1, 0}}, {"up", {0, 1}}, {"same", {3, 0}}, {"zero", {0, 0}}});
  CHECK(leca(t, {"law"}, {{"same"}, {"law", "same"}}).value == 0.0);
  CHECK(std::abs(leca(t, {"law"}, {{"up"}}).value - 1.0) < 1e-15);
  CHECK(leca(t, {"law"}, {{"law"}}).value == 0.0);
  // OOV tokens skipped; an all-OOV sentence is skipped and counted.
  const auto r = leca(t, {"law"}, {{"up", "oov"}, {"oov", "oov2"}, {"law"}});
  CHECK(std::abs(r.value - 0.5) < 1e-15);
  CHECK(r.sentences_used == 2);
  CHECK(r.skipped_sentences == 1);
  CHECK(r.skipped_tokens == 3);
  CHECK_THROWS_WITH_AS(leca(t, {"law"}, {{"zero"}}), doctest::Contains("\"zero\""), ValidationError);
  CHECK_THROWS_AS(leca(t, {"law"}, {{"oov"}}), ValidationError);
  CHECK_THROWS_AS(leca(t, {"nothing"}, {{"law"}}), ValidationError);

  const auto rep = evaluate(t, {"law", "up", "gone", "missing"}, {{"law"}});
  CHECK(rep.lvc == 0.5);
  CHECK(rep.covered_terms == 2);
  CHECK(rep.lvc == static_cast<double>(rep.covered_terms) / static_cast<double>(rep.total_terms));
}

TEST_CASE("leca properties on random tables") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> words;
    for (int i = 0; i < 12; ++i) words.push_back("w" + std::to_string(i));
    const Tensor m = Tensor::uniform({12, 5}, rng, 1.0);
    const enc::EmbeddingTable t(words, m);
    const Terms terms{"w0", "w3", "w7"};
    // Rescale every non-term vector by its own positive factor.
    Tensor scaled = m;
    for (std::size_t r = 0; r < 12; ++r) {
      if (terms.count(words[r])) continue;
      const double s = 0.1 + 5.0 * rng.uniform();
      for (double& v : scaled.row(r)) v *= s;
    }
    Sentences sents;
    for (std::size_t s = 0; s < 1 + rng.below(20); ++s) {
      std::vector<std::string> toks;
      for (std::size_t k = 0; k < 1 + rng.below(8); ++k) toks.push_back(rng.below(4) ? words[rng.below(12)] : "oov");
      sents.push_back(toks);
    }
    // Brute force: mean of per-sentence values.
    double sum = 0.0;
    int used = 0;
    for (const auto& s : sents) {
      bool any = false;
      for (const auto& tok : s) any |= t.contains(tok);
      if (!any) continue;
      sum += leca(t, terms, {s}).value;
      ++used;
    }
    if (!used) continue;
    const double full = leca(t, terms, sents).value;
    CHECK(std::abs(full - sum / used) < 1e-12);
    CHECK(std::abs(leca(enc::EmbeddingTable(words, scaled), terms, sents).value - full) < 1e-12);
    // Term vectors move the centroid, so they only admit a common factor.
    Tensor uniform = m;
    for (double& v : uniform.values()) v *= 3.5;
    CHECK(std::abs(leca(enc::EmbeddingTable(words, uniform), terms, sents).value - full) < 1e-12);
  }
}

TEST_CASE("projection export") {
  const auto t = table({{"lien", {1, 0.5}}, {"the", {-2, 0.25}}, {"tort", {0, 1}}});
  const std::map<std::string, std::string> labels{{"lien", "legal"}, {"tort", "legal"}};
  const std::string all = projection_tsv(t, labels, 3);
  CHECK(all == "lien\tlegal\t1\t0.5\nthe\tnonlegal\t-2\t0.25\ntort\tlegal\t0\t1\n");
  CHECK(projection_tsv(t, labels, 10) == all);
  CHECK(projection_tsv(t, labels, 1) == "lien\tlegal\t1\t0.5\n");
  CHECK(projection_tsv(t, labels, 0).empty());
  CHECK_THROWS_AS(projection_tsv(t, {{"lien", "law"}}, 2), ValidationError);

  testing::TempDir dir;
  write_text_file(dir / "terms.txt", "lien\n\n  tort \nlien\n");
  CHECK(load_terms(dir / "terms.txt") == Terms{"lien", "tort"});
  export_projection(dir / "p.tsv", t, labels, 2);
  CHECK(read_text_file(dir / "p.tsv") == projection_tsv(t, labels, 2));
}
