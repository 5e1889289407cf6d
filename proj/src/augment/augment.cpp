#include "slab/augment/augment.hpp"

#include <cmath>

#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/common/random.hpp"

namespace slab::augment {

using nlohmann::json;

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kArticleChunk: return "article_chunk";
    case Provenance::kEntailedQuery: return "entailed_query";
    case Provenance::kNonEntailedQuery: return "non_entailed_query";
    case Provenance::kNegated: return "negated";
  }
  return "unknown";
}

json to_json(const LabeledStatement& s) {
  json j{{"text", s.text}, {"lawful", s.lawful}, {"provenance", provenance_name(s.provenance)}};
  if (s.rule_rank) j["rule_rank"] = *s.rule_rank;
  return j;
}

LabeledStatement labeled_statement_from_json(const json& j) {
  LabeledStatement s;
  s.text = j.at("text").get<std::string>();
  s.lawful = j.at("lawful").get<bool>();
  const std::string prov = j.value("provenance", std::string("article_chunk"));
  if (prov == "article_chunk") s.provenance = Provenance::kArticleChunk;
  else if (prov == "entailed_query") s.provenance = Provenance::kEntailedQuery;
  else if (prov == "non_entailed_query") s.provenance = Provenance::kNonEntailedQuery;
  else if (prov == "negated") s.provenance = Provenance::kNegated;
  else throw ValidationError("unknown provenance \"" + prov + "\"");
  if (auto it = j.find("rule_rank"); it != j.end() && !it->is_null()) s.rule_rank = it->get<int>();
  if (s.provenance == Provenance::kNegated && !s.rule_rank) throw ValidationError("negated record without rule_rank");
  return s;
}

std::vector<LabeledStatement> load_labeled(const std::filesystem::path& path) {
  std::vector<LabeledStatement> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(labeled_statement_from_json(j)); });
  return out;
}

std::vector<LabeledStatement> derive_lawfulness(const corpus::Corpus& articles,
                                                const std::vector<corpus::Query>& queries) {
  std::vector<LabeledStatement> out;
  for (const auto& a : articles) {
    for (const auto& s : corpus::statements_or_text(a)) out.push_back({s, true, Provenance::kArticleChunk, std::nullopt});
  }
  for (const auto& q : queries) {
    if (!q.entailment_label) continue;
    out.push_back({q.text, *q.entailment_label,
                   *q.entailment_label ? Provenance::kEntailedQuery : Provenance::kNonEntailedQuery, std::nullopt});
  }
  return out;
}

std::vector<LabeledStatement> augment_negation(const std::vector<LabeledStatement>& dataset,
                                               const std::vector<NegationRule>& rules) {
  std::vector<LabeledStatement> out = dataset;
  for (const auto& s : dataset) {
    if (auto neg = negate(s.text, rules)) {
      out.push_back({std::move(neg->text), !s.lawful, Provenance::kNegated, neg->rule_rank});
    }
  }
  return out;
}

std::vector<LabeledStatement> augment_negation(const std::vector<LabeledStatement>& dataset, Language lang) {
  return augment_negation(dataset, default_rules(lang));
}

std::vector<BilingualDoc> load_bilingual_docs(const std::filesystem::path& path) {
  std::vector<BilingualDoc> docs;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    BilingualDoc doc;
    for (const auto& p : j.at("pairs")) {
      if (!p.is_array() || p.size() != 2) {
        throw ValidationError(path.string() + ":" + std::to_string(line) + ": each pair must be [a, b]");
      }
      auto a = p[0].get<std::string>();
      auto b = p[1].get<std::string>();
      if (a.empty() || b.empty()) throw ValidationError(path.string() + ":" + std::to_string(line) + ": empty sentence in pair");
      doc.pairs.emplace_back(std::move(a), std::move(b));
    }
    docs.push_back(std::move(doc));
  });
  return docs;
}

std::string_view task_name(PairTask t) { return t == PairTask::kNfsp ? "NFSP" : "NMSP"; }

std::string_view label_name(PairLabel l) {
  switch (l) {
    case PairLabel::kConsecutive: return "CONSECUTIVE";
    case PairLabel::kNotConsecutive: return "NOT_CONSECUTIVE";
    case PairLabel::kNext: return "NEXT";
    case PairLabel::kPrev: return "PREV";
    case PairLabel::kNone: return "NONE";
  }
  return "UNKNOWN";
}

json to_json(const PairExample& e) {
  return json{{"task", task_name(e.task)}, {"first", e.first}, {"second", e.second}, {"label", label_name(e.label)}};
}

namespace {

const std::string& side(const BilingualDoc& doc, SentenceRef ref) {
  return ref.side_b ? doc.pairs[ref.index].second : doc.pairs[ref.index].first;
}

PairExample make_pair(const BilingualDoc& doc, PairTask task, PairLabel label, SentenceRef x, SentenceRef y) {
  return PairExample{side(doc, x), side(doc, y), label, task, x, y};
}

void check_doc(const BilingualDoc& doc, double neg_ratio) {
  if (doc.pairs.size() < 2) throw ValidationError("pair generation needs a document with at least 2 aligned pairs");
  if (!(neg_ratio >= 0.0) || !std::isfinite(neg_ratio)) throw ValidationError("neg_ratio must be a non-negative number");
}

// Appends ceil(neg_ratio · positives) negatives drawn from every (x, y) with
// |x.index - y.index| >= 2 and an allowed language combination. Draws are
// without replacement until the pool is exhausted.
void add_negatives(const BilingualDoc& doc, PairTask task, PairLabel label, bool cross_lingual_only,
                   std::size_t positives, double neg_ratio, std::uint64_t seed, std::vector<PairExample>& out) {
  const auto wanted = static_cast<std::size_t>(std::ceil(neg_ratio * static_cast<double>(positives) - 1e-12));
  if (wanted == 0) return;
  std::vector<std::pair<SentenceRef, SentenceRef>> pool;
  const std::size_t n = doc.pairs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if ((i > j ? i - j : j - i) < 2) continue;
      for (int sx = 0; sx < 2; ++sx) {
        for (int sy = 0; sy < 2; ++sy) {
          if (cross_lingual_only && sx == sy) continue;
          pool.push_back({SentenceRef{i, sx == 1}, SentenceRef{j, sy == 1}});
        }
      }
    }
  }
  if (pool.empty()) {
    throw ValidationError("document with " + std::to_string(n) + " pairs has no index gap >= 2 for negatives; use neg_ratio 0");
  }
  Rng rng(seed);
  std::size_t produced = 0;
  while (produced < wanted) {
    const std::size_t take = std::min(wanted - produced, pool.size());
    for (std::size_t k : rng.sample_without_replacement(pool.size(), take)) {
      out.push_back(make_pair(doc, task, label, pool[k].first, pool[k].second));
    }
    produced += take;
  }
}

}  // namespace

std::vector<PairExample> gen_nfsp(const BilingualDoc& doc, std::uint64_t seed, double neg_ratio) {
  check_doc(doc, neg_ratio);
  std::vector<PairExample> out;
  for (std::size_t i = 0; i + 1 < doc.pairs.size(); ++i) {
    out.push_back(make_pair(doc, PairTask::kNfsp, PairLabel::kConsecutive, {i, false}, {i + 1, true}));
    out.push_back(make_pair(doc, PairTask::kNfsp, PairLabel::kConsecutive, {i, true}, {i + 1, false}));
  }
  add_negatives(doc, PairTask::kNfsp, PairLabel::kNotConsecutive, true, out.size(), neg_ratio, seed, out);
  return out;
}

std::vector<PairExample> gen_nmsp(const BilingualDoc& doc, std::uint64_t seed, double neg_ratio) {
  check_doc(doc, neg_ratio);
  std::vector<PairExample> out;
  for (std::size_t i = 0; i + 1 < doc.pairs.size(); ++i) {
    for (int s = 0; s < 2; ++s) {
      for (int t = 0; t < 2; ++t) {
        out.push_back(make_pair(doc, PairTask::kNmsp, PairLabel::kNext, {i, s == 1}, {i + 1, t == 1}));
        out.push_back(make_pair(doc, PairTask::kNmsp, PairLabel::kPrev, {i + 1, s == 1}, {i, t == 1}));
      }
    }
  }
  add_negatives(doc, PairTask::kNmsp, PairLabel::kNone, false, out.size(), neg_ratio, seed, out);
  return out;
}

}  // namespace slab::augment
