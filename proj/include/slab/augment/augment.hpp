#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "slab/corpus/corpus.hpp"

namespace slab::augment {

enum class Language { kEnglish, kJapanese };

Language parse_language(std::string_view code);  // "en" | "ja"
std::string_view language_code(Language lang);

struct NegationRule {
  Language language = Language::kEnglish;
  std::string trigger;
  std::string replacement;  // empty means "remove the trigger"
  int rank = 0;             // table order, 1-based
};

// The two shipped rule tables, in table order.
const std::vector<NegationRule>& default_rules(Language lang);

// TSV: language, trigger, replacement, rank. Lines starting with '#' are skipped.
std::vector<NegationRule> load_rules(const std::filesystem::path& path);
std::string rules_to_tsv(const std::vector<NegationRule>& rules);

struct Negation {
  std::string text;
  int rule_rank = 0;
};

// First rule (in rank order) whose trigger occurs fires once. English
// triggers match whole words, case-sensitively, at their first occurrence;
// Japanese triggers match as plain substrings at their last occurrence.
std::optional<Negation> negate(const std::string& text, Language lang);
std::optional<Negation> negate(const std::string& text, const std::vector<NegationRule>& rules);

enum class Provenance { kArticleChunk, kEntailedQuery, kNonEntailedQuery, kNegated };
std::string_view provenance_name(Provenance p);

struct LabeledStatement {
  std::string text;
  bool lawful = true;
  Provenance provenance = Provenance::kArticleChunk;
  std::optional<int> rule_rank;  // set iff provenance == kNegated
};

nlohmann::json to_json(const LabeledStatement& s);
LabeledStatement labeled_statement_from_json(const nlohmann::json& j);
std::vector<LabeledStatement> load_labeled(const std::filesystem::path& path);

// Article statements are lawful; entailed queries are lawful; non-entailed
// queries are unlawful; unlabeled queries are skipped.
std::vector<LabeledStatement> derive_lawfulness(const corpus::Corpus& articles,
                                                const std::vector<corpus::Query>& queries);

// Input order kept; one flipped-label record appended per successful negation.
std::vector<LabeledStatement> augment_negation(const std::vector<LabeledStatement>& dataset, Language lang);
std::vector<LabeledStatement> augment_negation(const std::vector<LabeledStatement>& dataset,
                                               const std::vector<NegationRule>& rules);

struct BilingualDoc {
  std::vector<std::pair<std::string, std::string>> pairs;  // aligned (lang a, lang b)
};

std::vector<BilingualDoc> load_bilingual_docs(const std::filesystem::path& path);

enum class PairTask { kNfsp, kNmsp };
enum class PairLabel { kConsecutive, kNotConsecutive, kNext, kPrev, kNone };

std::string_view task_name(PairTask t);
std::string_view label_name(PairLabel l);

// Where each side of a pair came from; kept so generated labels can be audited.
struct SentenceRef {
  std::size_t index = 0;
  bool side_b = false;
};

struct PairExample {
  std::string first;
  std::string second;
  PairLabel label = PairLabel::kNone;
  PairTask task = PairTask::kNfsp;
  SentenceRef first_ref;
  SentenceRef second_ref;
};

nlohmann::json to_json(const PairExample& e);

inline constexpr double kDefaultNegRatio = 1.0;

// Positives: (a_i, b_{i+1}) and (b_i, a_{i+1}). Negatives: ceil(neg_ratio ·
// positives) seeded cross-lingual pairs whose indices differ by at least 2.
std::vector<PairExample> gen_nfsp(const BilingualDoc& doc, std::uint64_t seed, double neg_ratio = kDefaultNegRatio);

// For every adjacent index and each of the four language combinations:
// (s_i, t_{i+1}) -> NEXT and (s_{i+1}, t_i) -> PREV. NONE negatives as above,
// drawn from all language combinations.
std::vector<PairExample> gen_nmsp(const BilingualDoc& doc, std::uint64_t seed, double neg_ratio = kDefaultNegRatio);

}  // namespace slab::augment
