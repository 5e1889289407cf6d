#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace slab::corpus {

struct Article {
  std::string id;
  std::string title;
  std::string text;
  // Filled by chunk_article; empty right after loading.
  std::vector<std::string> statements;
};

using Corpus = std::vector<Article>;

struct Query {
  std::string id;
  std::string text;
  std::set<std::string> relevant_ids;
  std::optional<bool> entailment_label;  // true = lawful / entailed
};

struct CorpusStats {
  double mean_len = 0.0;  // words
  double std_len = 0.0;   // population standard deviation
  std::size_t count = 0;
};

// One {"id","title","text"} object per line. Statements of an article that
// already carries a "statements" array are kept.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

// {"id","text","relevant_ids":[...],"label":true|false|null}
std::vector<Query> load_queries(const std::filesystem::path& path);
void save_queries(const std::filesystem::path& path, const std::vector<Query>& queries);

// Throws ValidationError naming the first relevant id missing from the corpus.
void check_queries_against(const std::vector<Query>& queries, const Corpus& corpus);

nlohmann::json to_json(const Article& a);
nlohmann::json to_json(const Query& q);

// Splits at top-level enumeration markers "(1)", "(2)", ... found at the
// start of the text or after sentence-ending punctuation or a newline.
// Roman-numeral items stay inside their parent statement; any text before
// the first marker is kept with the first statement.
Article chunk_article(Article article);
Corpus chunk_corpus(Corpus corpus);

// Statements of an article, or its full text when it has not been chunked.
std::vector<std::string> statements_or_text(const Article& article);

std::size_t word_count(std::string_view text);
CorpusStats corpus_stats(std::span<const std::string> texts);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle of [0, n); val/test sizes are the rounded ratios and the
// remainder goes to train.
SplitIndices split_indices(std::size_t n, SplitRatios ratios, std::uint64_t seed);

template <typename T>
struct Split {
  std::vector<T> train, val, test;
};

template <typename T>
Split<T> split_dataset(const std::vector<T>& items, SplitRatios ratios, std::uint64_t seed) {
  const SplitIndices idx = split_indices(items.size(), ratios, seed);
  Split<T> out;
  for (std::size_t i : idx.train) out.train.push_back(items[i]);
  for (std::size_t i : idx.val) out.val.push_back(items[i]);
  for (std::size_t i : idx.test) out.test.push_back(items[i]);
  return out;
}

}  // namespace slab::corpus
