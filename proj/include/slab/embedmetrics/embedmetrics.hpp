#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slab/encoders/embedding.hpp"

namespace slab::embed {

using Terms = std::set<std::string>;
using Sentences = std::vector<std::vector<std::string>>;

// |V ∩ L| / |L|
double lvc(const enc::EmbeddingTable& table, const Terms& legal_terms);

// Mean vector of the covered terms.
std::vector<double> centroid(const enc::EmbeddingTable& table, const Terms& terms);

// 1 - cos(a, b); throws ValidationError on a zero-norm argument.
double cosine_distance(std::span<const double> a, std::span<const double> b);

struct LecaResult {
  double value = 0.0;
  std::size_t sentences_used = 0;
  std::size_t skipped_sentences = 0;  // no in-vocabulary token
  std::size_t skipped_tokens = 0;     // out-of-vocabulary tokens
};

// Mean over sentences of the mean cosine distance between each
// in-vocabulary token and the legal-term centroid. OOV tokens are skipped
// and a sentence's length counts only in-vocabulary tokens.
LecaResult leca(const enc::EmbeddingTable& table, const Terms& legal_terms, const Sentences& sentences);

struct MetricReport {
  double lvc = 0.0;
  double leca = 0.0;
  std::size_t covered_terms = 0;
  std::size_t total_terms = 0;
  std::size_t sentences_used = 0;
  std::size_t skipped_sentences = 0;
  std::size_t skipped_tokens = 0;
};

MetricReport evaluate(const enc::EmbeddingTable& table, const Terms& legal_terms, const Sentences& sentences);
nlohmann::json to_json(const MetricReport& r);

// One term per line; blank lines ignored, surrounding whitespace trimmed.
Terms load_terms(const std::filesystem::path& path);

// word, label, v1..vd for the first min(top_k, |V|) rows of the table
// (embedding files list words by descending frequency). Words missing from
// `labels` are "nonlegal".
std::string projection_tsv(const enc::EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                           std::size_t top_k);
void export_projection(const std::filesystem::path& path, const enc::EmbeddingTable& table,
                       const std::map<std::string, std::string>& labels, std::size_t top_k);

}  // namespace slab::embed
