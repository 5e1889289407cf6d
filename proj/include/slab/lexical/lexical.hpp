#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slab/corpus/corpus.hpp"

namespace slab::lexical {

// Lowercases ASCII and splits on whitespace and ASCII punctuation. Bytes of
// multi-byte UTF-8 sequences are kept inside tokens.
std::vector<std::string> tokenize(std::string_view text);

struct Posting {
  std::uint32_t doc = 0;  // dense document index
  std::uint32_t tf = 0;
};

class InvertedIndex {
 public:
  InvertedIndex() = default;
  InvertedIndex(std::vector<std::string> doc_ids, std::vector<std::uint32_t> doc_len,
                std::map<std::string, std::vector<Posting>> postings);

  std::size_t n_docs() const { return doc_ids_.size(); }
  double avgdl() const { return avgdl_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_len_; }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }

  // Throws ValidationError for unknown ids.
  std::size_t doc_index(const std::string& doc_id) const;
  bool contains(const std::string& doc_id) const { return index_of_.count(doc_id) != 0; }
  std::size_t df(const std::string& term) const;
  std::uint32_t tf(const std::string& term, std::size_t doc) const;

  friend bool operator==(const InvertedIndex& a, const InvertedIndex& b) {
    return a.doc_ids_ == b.doc_ids_ && a.doc_len_ == b.doc_len_ && a.postings_ == b.postings_;
  }

 private:
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_len_;
  std::map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::size_t> index_of_;
  double avgdl_ = 0.0;
};

inline bool operator==(const Posting& a, const Posting& b) { return a.doc == b.doc && a.tf == b.tf; }

// Indexes the tokenized text of every article. Empty corpus -> ValidationError.
InvertedIndex build_index(const corpus::Corpus& corpus);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
double bm25_idf(std::size_t n_docs, std::size_t df);
double bm25_term(double tf, std::size_t df, std::size_t n_docs, double dl, double avgdl, Bm25Params p);

double bm25_score(const InvertedIndex& index, std::span<const std::string> query_terms, const std::string& doc_id,
                  Bm25Params params = {});

using Ranked = std::vector<std::pair<std::string, double>>;

// Descending score, ties by ascending id; min(n, n_docs) entries.
Ranked top_n(const InvertedIndex& index, std::span<const std::string> query_terms, std::size_t n,
             Bm25Params params = {});

inline constexpr std::size_t kDefaultTopNTrain = 50;
inline constexpr std::size_t kDefaultTopNPredict = 150;

// "SLIX1" | u32 n_docs | (id, u32 len)* | u32 n_terms | (term, u32 n_postings, (u32 doc, u32 tf)*)*
// Strings are u32-length-prefixed UTF-8; integers little-endian.
void save_index(const std::filesystem::path& path, const InvertedIndex& index);
InvertedIndex load_index(const std::filesystem::path& path);

}  // namespace slab::lexical
