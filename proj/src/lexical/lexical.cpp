#include "slab/lexical/lexical.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "slab/common/error.hpp"
#include "slab/tensorcore/tensor.hpp"

namespace slab::lexical {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && (std::isspace(u) || std::ispunct(u))) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

InvertedIndex::InvertedIndex(std::vector<std::string> doc_ids, std::vector<std::uint32_t> doc_len,
                             std::map<std::string, std::vector<Posting>> postings)
    : doc_ids_(std::move(doc_ids)), doc_len_(std::move(doc_len)), postings_(std::move(postings)) {
  if (doc_ids_.size() != doc_len_.size()) throw ValidationError("index: doc id and length tables differ in size");
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (!index_of_.emplace(doc_ids_[i], i).second) throw ValidationError("index: duplicate doc id \"" + doc_ids_[i] + "\"");
  }
  for (const auto& [term, list] : postings_) {
    if (list.size() > doc_ids_.size()) throw ValidationError("index: df exceeds document count for \"" + term + "\"");
    for (const auto& p : list) {
      if (p.doc >= doc_ids_.size() || p.tf == 0) throw ValidationError("index: bad posting for \"" + term + "\"");
    }
  }
  double total = 0.0;
  for (auto l : doc_len_) total += l;
  avgdl_ = doc_ids_.empty() ? 0.0 : total / static_cast<double>(doc_ids_.size());
}

std::size_t InvertedIndex::doc_index(const std::string& doc_id) const {
  auto it = index_of_.find(doc_id);
  if (it == index_of_.end()) throw ValidationError("unknown doc id \"" + doc_id + "\"");
  return it->second;
}

std::size_t InvertedIndex::df(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::uint32_t InvertedIndex::tf(const std::string& term, std::size_t doc) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return 0;
  auto p = std::lower_bound(it->second.begin(), it->second.end(), doc,
                            [](const Posting& x, std::size_t d) { return x.doc < d; });
  return p != it->second.end() && p->doc == doc ? p->tf : 0;
}

InvertedIndex build_index(const corpus::Corpus& corpus) {
  if (corpus.empty()) throw ValidationError("cannot index an empty corpus");
  std::vector<std::string> ids;
  std::vector<std::uint32_t> lens;
  std::map<std::string, std::vector<Posting>> postings;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto tokens = tokenize(corpus[d].text);
    ids.push_back(corpus[d].id);
    lens.push_back(static_cast<std::uint32_t>(tokens.size()));
    std::map<std::string, std::uint32_t> counts;
    for (const auto& t : tokens) ++counts[t];
    for (const auto& [term, tf] : counts) postings[term].push_back({static_cast<std::uint32_t>(d), tf});
  }
  return InvertedIndex(std::move(ids), std::move(lens), std::move(postings));
}

double bm25_idf(std::size_t n_docs, std::size_t df) {
  const double n = static_cast<double>(n_docs);
  const double f = static_cast<double>(df);
  return std::log((n - f + 0.5) / (f + 0.5) + 1.0);
}

double bm25_term(double tf, std::size_t df, std::size_t n_docs, double dl, double avgdl, Bm25Params p) {
  if (tf <= 0.0) return 0.0;
  const double norm = avgdl > 0.0 ? dl / avgdl : 0.0;
  return bm25_idf(n_docs, df) * (tf * (p.k1 + 1.0)) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

double bm25_score(const InvertedIndex& index, std::span<const std::string> query_terms, const std::string& doc_id,
                  Bm25Params params) {
  const std::size_t doc = index.doc_index(doc_id);
  const double dl = index.doc_lengths()[doc];
  double score = 0.0;
  for (const auto& t : query_terms) {
    score += bm25_term(index.tf(t, doc), index.df(t), index.n_docs(), dl, index.avgdl(), params);
  }
  return score;
}

Ranked top_n(const InvertedIndex& index, std::span<const std::string> query_terms, std::size_t n, Bm25Params params) {
  if (n == 0) throw ValidationError("top_n needs n >= 1");
  const std::size_t n_docs = index.n_docs();
  std::vector<double> scores(n_docs, 0.0);
  for (const auto& t : query_terms) {
    auto it = index.postings().find(t);
    if (it == index.postings().end()) continue;
    const std::size_t df = it->second.size();
    for (const auto& p : it->second) {
      scores[p.doc] += bm25_term(p.tf, df, n_docs, index.doc_lengths()[p.doc], index.avgdl(), params);
    }
  }
  std::vector<std::size_t> order(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) order[i] = i;
  const auto& ids = index.doc_ids();
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  const std::size_t k = std::min(n, n_docs);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  Ranked out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.emplace_back(ids[order[i]], scores[order[i]]);
  return out;
}

void save_index(const std::filesystem::path& path, const InvertedIndex& index) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  namespace bin = tc::binary;
  out.write("SLIX1", 5);
  bin::write_u32(out, static_cast<std::uint32_t>(index.n_docs()));
  for (std::size_t d = 0; d < index.n_docs(); ++d) {
    bin::write_string(out, index.doc_ids()[d]);
    bin::write_u32(out, index.doc_lengths()[d]);
  }
  bin::write_u32(out, static_cast<std::uint32_t>(index.postings().size()));
  for (const auto& [term, list] : index.postings()) {
    bin::write_string(out, term);
    bin::write_u32(out, static_cast<std::uint32_t>(list.size()));
    for (const auto& p : list) {
      bin::write_u32(out, p.doc);
      bin::write_u32(out, p.tf);
    }
  }
  if (!out) throw RuntimeError("write failed for " + path.string());
}

InvertedIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  namespace bin = tc::binary;
  bin::expect_magic(in, "SLIX1");
  const std::uint32_t n_docs = bin::read_u32(in);
  std::vector<std::string> ids(n_docs);
  std::vector<std::uint32_t> lens(n_docs);
  for (std::uint32_t d = 0; d < n_docs; ++d) {
    ids[d] = bin::read_string(in);
    lens[d] = bin::read_u32(in);
  }
  const std::uint32_t n_terms = bin::read_u32(in);
  std::map<std::string, std::vector<Posting>> postings;
  for (std::uint32_t t = 0; t < n_terms; ++t) {
    std::string term = bin::read_string(in);
    const std::uint32_t count = bin::read_u32(in);
    std::vector<Posting> list(count);
    for (auto& p : list) {
      p.doc = bin::read_u32(in);
      p.tf = bin::read_u32(in);
    }
    postings.emplace(std::move(term), std::move(list));
  }
  return InvertedIndex(std::move(ids), std::move(lens), std::move(postings));
}

}  // namespace slab::lexical
