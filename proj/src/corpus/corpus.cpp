#include "slab/corpus/corpus.hpp"

#include <cctype>
#include <cmath>
#include <unordered_set>

#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/common/random.hpp"

namespace slab::corpus {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string required_string(const json& obj, const char* key, const std::filesystem::path& path, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ValidationError(path.string() + ":" + std::to_string(line) + ": missing string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

// "(" digits ")" starting at pos; returns one past ')' or npos.
std::size_t match_marker(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '(') return std::string_view::npos;
  std::size_t i = pos + 1;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == pos + 1 || i >= text.size() || text[i] != ')') return std::string_view::npos;
  return i + 1;
}

bool at_segment_start(std::string_view text, std::size_t pos) {
  std::size_t i = pos;
  while (i > 0 && (text[i - 1] == ' ' || text[i - 1] == '\t' || text[i - 1] == '\r')) --i;
  if (i == 0) return true;
  const char c = text[i - 1];
  return c == '\n' || c == '.' || c == ';' || c == ':' || c == '!' || c == '?' || c == '"';
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    Article a;
    a.id = required_string(obj, "id", path, line);
    if (a.id.empty()) throw ValidationError(path.string() + ":" + std::to_string(line) + ": empty article id");
    a.text = required_string(obj, "text", path, line);
    if (auto it = obj.find("title"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) throw ValidationError(path.string() + ":" + std::to_string(line) + ": title must be a string");
      a.title = it->get<std::string>();
    }
    if (auto it = obj.find("statements"); it != obj.end() && it->is_array()) {
      a.statements = it->get<std::vector<std::string>>();
    }
    if (!seen.insert(a.id).second) throw ValidationError("duplicate article id \"" + a.id + "\"");
    corpus.push_back(std::move(a));
  });
  return corpus;
}

json to_json(const Article& a) {
  json j{{"id", a.id}, {"title", a.title}, {"text", a.text}};
  if (!a.statements.empty()) j["statements"] = a.statements;
  return j;
}

json to_json(const Query& q) {
  json j{{"id", q.id}, {"text", q.text}, {"relevant_ids", std::vector<std::string>(q.relevant_ids.begin(), q.relevant_ids.end())}};
  j["label"] = q.entailment_label ? json(*q.entailment_label) : json(nullptr);
  return j;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<json> rows;
  rows.reserve(corpus.size());
  for (const auto& a : corpus) rows.push_back(to_json(a));
  write_jsonl(path, rows);
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
  std::vector<Query> queries;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    Query q;
    q.id = required_string(obj, "id", path, line);
    q.text = required_string(obj, "text", path, line);
    if (auto it = obj.find("relevant_ids"); it != obj.end() && !it->is_null()) {
      for (const auto& r : *it) q.relevant_ids.insert(r.get<std::string>());
    }
    if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) {
      if (!it->is_boolean()) throw ValidationError(path.string() + ":" + std::to_string(line) + ": label must be true, false or null");
      q.entailment_label = it->get<bool>();
    }
    if (!seen.insert(q.id).second) throw ValidationError("duplicate query id \"" + q.id + "\"");
    queries.push_back(std::move(q));
  });
  return queries;
}

void save_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
  std::vector<json> rows;
  for (const auto& q : queries) rows.push_back(to_json(q));
  write_jsonl(path, rows);
}

void check_queries_against(const std::vector<Query>& queries, const Corpus& corpus) {
  std::unordered_set<std::string> ids;
  for (const auto& a : corpus) ids.insert(a.id);
  for (const auto& q : queries) {
    for (const auto& r : q.relevant_ids) {
      if (!ids.count(r)) throw ValidationError("query \"" + q.id + "\" references unknown article \"" + r + "\"");
    }
  }
}

Article chunk_article(Article article) {
  const std::string_view text = article.text;
  std::vector<std::size_t> starts;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    if (text[pos] == '(' && match_marker(text, pos) != std::string_view::npos && at_segment_start(text, pos)) {
      starts.push_back(pos);
    }
  }
  article.statements.clear();
  // The first statement always begins at 0 so leading text is not dropped.
  if (!starts.empty()) starts.front() = 0;
  else starts.push_back(0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : text.size();
    std::string piece = trim(text.substr(starts[i], end - starts[i]));
    if (!piece.empty()) article.statements.push_back(std::move(piece));
  }
  if (article.statements.empty()) article.statements.push_back(article.text);
  return article;
}

Corpus chunk_corpus(Corpus corpus) {
  for (auto& a : corpus) a = chunk_article(std::move(a));
  return corpus;
}

std::vector<std::string> statements_or_text(const Article& article) {
  if (!article.statements.empty()) return article.statements;
  return {article.text};
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

CorpusStats corpus_stats(std::span<const std::string> texts) {
  CorpusStats stats;
  stats.count = texts.size();
  if (texts.empty()) return stats;
  double total = 0.0;
  std::vector<double> lens;
  lens.reserve(texts.size());
  for (const auto& t : texts) {
    lens.push_back(static_cast<double>(word_count(t)));
    total += lens.back();
  }
  stats.mean_len = total / static_cast<double>(lens.size());
  double var = 0.0;
  for (double l : lens) var += (l - stats.mean_len) * (l - stats.mean_len);
  stats.std_len = std::sqrt(var / static_cast<double>(lens.size()));
  return stats;
}

SplitIndices split_indices(std::size_t n, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
  std::size_t n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(n)));
  n_val = std::min(n_val, n);
  n_test = std::min(n_test, n - n_val);
  const std::size_t n_train = n - n_val - n_test;
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

}  // namespace slab::corpus
