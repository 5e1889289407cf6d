#include "slab/embedmetrics/embedmetrics.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"

namespace slab::embed {

double lvc(const enc::EmbeddingTable& table, const Terms& legal_terms) {
  if (legal_terms.empty()) throw ValidationError("legal term list is empty");
  std::size_t covered = 0;
  for (const auto& t : legal_terms) covered += table.contains(t) ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(legal_terms.size());
}

std::vector<double> centroid(const enc::EmbeddingTable& table, const Terms& terms) {
  std::vector<double> sum(table.dim(), 0.0);
  std::size_t n = 0;
  for (const auto& t : terms) {
    const auto row = table.index(t);
    if (!row) continue;
    const auto v = table.vector(*row);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += v[j];
    ++n;
  }
  if (n == 0) throw ValidationError("no legal term is in the embedding vocabulary; centroid undefined");
  for (double& x : sum) x /= static_cast<double>(n);
  return sum;
}

namespace {

double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("cosine distance of vectors with different sizes");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine distance of a zero vector");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return 1.0 - dot / (na * nb);
}

LecaResult leca(const enc::EmbeddingTable& table, const Terms& legal_terms, const Sentences& sentences) {
  const auto o = centroid(table, legal_terms);
  if (norm(o) == 0.0) throw ValidationError("legal-term centroid is the zero vector");
  LecaResult r;
  double total = 0.0;
  for (const auto& s : sentences) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& tok : s) {
      const auto row = table.index(tok);
      if (!row) {
        ++r.skipped_tokens;
        continue;
      }
      const auto v = table.vector(*row);
      if (norm(v) == 0.0) throw ValidationError("embedding of \"" + tok + "\" is the zero vector");
      sum += cosine_distance(v, o);
      ++n;
    }
    if (n == 0) {
      ++r.skipped_sentences;
      continue;
    }
    total += sum / static_cast<double>(n);
    ++r.sentences_used;
  }
  if (r.sentences_used == 0) throw ValidationError("no sentence has an in-vocabulary token");
  r.value = total / static_cast<double>(r.sentences_used);
  return r;
}

MetricReport evaluate(const enc::EmbeddingTable& table, const Terms& legal_terms, const Sentences& sentences) {
  MetricReport m;
  m.lvc = lvc(table, legal_terms);
  m.total_terms = legal_terms.size();
  for (const auto& t : legal_terms) m.covered_terms += table.contains(t) ? 1 : 0;
  const auto l = leca(table, legal_terms, sentences);
  m.leca = l.value;
  m.sentences_used = l.sentences_used;
  m.skipped_sentences = l.skipped_sentences;
  m.skipped_tokens = l.skipped_tokens;
  return m;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"lvc", r.lvc},
          {"leca", r.leca},
          {"covered_terms", r.covered_terms},
          {"total_terms", r.total_terms},
          {"sentences_used", r.sentences_used},
          {"skipped_sentences", r.skipped_sentences},
          {"skipped_tokens", r.skipped_tokens},
          {"sentence_length", "in-vocabulary tokens"}};
}

Terms load_terms(const std::filesystem::path& path) {
  Terms out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

std::string projection_tsv(const enc::EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                           std::size_t top_k) {
  for (const auto& [word, label] : labels) {
    if (label != "legal" && label != "nonlegal") {
      throw ValidationError("label of \"" + word + "\" must be legal or nonlegal, got \"" + label + "\"");
    }
  }
  std::string out;
  char buf[32];
  const std::size_t rows = std::min(top_k, table.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& w = table.words()[r];
    const auto it = labels.find(w);
    out += w;
    out += '\t';
    out += it == labels.end() ? "nonlegal" : it->second;
    for (double v : table.vector(r)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out += '\t';
      out.append(buf, res.ptr);
    }
    out += '\n';
  }
  return out;
}

void export_projection(const std::filesystem::path& path, const enc::EmbeddingTable& table,
                       const std::map<std::string, std::string>& labels, std::size_t top_k) {
  write_text_file(path, projection_tsv(table, labels, top_k));
}

}  // namespace slab::embed
