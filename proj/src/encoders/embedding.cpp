#include "slab/encoders/embedding.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "slab/common/error.hpp"
#include "slab/common/random.hpp"
#include "slab/tensorcore/ops.hpp"

namespace slab::enc {

EmbeddingTable::EmbeddingTable(std::vector<std::string> words, tc::Tensor matrix, OovPolicy policy)
    : words_(std::move(words)), matrix_(std::move(matrix)), policy_(policy) {
  if (matrix_.rank() != 2) throw ValidationError("embedding matrix must be 2-D");
  if (matrix_.rows() != words_.size()) {
    throw ValidationError("embedding matrix has " + std::to_string(matrix_.rows()) + " rows for " +
                          std::to_string(words_.size()) + " words");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], i).second) throw ValidationError("duplicate embedding word \"" + words_[i] + "\"");
  }
}

EmbeddingTable EmbeddingTable::random(std::vector<std::string> words, std::size_t dim, Rng& rng, double scale,
                                      OovPolicy policy) {
  if (words.empty()) throw ValidationError("embedding vocabulary is empty");
  const std::size_t n = words.size();
  return EmbeddingTable(std::move(words), tc::Tensor::uniform({n, dim}, rng, scale), policy);
}

std::optional<std::size_t> EmbeddingTable::index(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> EmbeddingTable::lookup(std::span<const std::string> tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (auto i = index(t)) ids.push_back(*i);
    else if (policy_ == OovPolicy::kZeroVector) ids.push_back(tc::kZeroRow);
  }
  return ids;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, OovPolicy policy) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embeddings " + path.string());
  std::vector<std::string> words;
  std::vector<double> values;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(' ') == std::string::npos) continue;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    std::vector<double> row;
    std::string field;
    while (ss >> field) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad number \"" + field + "\"");
      }
    }
    if (line_no == 1 && row.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "count dim" header
    }
    if (row.empty()) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": no vector values");
    if (dim == 0) dim = row.size();
    if (row.size() != dim) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": dimension " + std::to_string(row.size()) +
                            " differs from " + std::to_string(dim));
    }
    words.push_back(std::move(word));
    values.insert(values.end(), row.begin(), row.end());
  }
  if (words.empty()) throw ValidationError("embedding file " + path.string() + " is empty");
  const std::size_t n = words.size();
  return EmbeddingTable(std::move(words), tc::Tensor({n, dim}, std::move(values)), policy);
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.words()[i];
    for (double v : table.vector(i)) out << ' ' << v;
    out << '\n';
  }
}

std::vector<std::string> build_vocabulary(const std::vector<std::vector<std::string>>& token_lists) {
  std::vector<std::string> vocab;
  std::unordered_set<std::string> seen;
  for (const auto& list : token_lists) {
    for (const auto& t : list) {
      if (seen.insert(t).second) vocab.push_back(t);
    }
  }
  return vocab;
}

}  // namespace slab::enc
