#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "slab/tensorcore/tensor.hpp"

namespace slab {
class Rng;
}

namespace slab::enc {

enum class OovPolicy { kZeroVector, kSkip };

// word -> row of a |V|×d matrix. Rows are dense in [0, |V|).
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> words, tc::Tensor matrix, OovPolicy policy = OovPolicy::kZeroVector);

  static EmbeddingTable random(std::vector<std::string> words, std::size_t dim, Rng& rng, double scale,
                               OovPolicy policy = OovPolicy::kZeroVector);

  std::size_t size() const { return words_.size(); }
  std::size_t dim() const { return matrix_.cols(); }
  OovPolicy oov_policy() const { return policy_; }
  void set_oov_policy(OovPolicy p) { policy_ = p; }

  const std::vector<std::string>& words() const { return words_; }
  const tc::Tensor& matrix() const { return matrix_; }
  tc::Tensor& matrix() { return matrix_; }

  std::optional<std::size_t> index(const std::string& word) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  std::span<const double> vector(std::size_t row) const { return matrix_.row(row); }

  // Row ids for the tokens under the OOV policy: kZeroVector maps unknown
  // tokens to tc::kZeroRow, kSkip drops them.
  std::vector<std::size_t> lookup(std::span<const std::string> tokens) const;

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.words_ == b.words_ && a.matrix_ == b.matrix_ && a.policy_ == b.policy_;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  tc::Tensor matrix_;
  OovPolicy policy_ = OovPolicy::kZeroVector;
};

// GloVe-style text: "word v1 v2 ... vd" per line. A leading "count dim"
// header line (word2vec text format) is accepted and skipped. Every row must
// have the same dimension.
EmbeddingTable load_embeddings(const std::filesystem::path& path, OovPolicy policy = OovPolicy::kSkip);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

// Distinct tokens in first-seen order.
std::vector<std::string> build_vocabulary(const std::vector<std::vector<std::string>>& token_lists);

}  // namespace slab::enc
