#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "slab/augment/augment.hpp"
#include "slab/corpus/corpus.hpp"
#include "slab/encoders/encoders.hpp"
#include "slab/lexical/lexical.hpp"

namespace slab::rank {

using tc::Tensor;

enum class ModelKind : std::uint8_t { kAttentiveCnn = 1, kParaformerLite = 2, kLawfulness = 3, kTransformerBody = 4 };
std::string_view kind_name(ModelKind k);
ModelKind parse_kind(std::string_view name);

struct TrainConfig {
  double lr = 0.05;
  std::size_t epochs = 10;
  std::size_t k_negatives = 4;
  std::uint64_t seed = 0;
  // Negatives are drawn first from the non-relevant articles with a positive
  // BM25 score among the top n_train, then uniformly from the rest.
  std::size_t n_train = lexical::kDefaultTopNTrain;
  lexical::Bm25Params bm25;
};

struct ModelDims {
  std::size_t embedding_dim = 64;
  std::size_t n_filters = 64;
  std::size_t width = 3;
  std::size_t attention_dim = 32;
  double dropout = 0.0;
  std::size_t n_layers = 1;  // paraformer_lite
  std::size_t n_heads = 2;
  std::size_t max_len = 64;
  double init_scale = 0.1;
};

ModelDims dims_from_preset(std::string_view name);

struct RankerModel {
  ModelKind kind = ModelKind::kAttentiveCnn;
  enc::SentenceEncoderCNN cnn;              // attentive_cnn
  enc::TransformerEncoder transformer;      // paraformer_lite
  enc::GeneralAttentionParams paragraph;    // A [D×D], b [D]; query = encoded query
  TrainConfig config;

  static RankerModel create(ModelKind kind, std::vector<std::string> vocab, const ModelDims& dims, std::uint64_t seed);
  std::size_t sentence_dim() const;
  const enc::EmbeddingTable& embeddings() const;
  // Trainable tensors in declaration (checkpoint) order.
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;
};

// Tokens (lexical::tokenize) counted over article statements and the given
// texts; kept in first-seen order when they occur at least min_count times.
std::vector<std::string> build_vocabulary(const corpus::Corpus& articles, const std::vector<std::string>& texts,
                                          std::size_t min_count);

tc::Var encode_text(tc::ParamBinder& bind, const RankerModel& model, const std::vector<std::string>& tokens,
                    Rng* dropout_rng = nullptr);
tc::Var score_article(tc::ParamBinder& bind, const RankerModel& model, tc::Var query_vec,
                      const corpus::Article& article, Rng* dropout_rng = nullptr);

// dot(encode(query), encode_paragraph(encode(query), statements))
double semantic_score(const RankerModel& model, const std::string& query_text, const corpus::Article& article);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean ce_negsample per epoch
  std::size_t steps = 0;
};

// Negative-sampling training with plain gradient descent, one (query,
// relevant article) pair per step. Uses model.config.
TrainResult train_ranker(RankerModel& model, const corpus::Corpus& corpus, const std::vector<corpus::Query>& queries);

double ensemble(double s_l, double s_s, double alpha);

struct ScoredCandidate {
  std::string article_id;
  double s_lexical = 0.0;  // min-max normalized within the query's candidates
  double s_semantic = 0.0;
  double s_final = 0.0;
};

// Article sentence representations computed once and reused across queries.
class SemanticCache {
 public:
  SemanticCache(const RankerModel& model, const corpus::Corpus& corpus);
  const RankerModel& model() const { return model_; }
  const corpus::Article& article(const std::string& id) const;
  double score(const Tensor& query_vec, const std::string& article_id) const;
  Tensor encode_query(const std::string& text) const;

 private:
  const RankerModel& model_;
  std::map<std::string, const corpus::Article*> articles_;
  std::map<std::string, std::vector<Tensor>> sentences_;
};

// BM25 top-n candidates with normalized lexical and semantic scores; s_final
// is left at 0 until apply_alpha.
std::vector<ScoredCandidate> score_candidates(const SemanticCache& cache, const lexical::InvertedIndex& index,
                                              const std::string& query_text, std::size_t n_predict,
                                              lexical::Bm25Params bm25 = {});
// Sets s_final and sorts descending, ties by ascending id.
void apply_alpha(std::vector<ScoredCandidate>& candidates, double alpha);

std::vector<ScoredCandidate> rank(const SemanticCache& cache, const lexical::InvertedIndex& index,
                                  const std::string& query_text, std::size_t n_predict, double alpha,
                                  lexical::Bm25Params bm25 = {});

struct GridResult {
  double alpha = 0.0;
  double f2 = 0.0;
  std::vector<std::pair<double, double>> curve;  // (alpha, macro F2)
};

// Macro-F2@k at alpha in {0, step, ..., 1}; ties go to the smallest alpha.
GridResult grid_search_alpha(const SemanticCache& cache, const lexical::InvertedIndex& index,
                             const std::vector<corpus::Query>& val_queries, double step = 0.01,
                             std::size_t n_predict = lexical::kDefaultTopNPredict, std::size_t k = 1,
                             lexical::Bm25Params bm25 = {});

// Ranked ids at a fixed alpha for every query, for evaluation.
std::vector<std::vector<ScoredCandidate>> rank_all(const SemanticCache& cache, const lexical::InvertedIndex& index,
                                                   const std::vector<corpus::Query>& queries, std::size_t n_predict,
                                                   double alpha, lexical::Bm25Params bm25 = {});

nlohmann::json run_record(const std::string& qid, const std::vector<ScoredCandidate>& ranked);

struct LawfulnessClassifier {
  enc::SentenceEncoderCNN encoder;
  Tensor w;  // [F]
  Tensor b;  // [1]
  TrainConfig config;

  static LawfulnessClassifier create(std::vector<std::string> vocab, const ModelDims& dims, std::uint64_t seed);
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();
};

// Binary cross-entropy on sigmoid(w·encode(text) + b); examples visited in a
// seeded shuffled order each epoch.
TrainResult train_lawfulness(LawfulnessClassifier& clf, const std::vector<augment::LabeledStatement>& data);
double lawful_probability(const LawfulnessClassifier& clf, const std::string& text);
bool classify(const LawfulnessClassifier& clf, const std::string& text);

// "SLRK1" | kind byte | tensors (SLTN1) in declaration order | metadata JSON
// (u32-length-prefixed) holding the vocabulary and the scalar settings.
void write_checkpoint(std::ostream& out, const RankerModel& model);
void write_checkpoint(std::ostream& out, const LawfulnessClassifier& clf);
void write_checkpoint(std::ostream& out, const enc::TransformerEncoder& body);
std::string checkpoint_bytes(const RankerModel& model);
std::string checkpoint_bytes(const LawfulnessClassifier& clf);
std::string checkpoint_bytes(const enc::TransformerEncoder& body);
void save_checkpoint(const std::filesystem::path& path, const RankerModel& model);
void save_checkpoint(const std::filesystem::path& path, const LawfulnessClassifier& clf);
void save_checkpoint(const std::filesystem::path& path, const enc::TransformerEncoder& body);
ModelKind checkpoint_kind(const std::filesystem::path& path);
RankerModel load_ranker(const std::filesystem::path& path);
LawfulnessClassifier load_classifier(const std::filesystem::path& path);
enc::TransformerEncoder load_body(const std::filesystem::path& path);

nlohmann::json to_json(const TrainConfig& c);

}  // namespace slab::rank
