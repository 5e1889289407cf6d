#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slab/encoders/embedding.hpp"
#include "slab/tensorcore/ops.hpp"
#include "slab/tensorcore/params.hpp"

namespace slab {
class Rng;
}

namespace slab::enc {

using tc::ParamBinder;
using tc::Tensor;
using tc::Var;

enum class WeightFn { kSoftmax, kSparsemax };

// Additive attention a_i = qᵀ tanh(A r_i + b) followed by a weight function.
struct GeneralAttentionParams {
  Tensor A;  // [d_q × d_r]
  Tensor b;  // [d_q]
  WeightFn weight_fn = WeightFn::kSparsemax;

  static GeneralAttentionParams random(std::size_t d_q, std::size_t d_r, Rng& rng, double scale, WeightFn fn);
};

struct SelfAttentionLayer {
  Tensor wq, wk, wv, wo;  // each [d × d]
  std::size_t n_heads = 1;

  std::size_t d() const { return wq.rows(); }
  std::size_t head_dim() const { return d() / n_heads; }
  static SelfAttentionLayer random(std::size_t d, std::size_t n_heads, Rng& rng, double scale);
  void validate() const;
};

// Attention of q over (keys, values) with weights softmax(score(q, k_i)).
using ScoreFn = std::function<Var(Var q, Var k)>;
Var attend(Var q, std::span<const Var> keys, std::span<const Var> values, const ScoreFn& score);
Var dot_score(Var q, Var k);

struct SelfAttentionOutput {
  Var output;                        // [M × d], residual included
  std::vector<Var> head_weights;     // per head, [M × M] row-stochastic
};

// Per head: softmax(Q Kᵀ / sqrt(d_head)) V; heads concatenated, projected by
// W_o, then added to the input.
SelfAttentionOutput self_attention(ParamBinder& bind, Var x, const SelfAttentionLayer& layer);
Tensor self_attention(const Tensor& x, const SelfAttentionLayer& layer);

// Embedding + learned positions + stacked self-attention layers.
struct TransformerEncoder {
  EmbeddingTable embeddings;
  Tensor positions;  // [max_len × d]
  bool use_positions = true;
  std::vector<SelfAttentionLayer> layers;

  std::size_t d() const { return embeddings.dim(); }
  std::size_t max_len() const { return positions.rows(); }
  static TransformerEncoder random(std::vector<std::string> vocab, std::size_t d, std::size_t n_layers,
                                   std::size_t n_heads, std::size_t max_len, Rng& rng, double scale);
};

struct LayerStates {
  std::vector<Var> hidden;                         // hidden[0] = input, hidden[l] = after layer l
  std::vector<std::vector<Var>> attention;         // [layer][head]
};

// Tokens beyond max_len are dropped. Throws ValidationError when no token
// survives the OOV policy.
LayerStates transformer_forward(ParamBinder& bind, std::span<const std::string> tokens,
                                const TransformerEncoder& enc);

// Average pooling over the last layer's rows.
Var encode_sentence_avg(ParamBinder& bind, std::span<const std::string> tokens, const TransformerEncoder& enc);
Tensor encode_sentence_avg(std::span<const std::string> tokens, const TransformerEncoder& enc);

enum class CnnQueryMode { kLearned, kFromQuery };

struct SentenceEncoderCNN {
  EmbeddingTable embeddings;
  Tensor filters;  // [w × d × F]
  GeneralAttentionParams attn;  // A [d_a × F], b [d_a]
  Tensor query;    // u [d_a]
  double dropout = 0.0;
  CnnQueryMode query_mode = CnnQueryMode::kLearned;

  std::size_t output_dim() const { return filters.dim(2); }
  static SentenceEncoderCNN random(std::vector<std::string> vocab, std::size_t emb_dim, std::size_t n_filters,
                                   std::size_t width, std::size_t attn_dim, Rng& rng, double scale);
  void validate() const;
};

// embed -> conv1d -> dropout -> tanh -> softmax attention with query u using
// scores uᵀ tanh(A h_i + b). With kFromQuery the caller supplies the query
// vector instead of u. `rng` enables dropout; pass nullptr at inference.
Var encode_sentence_cnn(ParamBinder& bind, std::span<const std::string> tokens, const SentenceEncoderCNN& enc,
                        Rng* rng = nullptr, std::optional<Var> external_query = std::nullopt);
Tensor encode_sentence_cnn(std::span<const std::string> tokens, const SentenceEncoderCNN& enc);

struct ParagraphEncoding {
  Var representation;  // r_a
  Var weights;         // alpha over sentences
};

// a_i = qᵀ tanh(A r_i + b); alpha = weight_fn(a); r_a = sum alpha_i r_i.
ParagraphEncoding encode_paragraph(ParamBinder& bind, Var q, std::span<const Var> sentence_reps,
                                   const GeneralAttentionParams& params);

struct ParagraphResult {
  Tensor representation;
  std::vector<double> weights;
};
ParagraphResult encode_paragraph(const Tensor& q, const std::vector<Tensor>& sentence_reps,
                                 const GeneralAttentionParams& params);

struct EncoderPreset {
  std::size_t embedding_dim;
  std::size_t n_filters;
  std::size_t attention_dim;
  double dropout;
};

// "paper": 512 / 512 / 200 / 0.2; "desk": 64 / 64 / 32 / 0.0.
EncoderPreset preset(std::string_view name);

}  // namespace slab::enc
