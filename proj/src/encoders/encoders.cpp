#include "slab/encoders/encoders.hpp"

#include <cmath>

#include "slab/common/error.hpp"
#include "slab/common/random.hpp"

namespace slab::enc {

GeneralAttentionParams GeneralAttentionParams::random(std::size_t d_q, std::size_t d_r, Rng& rng, double scale,
                                                      WeightFn fn) {
  return GeneralAttentionParams{Tensor::uniform({d_q, d_r}, rng, scale), Tensor({d_q}), fn};
}

SelfAttentionLayer SelfAttentionLayer::random(std::size_t d, std::size_t n_heads, Rng& rng, double scale) {
  SelfAttentionLayer layer;
  layer.wq = Tensor::uniform({d, d}, rng, scale);
  layer.wk = Tensor::uniform({d, d}, rng, scale);
  layer.wv = Tensor::uniform({d, d}, rng, scale);
  layer.wo = Tensor::uniform({d, d}, rng, scale);
  layer.n_heads = n_heads;
  layer.validate();
  return layer;
}

void SelfAttentionLayer::validate() const {
  const std::size_t dim = wq.rows();
  if (n_heads == 0 || dim % n_heads != 0) {
    throw ValidationError("hidden size " + std::to_string(dim) + " is not divisible by " + std::to_string(n_heads) + " heads");
  }
  for (const Tensor* t : {&wq, &wk, &wv, &wo}) {
    if (t->shape() != tc::Shape{dim, dim}) throw ValidationError("self-attention weights must all be [d×d]");
  }
}

Var dot_score(Var q, Var k) { return tc::dot(q, k); }

Var attend(Var q, std::span<const Var> keys, std::span<const Var> values, const ScoreFn& score) {
  if (keys.size() != values.size()) {
    throw ValidationError("attend: " + std::to_string(keys.size()) + " keys but " + std::to_string(values.size()) + " values");
  }
  if (keys.empty()) throw ValidationError("attend needs at least one key/value pair");
  std::vector<Var> scores;
  scores.reserve(keys.size());
  for (const Var& k : keys) scores.push_back(score(q, k));
  Var alpha = tc::softmax(tc::stack(scores));
  Var v = tc::stack(values);
  const std::size_t n = keys.size();
  if (v.value().rank() == 1) v = tc::reshape(v, {n, 1});
  return tc::reshape(tc::matmul(tc::reshape(alpha, {1, n}), v), {v.value().cols()});
}

SelfAttentionOutput self_attention(ParamBinder& bind, Var x, const SelfAttentionLayer& layer) {
  layer.validate();
  const std::size_t dim = layer.d();
  if (x.value().rank() != 2 || x.value().cols() != dim) {
    throw ValidationError("self_attention input must be [M×" + std::to_string(dim) + "]");
  }
  const std::size_t dh = layer.head_dim();
  Var q = tc::matmul(x, bind(layer.wq));
  Var k = tc::matmul(x, bind(layer.wk));
  Var v = tc::matmul(x, bind(layer.wv));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  SelfAttentionOutput out;
  std::vector<Var> heads;
  for (std::size_t h = 0; h < layer.n_heads; ++h) {
    Var qh = layer.n_heads == 1 ? q : tc::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = layer.n_heads == 1 ? k : tc::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = layer.n_heads == 1 ? v : tc::slice_cols(v, h * dh, (h + 1) * dh);
    Var weights = tc::softmax_rows(tc::scale(tc::matmul(qh, tc::transpose(kh)), inv_sqrt));
    out.head_weights.push_back(weights);
    heads.push_back(tc::matmul(weights, vh));
  }
  Var z = layer.n_heads == 1 ? heads.front() : tc::concat_cols(heads);
  out.output = tc::add(x, tc::matmul(z, bind(layer.wo)));
  return out;
}

Tensor self_attention(const Tensor& x, const SelfAttentionLayer& layer) {
  tc::Tape tape;
  ParamBinder bind(tape, false);
  return self_attention(bind, tape.constant(x), layer).output.value();
}

TransformerEncoder TransformerEncoder::random(std::vector<std::string> vocab, std::size_t d, std::size_t n_layers,
                                              std::size_t n_heads, std::size_t max_len, Rng& rng, double scale) {
  TransformerEncoder enc;
  enc.embeddings = EmbeddingTable::random(std::move(vocab), d, rng, scale);
  enc.positions = Tensor::uniform({max_len, d}, rng, scale);
  for (std::size_t l = 0; l < n_layers; ++l) enc.layers.push_back(SelfAttentionLayer::random(d, n_heads, rng, scale));
  return enc;
}

LayerStates transformer_forward(ParamBinder& bind, std::span<const std::string> tokens, const TransformerEncoder& enc) {
  std::vector<std::size_t> ids = enc.embeddings.lookup(tokens);
  if (ids.empty()) throw ValidationError("no in-vocabulary tokens to encode");
  if (enc.use_positions && ids.size() > enc.max_len()) ids.resize(enc.max_len());
  const std::size_t m = ids.size();
  Var x = tc::gather_rows(bind(enc.embeddings.matrix()), std::move(ids));
  if (enc.use_positions) {
    std::vector<std::size_t> pos(m);
    for (std::size_t i = 0; i < m; ++i) pos[i] = i;
    x = tc::add(x, tc::gather_rows(bind(enc.positions), std::move(pos)));
  }
  LayerStates states;
  states.hidden.push_back(x);
  for (const auto& layer : enc.layers) {
    auto out = self_attention(bind, states.hidden.back(), layer);
    states.hidden.push_back(out.output);
    states.attention.push_back(std::move(out.head_weights));
  }
  return states;
}

Var encode_sentence_avg(ParamBinder& bind, std::span<const std::string> tokens, const TransformerEncoder& enc) {
  return tc::avg_pool(transformer_forward(bind, tokens, enc).hidden.back());
}

Tensor encode_sentence_avg(std::span<const std::string> tokens, const TransformerEncoder& enc) {
  tc::Tape tape;
  ParamBinder bind(tape, false);
  return encode_sentence_avg(bind, tokens, enc).value();
}

SentenceEncoderCNN SentenceEncoderCNN::random(std::vector<std::string> vocab, std::size_t emb_dim, std::size_t n_filters,
                                              std::size_t width, std::size_t attn_dim, Rng& rng, double scale) {
  SentenceEncoderCNN enc;
  enc.embeddings = EmbeddingTable::random(std::move(vocab), emb_dim, rng, scale);
  enc.filters = Tensor::uniform({width, emb_dim, n_filters}, rng, scale);
  enc.attn = GeneralAttentionParams::random(attn_dim, n_filters, rng, scale, WeightFn::kSoftmax);
  enc.query = Tensor::uniform({attn_dim}, rng, scale);
  enc.validate();
  return enc;
}

void SentenceEncoderCNN::validate() const {
  if (filters.rank() != 3) throw ValidationError("CNN filters must be [w×d×F]");
  if (filters.dim(1) != embeddings.dim()) {
    throw ValidationError("filter depth " + std::to_string(filters.dim(1)) + " does not match embedding dim " +
                          std::to_string(embeddings.dim()));
  }
  if (attn.A.rank() != 2 || attn.A.cols() != filters.dim(2) || attn.b.size() != attn.A.rows() ||
      query.size() != attn.A.rows()) {
    throw ValidationError("CNN attention parameters are inconsistent with the filter count");
  }
}

namespace {

// Scores qᵀ tanh(A r_i + b) for the rows of R.
Var additive_scores(ParamBinder& bind, Var rows, Var q, const GeneralAttentionParams& params) {
  const std::size_t n = rows.value().rows();
  Var projected = tc::tanh(tc::add_row(tc::matmul(rows, tc::transpose(bind(params.A))), bind(params.b)));
  return tc::reshape(tc::matmul(projected, tc::reshape(q, {q.value().size(), 1})), {n});
}

Var weighted_rows(Var weights, Var rows) {
  const std::size_t n = rows.value().rows();
  return tc::reshape(tc::matmul(tc::reshape(weights, {1, n}), rows), {rows.value().cols()});
}

}  // namespace

Var encode_sentence_cnn(ParamBinder& bind, std::span<const std::string> tokens, const SentenceEncoderCNN& enc, Rng* rng,
                        std::optional<Var> external_query) {
  std::vector<std::size_t> ids = enc.embeddings.lookup(tokens);
  if (ids.empty()) throw ValidationError("all tokens are out of vocabulary");
  Var x = tc::gather_rows(bind(enc.embeddings.matrix()), std::move(ids));
  Var conv = tc::conv1d(x, bind(enc.filters));
  if (rng && enc.dropout > 0.0) conv = tc::dropout(conv, enc.dropout, *rng);
  Var h = tc::tanh(conv);
  Var u = external_query ? *external_query : bind(enc.query);
  if (u.value().size() != enc.attn.A.rows()) throw ValidationError("attention query has the wrong dimension");
  Var alpha = tc::softmax(additive_scores(bind, h, u, enc.attn));
  return weighted_rows(alpha, h);
}

Tensor encode_sentence_cnn(std::span<const std::string> tokens, const SentenceEncoderCNN& enc) {
  tc::Tape tape;
  ParamBinder bind(tape, false);
  return encode_sentence_cnn(bind, tokens, enc).value();
}

ParagraphEncoding encode_paragraph(ParamBinder& bind, Var q, std::span<const Var> sentence_reps,
                                   const GeneralAttentionParams& params) {
  if (sentence_reps.empty()) throw ValidationError("encode_paragraph needs at least one sentence");
  if (q.value().size() != params.A.rows()) throw ValidationError("paragraph query dimension does not match A");
  Var rows = tc::stack(sentence_reps);
  Var scores = additive_scores(bind, rows, q, params);
  Var alpha = params.weight_fn == WeightFn::kSparsemax ? tc::sparsemax(scores) : tc::softmax(scores);
  return ParagraphEncoding{weighted_rows(alpha, rows), alpha};
}

ParagraphResult encode_paragraph(const Tensor& q, const std::vector<Tensor>& sentence_reps,
                                 const GeneralAttentionParams& params) {
  tc::Tape tape;
  ParamBinder bind(tape, false);
  std::vector<Var> reps;
  for (const auto& r : sentence_reps) reps.push_back(tape.constant(r));
  auto enc = encode_paragraph(bind, tape.constant(q), reps, params);
  const auto w = enc.weights.value().values();
  return ParagraphResult{enc.representation.value(), std::vector<double>(w.begin(), w.end())};
}

EncoderPreset preset(std::string_view name) {
  if (name == "paper") return {512, 512, 200, 0.2};
  if (name == "desk") return {64, 64, 32, 0.0};
  throw ValidationError("unknown preset \"" + std::string(name) + "\" (expected paper or desk)");
}

}  // namespace slab::enc
