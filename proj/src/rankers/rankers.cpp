#include "slab/rankers/rankers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "slab/common/error.hpp"
#include "slab/common/parallel.hpp"
#include "slab/common/random.hpp"
#include "slab/evalkit/evalkit.hpp"

namespace slab::rank {

using nlohmann::json;
using tc::ParamBinder;
using tc::Tape;
using tc::Var;

namespace {

constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

std::vector<std::string> article_statements(const corpus::Article& a) { return corpus::statements_or_text(a); }

}  // namespace

std::string_view kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kAttentiveCnn: return "attentive_cnn";
    case ModelKind::kParaformerLite: return "paraformer_lite";
    case ModelKind::kLawfulness: return "lawfulness";
    case ModelKind::kTransformerBody: return "transformer_body";
  }
  return "?";
}

ModelKind parse_kind(std::string_view name) {
  if (name == "attentive_cnn") return ModelKind::kAttentiveCnn;
  if (name == "paraformer_lite") return ModelKind::kParaformerLite;
  throw ValidationError("unknown model kind \"" + std::string(name) + "\" (expected attentive_cnn or paraformer_lite)");
}

ModelDims dims_from_preset(std::string_view name) {
  const enc::EncoderPreset p = enc::preset(name);
  ModelDims d;
  d.embedding_dim = p.embedding_dim;
  d.n_filters = p.n_filters;
  d.attention_dim = p.attention_dim;
  d.dropout = p.dropout;
  return d;
}

RankerModel RankerModel::create(ModelKind kind, std::vector<std::string> vocab, const ModelDims& dims,
                                std::uint64_t seed) {
  if (kind == ModelKind::kLawfulness) throw ValidationError("use LawfulnessClassifier::create for the classifier");
  if (vocab.empty()) throw ValidationError("model vocabulary is empty");
  Rng rng(seed);
  RankerModel m;
  m.kind = kind;
  m.config.seed = seed;
  if (kind == ModelKind::kAttentiveCnn) {
    m.cnn = enc::SentenceEncoderCNN::random(std::move(vocab), dims.embedding_dim, dims.n_filters, dims.width,
                                            dims.attention_dim, rng, dims.init_scale);
    m.cnn.dropout = dims.dropout;
    m.cnn.embeddings.set_oov_policy(enc::OovPolicy::kZeroVector);
  } else {
    m.transformer = enc::TransformerEncoder::random(std::move(vocab), dims.embedding_dim, dims.n_layers, dims.n_heads,
                                                    dims.max_len, rng, dims.init_scale);
    m.transformer.embeddings.set_oov_policy(enc::OovPolicy::kZeroVector);
  }
  const std::size_t d = m.sentence_dim();
  m.paragraph = enc::GeneralAttentionParams::random(d, d, rng, dims.init_scale, enc::WeightFn::kSparsemax);
  return m;
}

std::size_t RankerModel::sentence_dim() const {
  return kind == ModelKind::kAttentiveCnn ? cnn.output_dim() : transformer.d();
}

const enc::EmbeddingTable& RankerModel::embeddings() const {
  return kind == ModelKind::kAttentiveCnn ? cnn.embeddings : transformer.embeddings;
}

std::vector<const Tensor*> RankerModel::parameters() const {
  std::vector<const Tensor*> out;
  if (kind == ModelKind::kAttentiveCnn) {
    out = {&cnn.embeddings.matrix(), &cnn.filters, &cnn.attn.A, &cnn.attn.b, &cnn.query};
  } else {
    out = {&transformer.embeddings.matrix(), &transformer.positions};
    for (const auto& l : transformer.layers) {
      for (const Tensor* t : {&l.wq, &l.wk, &l.wv, &l.wo}) out.push_back(t);
    }
  }
  out.push_back(&paragraph.A);
  out.push_back(&paragraph.b);
  return out;
}

std::vector<Tensor*> RankerModel::parameters() {
  std::vector<Tensor*> out;
  for (const Tensor* t : std::as_const(*this).parameters()) out.push_back(const_cast<Tensor*>(t));
  return out;
}

std::size_t RankerModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

std::vector<std::string> build_vocabulary(const corpus::Corpus& articles, const std::vector<std::string>& texts,
                                          std::size_t min_count) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  auto add = [&](const std::string& text) {
    for (auto& tok : lexical::tokenize(text)) {
      if (counts[tok]++ == 0) order.push_back(tok);
    }
  };
  for (const auto& a : articles) {
    for (const auto& s : article_statements(a)) add(s);
  }
  for (const auto& t : texts) add(t);
  std::vector<std::string> vocab;
  for (auto& tok : order) {
    if (counts[tok] >= min_count) vocab.push_back(std::move(tok));
  }
  return vocab;
}

Var encode_text(ParamBinder& bind, const RankerModel& model, const std::vector<std::string>& tokens, Rng* dropout_rng) {
  if (tokens.empty()) throw ValidationError("cannot encode an empty token sequence");
  if (model.kind == ModelKind::kAttentiveCnn) return enc::encode_sentence_cnn(bind, tokens, model.cnn, dropout_rng);
  return enc::encode_sentence_avg(bind, tokens, model.transformer);
}

Var score_article(ParamBinder& bind, const RankerModel& model, Var query_vec, const corpus::Article& article,
                  Rng* dropout_rng) {
  std::vector<Var> reps;
  for (const auto& s : article_statements(article)) {
    const auto tokens = lexical::tokenize(s);
    if (tokens.empty()) continue;
    reps.push_back(encode_text(bind, model, tokens, dropout_rng));
  }
  if (reps.empty()) throw ValidationError("article " + article.id + " has no tokens to encode");
  const auto para = enc::encode_paragraph(bind, query_vec, reps, model.paragraph);
  return tc::dot(query_vec, para.representation);
}

double semantic_score(const RankerModel& model, const std::string& query_text, const corpus::Article& article) {
  Tape tape;
  ParamBinder bind(tape, false);
  Var q = encode_text(bind, model, lexical::tokenize(query_text));
  return score_article(bind, model, q, article).value().item();
}

TrainResult train_ranker(RankerModel& model, const corpus::Corpus& corpus, const std::vector<corpus::Query>& queries) {
  const TrainConfig& cfg = model.config;
  const std::size_t k = cfg.k_negatives;
  if (k >= corpus.size()) {
    throw ValidationError("K = " + std::to_string(k) + " negatives needs more than " + std::to_string(corpus.size()) +
                          " articles");
  }
  if (!(cfg.lr > 0.0)) throw ValidationError("learning rate must be positive");
  std::unordered_map<std::string, std::size_t> pos_of;
  for (std::size_t i = 0; i < corpus.size(); ++i) pos_of[corpus[i].id] = i;
  const lexical::InvertedIndex index = lexical::build_index(corpus);

  struct Sample {
    std::size_t query;
    std::size_t article;
  };
  std::vector<Sample> samples;
  std::vector<std::vector<std::string>> q_tokens(queries.size());
  std::vector<std::vector<std::size_t>> hard(queries.size()), rest(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    if (q.relevant_ids.empty()) throw ValidationError("query " + q.id + " has no relevant article");
    q_tokens[qi] = lexical::tokenize(q.text);
    if (q_tokens[qi].empty()) throw ValidationError("query " + q.id + " has no tokens");
    std::vector<bool> relevant(corpus.size(), false);
    for (const auto& id : q.relevant_ids) {
      auto it = pos_of.find(id);
      if (it == pos_of.end()) throw ValidationError("query " + q.id + " names unknown article " + id);
      relevant[it->second] = true;
      samples.push_back({qi, it->second});
    }
    std::vector<bool> in_hard(corpus.size(), false);
    if (cfg.n_train > 0) {
      for (const auto& [id, score] : lexical::top_n(index, q_tokens[qi], cfg.n_train, cfg.bm25)) {
        const std::size_t a = pos_of.at(id);
        if (score > 0.0 && !relevant[a]) {
          hard[qi].push_back(a);
          in_hard[a] = true;
        }
      }
    }
    for (std::size_t a = 0; a < corpus.size(); ++a) {
      if (!relevant[a] && !in_hard[a]) rest[qi].push_back(a);
    }
    if (hard[qi].size() + rest[qi].size() < k) {
      throw ValidationError("query " + q.id + " has fewer than K non-relevant articles");
    }
  }

  Rng rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ kDropoutStream);
  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t s : order) {
      const Sample& sample = samples[s];
      std::vector<std::size_t> negs;
      const auto& h = hard[sample.query];
      for (std::size_t j : rng.sample_without_replacement(h.size(), std::min(k, h.size()))) negs.push_back(h[j]);
      if (negs.size() < k) {
        const auto& r = rest[sample.query];
        for (std::size_t j : rng.sample_without_replacement(r.size(), k - negs.size())) negs.push_back(r[j]);
      }
      Tape tape;
      ParamBinder bind(tape, true);
      Var q = encode_text(bind, model, q_tokens[sample.query], &dropout_rng);
      Var pos = score_article(bind, model, q, corpus[sample.article], &dropout_rng);
      std::vector<Var> neg_scores;
      for (std::size_t a : negs) neg_scores.push_back(score_article(bind, model, q, corpus[a], &dropout_rng));
      Var loss = tc::ce_negsample(pos, neg_scores);
      tape.backward(loss);
      bind.sgd_step(cfg.lr);
      total += loss.value().item();
      ++result.steps;
    }
    result.epoch_loss.push_back(samples.empty() ? 0.0 : total / static_cast<double>(samples.size()));
  }
  return result;
}

double ensemble(double s_l, double s_s, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  return alpha * s_l + (1.0 - alpha) * s_s;
}

SemanticCache::SemanticCache(const RankerModel& model, const corpus::Corpus& corpus) : model_(model) {
  std::vector<std::vector<Tensor>> reps(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    Tape tape;
    ParamBinder bind(tape, false);
    for (const auto& s : article_statements(corpus[i])) {
      const auto tokens = lexical::tokenize(s);
      if (!tokens.empty()) reps[i].push_back(encode_text(bind, model, tokens).value());
    }
  });
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (reps[i].empty()) throw ValidationError("article " + corpus[i].id + " has no tokens to encode");
    articles_[corpus[i].id] = &corpus[i];
    sentences_[corpus[i].id] = std::move(reps[i]);
  }
}

const corpus::Article& SemanticCache::article(const std::string& id) const {
  auto it = articles_.find(id);
  if (it == articles_.end()) throw ValidationError("article " + id + " is not in the model's corpus");
  return *it->second;
}

Tensor SemanticCache::encode_query(const std::string& text) const {
  Tape tape;
  ParamBinder bind(tape, false);
  return encode_text(bind, model_, lexical::tokenize(text)).value();
}

double SemanticCache::score(const Tensor& query_vec, const std::string& article_id) const {
  auto it = sentences_.find(article_id);
  if (it == sentences_.end()) throw ValidationError("article " + article_id + " is not in the model's corpus");
  const auto para = enc::encode_paragraph(query_vec, it->second, model_.paragraph);
  double s = 0.0;
  for (std::size_t i = 0; i < query_vec.size(); ++i) s += query_vec[i] * para.representation[i];
  return s;
}

std::vector<ScoredCandidate> score_candidates(const SemanticCache& cache, const lexical::InvertedIndex& index,
                                              const std::string& query_text, std::size_t n_predict,
                                              lexical::Bm25Params bm25) {
  if (n_predict == 0) throw ValidationError("n_predict must be at least 1");
  const auto tokens = lexical::tokenize(query_text);
  const auto top = lexical::top_n(index, tokens, n_predict, bm25);
  double lo = 0.0, hi = 0.0;
  if (!top.empty()) {
    hi = top.front().second;
    lo = top.back().second;
  }
  const Tensor q = cache.encode_query(query_text);
  std::vector<ScoredCandidate> out;
  out.reserve(top.size());
  for (const auto& [id, s] : top) {
    ScoredCandidate c;
    c.article_id = id;
    c.s_lexical = hi > lo ? (s - lo) / (hi - lo) : 0.0;
    c.s_semantic = cache.score(q, id);
    out.push_back(std::move(c));
  }
  return out;
}

void apply_alpha(std::vector<ScoredCandidate>& candidates, double alpha) {
  for (auto& c : candidates) c.s_final = ensemble(c.s_lexical, c.s_semantic, alpha);
  std::sort(candidates.begin(), candidates.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.s_final != b.s_final) return a.s_final > b.s_final;
    return a.article_id < b.article_id;
  });
}

std::vector<ScoredCandidate> rank(const SemanticCache& cache, const lexical::InvertedIndex& index,
                                  const std::string& query_text, std::size_t n_predict, double alpha,
                                  lexical::Bm25Params bm25) {
  auto c = score_candidates(cache, index, query_text, n_predict, bm25);
  apply_alpha(c, alpha);
  return c;
}

std::vector<std::vector<ScoredCandidate>> rank_all(const SemanticCache& cache, const lexical::InvertedIndex& index,
                                                   const std::vector<corpus::Query>& queries, std::size_t n_predict,
                                                   double alpha, lexical::Bm25Params bm25) {
  std::vector<std::vector<ScoredCandidate>> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) { out[i] = rank(cache, index, queries[i].text, n_predict, alpha, bm25); });
  return out;
}

GridResult grid_search_alpha(const SemanticCache& cache, const lexical::InvertedIndex& index,
                             const std::vector<corpus::Query>& val_queries, double step, std::size_t n_predict,
                             std::size_t k, lexical::Bm25Params bm25) {
  if (val_queries.empty()) throw ValidationError("grid search needs a non-empty validation set");
  if (!(step > 0.0 && step <= 1.0)) throw ValidationError("grid step must lie in (0, 1]");
  std::vector<std::vector<ScoredCandidate>> base(val_queries.size());
  parallel_for(val_queries.size(), [&](std::size_t i) {
    base[i] = score_candidates(cache, index, val_queries[i].text, n_predict, bm25);
  });
  const auto n_steps = static_cast<std::size_t>(std::floor(1.0 / step + 1e-9));
  std::vector<double> alphas;
  for (std::size_t i = 0; i <= n_steps; ++i) alphas.push_back(std::min(1.0, static_cast<double>(i) * step));
  if (alphas.back() < 1.0) alphas.push_back(1.0);

  GridResult best;
  best.f2 = -1.0;
  std::vector<eval::RetrievalJudgment> judgments(val_queries.size());
  for (double alpha : alphas) {
    for (std::size_t i = 0; i < val_queries.size(); ++i) {
      auto c = base[i];
      apply_alpha(c, alpha);
      judgments[i].qid = val_queries[i].id;
      judgments[i].gold = val_queries[i].relevant_ids;
      judgments[i].retrieved.clear();
      for (const auto& x : c) judgments[i].retrieved.push_back(x.article_id);
    }
    const double f2 = eval::macro_f2(judgments, k).f2;
    best.curve.emplace_back(alpha, f2);
    if (f2 > best.f2) {
      best.f2 = f2;
      best.alpha = alpha;
    }
  }
  return best;
}

json run_record(const std::string& qid, const std::vector<ScoredCandidate>& ranked) {
  json list = json::array();
  for (const auto& c : ranked) {
    list.push_back({{"id", c.article_id}, {"s_l", c.s_lexical}, {"s_s", c.s_semantic}, {"s_f", c.s_final}});
  }
  return json{{"qid", qid}, {"ranked", std::move(list)}};
}

// ---- lawfulness classifier ----

LawfulnessClassifier LawfulnessClassifier::create(std::vector<std::string> vocab, const ModelDims& dims,
                                                  std::uint64_t seed) {
  if (vocab.empty()) throw ValidationError("classifier vocabulary is empty");
  Rng rng(seed);
  LawfulnessClassifier c;
  c.encoder = enc::SentenceEncoderCNN::random(std::move(vocab), dims.embedding_dim, dims.n_filters, dims.width,
                                              dims.attention_dim, rng, dims.init_scale);
  c.encoder.dropout = dims.dropout;
  c.encoder.embeddings.set_oov_policy(enc::OovPolicy::kZeroVector);
  c.w = Tensor::uniform({dims.n_filters}, rng, dims.init_scale);
  c.b = Tensor::scalar(0.0);
  c.config.seed = seed;
  return c;
}

std::vector<const Tensor*> LawfulnessClassifier::parameters() const {
  return {&encoder.embeddings.matrix(), &encoder.filters, &encoder.attn.A, &encoder.attn.b, &encoder.query, &w, &b};
}

std::vector<Tensor*> LawfulnessClassifier::parameters() {
  std::vector<Tensor*> out;
  for (const Tensor* t : std::as_const(*this).parameters()) out.push_back(const_cast<Tensor*>(t));
  return out;
}

namespace {

Var lawful_logit(ParamBinder& bind, const LawfulnessClassifier& clf, const std::vector<std::string>& tokens, Rng* rng) {
  if (tokens.empty()) throw ValidationError("cannot classify an empty statement");
  Var h = enc::encode_sentence_cnn(bind, tokens, clf.encoder, rng);
  return tc::add(tc::dot(bind(clf.w), h), bind(clf.b));
}

}  // namespace

TrainResult train_lawfulness(LawfulnessClassifier& clf, const std::vector<augment::LabeledStatement>& data) {
  bool seen_true = false, seen_false = false;
  for (const auto& s : data) (s.lawful ? seen_true : seen_false) = true;
  if (!seen_true || !seen_false) throw ValidationError("lawfulness training needs both lawful and unlawful statements");
  if (!(clf.config.lr > 0.0)) throw ValidationError("learning rate must be positive");
  std::vector<std::vector<std::string>> tokens;
  for (const auto& s : data) {
    tokens.push_back(lexical::tokenize(s.text));
    if (tokens.back().empty()) throw ValidationError("statement \"" + s.text + "\" has no tokens");
  }
  Rng rng(clf.config.seed);
  Rng dropout_rng(clf.config.seed ^ kDropoutStream);
  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < clf.config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t i : order) {
      Tape tape;
      ParamBinder bind(tape, true);
      Var loss = tc::bce_logit(lawful_logit(bind, clf, tokens[i], &dropout_rng), data[i].lawful);
      tape.backward(loss);
      bind.sgd_step(clf.config.lr);
      total += loss.value().item();
      ++result.steps;
    }
    result.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return result;
}

double lawful_probability(const LawfulnessClassifier& clf, const std::string& text) {
  Tape tape;
  ParamBinder bind(tape, false);
  const double z = lawful_logit(bind, clf, lexical::tokenize(text), nullptr).value().item();
  return 1.0 / (1.0 + std::exp(-z));
}

bool classify(const LawfulnessClassifier& clf, const std::string& text) { return lawful_probability(clf, text) >= 0.5; }

// ---- checkpoints ----

json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},       {"epochs", c.epochs}, {"K", c.k_negatives}, {"seed", c.seed},
              {"n_train", c.n_train}, {"k1", c.bm25.k1},   {"b", c.bm25.b}};
}

namespace {

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.k_negatives = j.at("K").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_train = j.at("n_train").get<std::size_t>();
  c.bm25.k1 = j.at("k1").get<double>();
  c.bm25.b = j.at("b").get<double>();
  return c;
}

void write_body(std::ostream& out, ModelKind kind, const std::vector<const Tensor*>& tensors, const json& meta) {
  out.write("SLRK1", 5);
  tc::binary::write_u8(out, static_cast<unsigned char>(kind));
  for (const Tensor* t : tensors) tc::write_tensor(out, *t);
  tc::binary::write_string(out, meta.dump());
}

struct RawCheckpoint {
  ModelKind kind;
  std::vector<Tensor> tensors;
  json meta;
};

RawCheckpoint read_raw(std::istream& in) {
  tc::binary::expect_magic(in, "SLRK1");
  RawCheckpoint raw;
  const unsigned char k = tc::binary::read_u8(in);
  if (k < 1 || k > 4) throw ValidationError("checkpoint has unknown model kind " + std::to_string(k));
  raw.kind = static_cast<ModelKind>(k);
  for (;;) {
    const auto mark = in.tellg();
    char magic[5] = {};
    in.read(magic, 5);
    if (!in) throw ValidationError("truncated checkpoint");
    in.seekg(mark);
    if (std::string_view(magic, 5) != "SLTN1") break;
    raw.tensors.push_back(tc::read_tensor(in));
  }
  try {
    raw.meta = json::parse(tc::binary::read_string(in));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad checkpoint metadata: ") + e.what());
  }
  return raw;
}

RawCheckpoint read_raw_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  return read_raw(in);
}

json cnn_meta(const enc::SentenceEncoderCNN& e) {
  return json{{"vocab", e.embeddings.words()},
              {"dropout", e.dropout},
              {"query_mode", e.query_mode == enc::CnnQueryMode::kLearned ? "learned" : "from_query"},
              {"cnn_weight_fn", e.attn.weight_fn == enc::WeightFn::kSoftmax ? "softmax" : "sparsemax"}};
}

void expect_count(const RawCheckpoint& raw, std::size_t n) {
  if (raw.tensors.size() != n) {
    throw ValidationError("checkpoint holds " + std::to_string(raw.tensors.size()) + " tensors, expected " +
                          std::to_string(n));
  }
}

enc::SentenceEncoderCNN cnn_from(const RawCheckpoint& raw, std::size_t first) {
  enc::SentenceEncoderCNN e;
  e.embeddings = enc::EmbeddingTable(raw.meta.at("vocab").get<std::vector<std::string>>(), raw.tensors[first],
                                     enc::OovPolicy::kZeroVector);
  e.filters = raw.tensors[first + 1];
  e.attn.A = raw.tensors[first + 2];
  e.attn.b = raw.tensors[first + 3];
  e.attn.weight_fn = raw.meta.at("cnn_weight_fn") == "softmax" ? enc::WeightFn::kSoftmax : enc::WeightFn::kSparsemax;
  e.query = raw.tensors[first + 4];
  e.dropout = raw.meta.at("dropout").get<double>();
  e.query_mode = raw.meta.at("query_mode") == "learned" ? enc::CnnQueryMode::kLearned : enc::CnnQueryMode::kFromQuery;
  e.validate();
  return e;
}

json transformer_meta(const enc::TransformerEncoder& t) {
  std::vector<std::size_t> heads;
  for (const auto& l : t.layers) heads.push_back(l.n_heads);
  return json{{"vocab", t.embeddings.words()}, {"n_heads", heads}, {"use_positions", t.use_positions}};
}

std::vector<const Tensor*> transformer_tensors(const enc::TransformerEncoder& t) {
  std::vector<const Tensor*> out{&t.embeddings.matrix(), &t.positions};
  for (const auto& l : t.layers) {
    for (const Tensor* p : {&l.wq, &l.wk, &l.wv, &l.wo}) out.push_back(p);
  }
  return out;
}

std::size_t transformer_tensor_count(const RawCheckpoint& raw) {
  return 2 + 4 * raw.meta.at("n_heads").get<std::vector<std::size_t>>().size();
}

enc::TransformerEncoder transformer_from(const RawCheckpoint& raw) {
  enc::TransformerEncoder t;
  const auto heads = raw.meta.at("n_heads").get<std::vector<std::size_t>>();
  t.embeddings = enc::EmbeddingTable(raw.meta.at("vocab").get<std::vector<std::string>>(), raw.tensors[0],
                                     enc::OovPolicy::kZeroVector);
  t.positions = raw.tensors[1];
  t.use_positions = raw.meta.at("use_positions").get<bool>();
  for (std::size_t l = 0; l < heads.size(); ++l) {
    enc::SelfAttentionLayer layer{raw.tensors[2 + 4 * l], raw.tensors[3 + 4 * l], raw.tensors[4 + 4 * l],
                                  raw.tensors[5 + 4 * l], heads[l]};
    layer.validate();
    t.layers.push_back(std::move(layer));
  }
  return t;
}

}  // namespace

void write_checkpoint(std::ostream& out, const RankerModel& model) {
  json meta;
  if (model.kind == ModelKind::kAttentiveCnn) {
    meta = cnn_meta(model.cnn);
  } else {
    meta = transformer_meta(model.transformer);
  }
  meta["paragraph_weight_fn"] = model.paragraph.weight_fn == enc::WeightFn::kSoftmax ? "softmax" : "sparsemax";
  meta["config"] = to_json(model.config);
  write_body(out, model.kind, model.parameters(), meta);
}

void write_checkpoint(std::ostream& out, const LawfulnessClassifier& clf) {
  json meta = cnn_meta(clf.encoder);
  meta["config"] = to_json(clf.config);
  write_body(out, ModelKind::kLawfulness, clf.parameters(), meta);
}

void write_checkpoint(std::ostream& out, const enc::TransformerEncoder& body) {
  write_body(out, ModelKind::kTransformerBody, transformer_tensors(body), transformer_meta(body));
}

std::string checkpoint_bytes(const enc::TransformerEncoder& body) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, body);
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const enc::TransformerEncoder& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint " + path.string());
  write_checkpoint(out, body);
}

enc::TransformerEncoder load_body(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw_file(path);
  if (raw.kind != ModelKind::kTransformerBody) throw ValidationError(path.string() + " does not hold a transformer body");
  try {
    expect_count(raw, transformer_tensor_count(raw));
    return transformer_from(raw);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
}

std::string checkpoint_bytes(const RankerModel& model) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, model);
  return os.str();
}

std::string checkpoint_bytes(const LawfulnessClassifier& clf) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, clf);
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const RankerModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model);
}

void save_checkpoint(const std::filesystem::path& path, const LawfulnessClassifier& clf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint " + path.string());
  write_checkpoint(out, clf);
}

ModelKind checkpoint_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  tc::binary::expect_magic(in, "SLRK1");
  const unsigned char k = tc::binary::read_u8(in);
  if (k < 1 || k > 4) throw ValidationError("checkpoint has unknown model kind " + std::to_string(k));
  return static_cast<ModelKind>(k);
}

RankerModel load_ranker(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw_file(path);
  if (raw.kind == ModelKind::kLawfulness || raw.kind == ModelKind::kTransformerBody) {
    throw ValidationError(path.string() + " holds a " + std::string(kind_name(raw.kind)) + ", not a ranker");
  }
  RankerModel m;
  m.kind = raw.kind;
  try {
    if (raw.kind == ModelKind::kAttentiveCnn) {
      expect_count(raw, 7);
      m.cnn = cnn_from(raw, 0);
    } else {
      expect_count(raw, transformer_tensor_count(raw) + 2);
      m.transformer = transformer_from(raw);
    }
    const std::size_t n = raw.tensors.size();
    m.paragraph.A = raw.tensors[n - 2];
    m.paragraph.b = raw.tensors[n - 1];
    m.paragraph.weight_fn =
        raw.meta.at("paragraph_weight_fn") == "softmax" ? enc::WeightFn::kSoftmax : enc::WeightFn::kSparsemax;
    m.config = config_from_json(raw.meta.at("config"));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  return m;
}

LawfulnessClassifier load_classifier(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw_file(path);
  if (raw.kind != ModelKind::kLawfulness) throw ValidationError(path.string() + " does not hold a lawfulness classifier");
  expect_count(raw, 7);
  LawfulnessClassifier c;
  try {
    c.encoder = cnn_from(raw, 0);
    c.w = raw.tensors[5];
    c.b = raw.tensors[6];
    c.config = config_from_json(raw.meta.at("config"));
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  return c;
}

}  // namespace slab::rank
