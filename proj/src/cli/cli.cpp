#include "slab/cli/cli.hpp"

#include <openssl/evp.h>

#include <deque>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "slab/augment/augment.hpp"
#include "slab/cli/selftest.hpp"
#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/common/random.hpp"
#include "slab/corpus/corpus.hpp"
#include "slab/embedmetrics/embedmetrics.hpp"
#include "slab/evalkit/evalkit.hpp"
#include "slab/inject/inject.hpp"
#include "slab/lexical/lexical.hpp"
#include "slab/rankers/rankers.hpp"

namespace slab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_file(const fs::path& path) {
  const std::string bytes = read_text_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw RuntimeError("SHA-256 failed for " + path.string());
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

json load_config(const fs::path& path, const json& allowed) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path.string() + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ValidationError(path.string() + ": unknown config key \"" + key + "\"");
  }
  return j;
}

namespace {

// Flags shared by every leaf command.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string preset;
  std::vector<std::string> set;
};

// One command invocation: effective config, inputs for the manifest.
class Run {
 public:
  Run(std::string command, const Common& flags, json defaults, std::ostream& out)
      : command_(std::move(command)), flags_(flags), cfg_(std::move(defaults)), out_(out) {
    cfg_["seed"] = nullptr;
    cfg_["preset"] = "desk";
    if (!flags.config.empty()) {
      const json file = load_config(flags.config, cfg_);
      for (const auto& [k, v] : file.items()) cfg_[k] = v;
      input(flags.config);
    }
    for (const auto& kv : flags.set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ValidationError("--set expects key=value, got \"" + kv + "\"");
      const std::string key = kv.substr(0, eq);
      if (!cfg_.contains(key)) throw ValidationError("unknown config key \"" + key + "\"");
      const std::string raw = kv.substr(eq + 1);
      cfg_[key] = json::accept(raw) ? json::parse(raw) : json(raw);
    }
    if (flags.seed) cfg_["seed"] = *flags.seed;
    if (!flags.preset.empty()) cfg_["preset"] = flags.preset;
    if (!cfg_["seed"].is_null() && (!cfg_["seed"].is_number_integer() || cfg_["seed"].get<std::int64_t>() < 0)) {
      throw ValidationError("config key \"seed\" must be a non-negative integer");
    }
    (void)preset();
  }

  const json& config() const { return cfg_; }

  template <typename T>
  T get(const std::string& key) const {
    try {
      return cfg_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config key \"" + key + "\" has the wrong type: " + cfg_.at(key).dump());
    }
  }
  std::size_t count(const std::string& key) const {
    const json& v = cfg_.at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw ValidationError("config key \"" + key + "\" must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }
  double number(const std::string& key) const {
    const json& v = cfg_.at(key);
    if (!v.is_number()) throw ValidationError("config key \"" + key + "\" must be a number");
    return v.get<double>();
  }

  std::uint64_t seed() const {
    if (cfg_["seed"].is_null()) throw ValidationError(command_ + " is randomized: --seed is required");
    return cfg_["seed"].get<std::uint64_t>();
  }
  std::string preset() const {
    const std::string p = get<std::string>("preset");
    if (p != "paper" && p != "desk") throw ValidationError("unknown preset \"" + p + "\" (expected paper or desk)");
    return p;
  }

  fs::path input(const fs::path& p) {
    if (!fs::exists(p)) throw ValidationError("input file not found: " + p.string());
    inputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    return p;
  }

  fs::path out_dir() {
    if (flags_.out.empty()) throw ValidationError(command_ + " writes files: --out DIR is required");
    fs::create_directories(flags_.out);
    return flags_.out;
  }
  fs::path output(const std::string& name) {
    outputs_.push_back(name);
    return out_dir() / name;
  }

  // Config echo and manifest; written last so a failed run leaves none.
  void finish() {
    if (flags_.out.empty()) return;
    const fs::path dir = out_dir();
    write_text_file(dir / "config.json", cfg_.dump(2) + "\n");
    const json manifest{{"command", command_}, {"seed", cfg_["seed"]}, {"config", cfg_},
                        {"inputs", inputs_},   {"outputs", outputs_}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  }

  std::ostream& out() { return out_; }

 private:
  std::string command_;
  const Common& flags_;
  json cfg_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
  std::ostream& out_;
};

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::set<std::string> split_ids(const std::string& s) {
  std::set<std::string> out;
  std::stringstream in(s);
  std::string id;
  while (std::getline(in, id, ',')) {
    if (!id.empty()) out.insert(id);
  }
  return out;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) out.push_back(line);
  }
  return out;
}

rank::ModelDims dims_from(const Run& run) {
  rank::ModelDims d = rank::dims_from_preset(run.preset());
  auto maybe = [&](const char* key, std::size_t& field) {
    if (!run.config().at(key).is_null()) field = run.count(key);
  };
  maybe("embedding_dim", d.embedding_dim);
  maybe("n_filters", d.n_filters);
  maybe("attention_dim", d.attention_dim);
  d.width = run.count("width");
  d.n_layers = run.count("n_layers");
  d.n_heads = run.count("n_heads");
  d.max_len = run.count("max_len");
  d.init_scale = run.number("init_scale");
  if (!run.config().at("dropout").is_null()) d.dropout = run.number("dropout");
  return d;
}

json to_json(const rank::ModelDims& d) {
  return json{{"embedding_dim", d.embedding_dim}, {"n_filters", d.n_filters}, {"width", d.width},
              {"attention_dim", d.attention_dim}, {"dropout", d.dropout},     {"n_layers", d.n_layers},
              {"n_heads", d.n_heads},             {"max_len", d.max_len},     {"init_scale", d.init_scale}};
}

json model_keys() {
  return json{{"embedding_dim", nullptr}, {"n_filters", nullptr}, {"attention_dim", nullptr}, {"dropout", nullptr},
              {"width", 3},     {"n_layers", 1},    {"n_heads", 2},       {"max_len", 64},
              {"init_scale", 0.1}};
}

json merge(json a, const json& b) {
  for (const auto& [k, v] : b.items()) a[k] = v;
  return a;
}

lexical::Bm25Params bm25_from(const Run& run) { return {run.number("k1"), run.number("b")}; }

// ---- commands ---------------------------------------------------------------

struct Inputs {
  std::string corpus, queries, val, model, data, docs, text, lang = "en", rules, targets, heads, body, train, terms,
      embeddings, sentences, labels, judgments, gold, retrieved, positives;
  std::size_t correct = 0, total = 0, top_k = 500, instances = 100;
  int s = 0;
};

void corpus_stats(Run& run, const Inputs& in) {
  const auto corpus = corpus::load_corpus(run.input(in.corpus));
  std::vector<std::string> texts;
  for (const auto& a : corpus) texts.push_back(a.text);
  const auto st = corpus::corpus_stats(texts);
  json report{{"articles", {{"count", st.count}, {"mean_len", st.mean_len}, {"std_len", st.std_len}}}};
  if (!in.queries.empty()) {
    const auto qs = corpus::load_queries(run.input(in.queries));
    corpus::check_queries_against(qs, corpus);
    std::vector<std::string> qt;
    for (const auto& q : qs) qt.push_back(q.text);
    const auto qst = corpus::corpus_stats(qt);
    report["queries"] = {{"count", qst.count}, {"mean_len", qst.mean_len}, {"std_len", qst.std_len}};
  }
  run.out() << report.dump(2) << "\n";
}

void corpus_chunk(Run& run, const Inputs& in) {
  const auto chunked = corpus::chunk_corpus(corpus::load_corpus(run.input(in.corpus)));
  corpus::save_corpus(run.output("corpus.jsonl"), chunked);
  std::size_t n = 0;
  for (const auto& a : chunked) n += a.statements.size();
  run.out() << chunked.size() << " articles, " << n << " statements\n";
}

augment::Language lang_of(const Inputs& in) { return augment::parse_language(in.lang); }

void augment_negate(Run& run, const Inputs& in) {
  if (in.text.empty()) throw ValidationError("--text is required");
  const auto neg = in.rules.empty() ? augment::negate(in.text, lang_of(in))
                                    : augment::negate(in.text, augment::load_rules(run.input(in.rules)));
  json j{{"input", in.text}};
  if (neg) {
    j["text"] = neg->text;
    j["rule"] = neg->rule_rank;
  } else {
    j["text"] = nullptr;
    j["rule"] = nullptr;
  }
  run.out() << j.dump() << "\n";
}

void augment_lawfulness(Run& run, const Inputs& in) {
  auto corpus = corpus::chunk_corpus(corpus::load_corpus(run.input(in.corpus)));
  const auto qs = corpus::load_queries(run.input(in.queries));
  auto data = augment::derive_lawfulness(corpus, qs);
  const std::size_t base = data.size();
  if (run.get<bool>("negate")) {
    data = in.rules.empty() ? augment::augment_negation(data, lang_of(in))
                            : augment::augment_negation(data, augment::load_rules(run.input(in.rules)));
  }
  std::vector<json> rows;
  for (const auto& s : data) rows.push_back(augment::to_json(s));
  write_jsonl(run.output("lawfulness.jsonl"), rows);
  run.out() << base << " derived, " << data.size() - base << " negated, " << data.size() << " total\n";
}

void augment_pairs(Run& run, const Inputs& in, augment::PairTask task) {
  const auto docs = augment::load_bilingual_docs(run.input(in.docs));
  const std::uint64_t seed = run.seed();
  const double ratio = run.number("neg_ratio");
  std::vector<json> rows;
  std::map<std::string, std::size_t> counts;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto pairs = task == augment::PairTask::kNfsp ? augment::gen_nfsp(docs[d], seed + d, ratio)
                                                        : augment::gen_nmsp(docs[d], seed + d, ratio);
    for (const auto& p : pairs) {
      json j = augment::to_json(p);
      j["doc"] = d;
      rows.push_back(std::move(j));
      ++counts[std::string(augment::label_name(p.label))];
    }
  }
  write_jsonl(run.output("pairs.jsonl"), rows);
  run.out() << json(counts).dump() << "\n";
}

void index_build(Run& run, const Inputs& in) {
  const auto index = lexical::build_index(corpus::chunk_corpus(corpus::load_corpus(run.input(in.corpus))));
  lexical::save_index(run.output("index.slix"), index);
  run.out() << index.n_docs() << " documents, " << index.postings().size() << " terms\n";
}

std::vector<std::string> texts_of(const std::vector<corpus::Query>& qs) {
  std::vector<std::string> t;
  for (const auto& q : qs) t.push_back(q.text);
  return t;
}

void rank_train(Run& run, const Inputs& in) {
  const auto corpus = corpus::chunk_corpus(corpus::load_corpus(run.input(in.corpus)));
  const auto qs = corpus::load_queries(run.input(in.queries));
  corpus::check_queries_against(qs, corpus);
  const auto kind = rank::parse_kind(run.get<std::string>("kind"));
  if (kind != rank::ModelKind::kAttentiveCnn && kind != rank::ModelKind::kParaformerLite) {
    throw ValidationError("config key \"kind\" must be attentive_cnn or paraformer_lite");
  }
  const auto vocab = rank::build_vocabulary(corpus, texts_of(qs), run.count("min_count"));
  const auto dims = dims_from(run);
  auto model = rank::RankerModel::create(kind, vocab, dims, run.seed());
  model.config.lr = run.number("lr");
  model.config.epochs = run.count("epochs");
  model.config.k_negatives = run.count("K");
  model.config.n_train = run.count("n_train");
  model.config.bm25 = bm25_from(run);
  const auto result = rank::train_ranker(model, corpus, qs);
  rank::save_checkpoint(run.output("model.slrk"), model);
  write_json(run.output("train_log.json"),
             json{{"epoch_loss", result.epoch_loss}, {"steps", result.steps}, {"vocab", vocab.size()},
                  {"dims", to_json(dims)}, {"parameters", model.parameter_count()}});
  run.out() << "final epoch loss " << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
}

void rank_grid(Run& run, const Inputs& in) {
  const auto model = rank::load_ranker(run.input(in.model));
  const auto corpus = corpus::chunk_corpus(corpus::load_corpus(run.input(in.corpus)));
  const auto qs = corpus::load_queries(run.input(in.queries));
  corpus::check_queries_against(qs, corpus);
  const auto index = lexical::build_index(corpus);
  const rank::SemanticCache cache(model, corpus);
  const auto g = rank::grid_search_alpha(cache, index, qs, run.number("step"), run.count("n_predict"), run.count("k"),
                                         bm25_from(run));
  json curve = json::array();
  for (const auto& [a, f] : g.curve) curve.push_back({a, f});
  write_json(run.output("grid.json"), json{{"alpha", g.alpha}, {"macro_f2", g.f2}, {"curve", curve}});
  run.out() << "alpha " << eval::format_metric(g.alpha) << " macro_f2 " << eval::format_metric(g.f2) << "\n";
}

void rank_run(Run& run, const Inputs& in) {
  const auto model = rank::load_ranker(run.input(in.model));
  const auto corpus = corpus::chunk_corpus(corpus::load_corpus(run.input(in.corpus)));
  const auto qs = corpus::load_queries(run.input(in.queries));
  const auto index = lexical::build_index(corpus);
  const rank::SemanticCache cache(model, corpus);
  const auto bm25 = bm25_from(run);
  const std::size_t n_predict = run.count("n_predict"), k = run.count("k");
  double alpha = 0.0;
  const json& a = run.config().at("alpha");
  if (a.is_string() && a == "grid") {
    if (in.val.empty()) throw ValidationError("alpha \"grid\" needs --val queries");
    const auto val = corpus::load_queries(run.input(in.val));
    corpus::check_queries_against(val, corpus);
    alpha = rank::grid_search_alpha(cache, index, val, run.number("step"), n_predict, k, bm25).alpha;
  } else {
    alpha = run.number("alpha");
  }
  const auto ranked = rank::rank_all(cache, index, qs, n_predict, alpha, bm25);
  std::vector<json> rows;
  std::vector<eval::RetrievalJudgment> judged;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    rows.push_back(rank::run_record(qs[i].id, ranked[i]));
    if (qs[i].relevant_ids.empty()) continue;
    eval::RetrievalJudgment j{qs[i].id, qs[i].relevant_ids, {}};
    for (const auto& c : ranked[i]) j.retrieved.push_back(c.article_id);
    judged.push_back(std::move(j));
  }
  write_jsonl(run.output("run.jsonl"), rows);
  json metrics{{"alpha", alpha}, {"k", k}, {"judged", judged.size()}};
  if (!judged.empty()) metrics["macro"] = eval::to_json(eval::macro_f2(judged, k));
  write_json(run.output("metrics.json"), metrics);
  run.out() << "alpha " << eval::format_metric(alpha);
  if (!judged.empty()) run.out() << " macro_f2@" << k << " " << eval::format_metric(eval::macro_f2(judged, k).f2);
  run.out() << "\n";
}

void classify_train(Run& run, const Inputs& in) {
  const auto data = augment::load_labeled(run.input(in.data));
  std::vector<std::string> texts;
  for (const auto& s : data) texts.push_back(s.text);
  const auto vocab = rank::build_vocabulary({}, texts, run.count("min_count"));
  const auto dims = dims_from(run);
  auto clf = rank::LawfulnessClassifier::create(vocab, dims, run.seed());
  clf.config.lr = run.number("lr");
  clf.config.epochs = run.count("epochs");
  const auto result = rank::train_lawfulness(clf, data);
  rank::save_checkpoint(run.output("classifier.slrk"), clf);
  write_json(run.output("train_log.json"),
             json{{"epoch_loss", result.epoch_loss}, {"steps", result.steps}, {"dims", to_json(dims)}});
  run.out() << "final epoch loss " << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
}

void classify_run(Run& run, const Inputs& in) {
  const auto clf = rank::load_classifier(run.input(in.model));
  const auto data = augment::load_labeled(run.input(in.data));
  std::vector<json> rows;
  std::vector<bool> preds, golds;
  for (const auto& s : data) {
    const double p = rank::lawful_probability(clf, s.text);
    preds.push_back(p >= 0.5);
    golds.push_back(s.lawful);
    rows.push_back({{"text", s.text}, {"p_lawful", p}, {"lawful", p >= 0.5}, {"gold", s.lawful}});
  }
  write_jsonl(run.output("predictions.jsonl"), rows);
  const double acc = data.empty() ? 0.0 : eval::accuracy(preds, golds);
  write_json(run.output("metrics.json"), json{{"accuracy", acc}, {"n", data.size()}});
  run.out() << "accuracy " << eval::format_metric(acc) << "\n";
}

// ---- inject ----

void write_heads(const fs::path& path, const std::vector<inject::HydraHead>& heads) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot write " + path.string());
  for (const auto& h : heads) {
    tc::write_tensor(f, h.wq);
    tc::write_tensor(f, h.wk);
  }
}

std::vector<inject::HydraHead> read_heads(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  std::vector<inject::HydraHead> out;
  while (f.peek() != std::char_traits<char>::eof()) {
    inject::HydraHead h;
    h.wq = tc::read_tensor(f);
    h.wk = tc::read_tensor(f);
    out.push_back(std::move(h));
  }
  if (out.empty()) throw ValidationError(path.string() + " holds no heads");
  return out;
}

enc::TransformerEncoder random_body(const Run& run, std::vector<std::string> vocab) {
  Rng rng(run.seed());
  auto body = enc::TransformerEncoder::random(std::move(vocab), run.count("d"), run.count("layers"),
                                              run.count("heads"), run.count("max_len"), rng,
                                              run.number("init_scale"));
  body.use_positions = run.get<bool>("use_positions");
  return body;
}

void hydra_pretrain(Run& run, const Inputs& in) {
  const auto targets = inject::load_sdoi(run.input(in.targets));
  enc::TransformerEncoder body;
  if (!in.body.empty()) {
    body = rank::load_body(run.input(in.body));
  } else {
    std::vector<std::vector<std::string>> toks;
    for (const auto& t : targets) toks.push_back(t.tokens);
    body = random_body(run, enc::build_vocabulary(toks));
    rank::save_checkpoint(run.output("body.slrk"), body);
  }
  const std::size_t n_heads = run.count("hydra_heads");
  if (n_heads == 0 || body.d() % n_heads) throw ValidationError("hydra_heads must divide the body width");
  Rng rng(run.seed() ^ 0x9e3779b97f4a7c15ULL);
  std::vector<inject::HydraHead> heads;
  for (std::size_t h = 0; h < n_heads; ++h) {
    heads.push_back(inject::HydraHead::random(body.d(), body.d() / n_heads, rng, run.number("head_scale")));
  }
  inject::HydraConfig hc;
  hc.steps = run.count("steps");
  hc.lr = run.number("lr");
  const auto trace = inject::hydra_pretrain(body, targets, heads, hc);
  write_heads(run.output("heads.sltn"), heads);
  write_json(run.output("trace.json"), json{{"loss", trace.loss}, {"final_loss", trace.final_loss}});
  run.out() << "final mse " << trace.final_loss << "\n";
}

void hydra_attach(Run& run, const Inputs& in) {
  const auto body = rank::load_body(run.input(in.body));
  const auto heads = read_heads(run.input(in.heads));
  const auto model = inject::hydra_attach(body, heads);
  rank::save_checkpoint(run.output("model.slrk"), model);
  run.out() << "parameters " << inject::parameter_count(body) << " -> " << inject::parameter_count(model) << "\n";
}

void tre_train(Run& run, const Inputs& in) {
  const auto train = inject::load_bioe(run.input(in.train));
  std::vector<inject::BioeSample> val;
  if (!in.val.empty()) val = inject::load_bioe(run.input(in.val));
  enc::TransformerEncoder model;
  if (!in.body.empty()) {
    model = rank::load_body(run.input(in.body));
  } else {
    std::vector<std::vector<std::string>> toks;
    for (const auto& s : train) toks.push_back(s.tokens);
    for (const auto& s : val) toks.push_back(s.tokens);
    model = random_body(run, enc::build_vocabulary(toks));
  }
  inject::InjectionConfig ic{run.get<std::vector<std::size_t>>("positions"),
                             run.get<std::vector<double>>("portions")};
  ic.validate(model.layers.size());
  inject::TreTrainConfig tc_cfg{run.count("epochs"), run.number("lr"), run.seed()};
  const auto result = inject::tre_train(model, ic, train, val, tc_cfg);
  rank::save_checkpoint(run.output("model.slrk"), model);
  json report{{"injection", inject::to_json(ic)},
              {"epoch_loss", result.epoch_loss},
              {"train", inject::to_json(result.train_eval)}};
  if (!val.empty()) report["val"] = inject::to_json(result.val_eval);
  write_json(run.output("report.json"), report);
  const auto& ev = val.empty() ? result.train_eval : result.val_eval;
  run.out() << (val.empty() ? "train" : "val") << " token_accuracy " << eval::format_metric(ev.token_accuracy)
            << " f1 " << eval::format_metric(ev.overall.f1) << "\n";
}

void tag_stats(Run& run, const Inputs& in) {
  run.out() << json(inject::tag_stats(inject::load_bioe(run.input(in.data)))).dump(2) << "\n";
}

void attn_report(Run& run, const Inputs& in) {
  if (in.text.empty()) throw ValidationError("--text is required");
  const auto model = rank::load_body(run.input(in.model));
  const auto report = inject::attention_weights_report(model, lexical::tokenize(in.text));
  json layers = json::array();
  for (const auto& layer : report) {
    json heads = json::array();
    for (const auto& w : layer) {
      json rows = json::array();
      for (std::size_t r = 0; r < w.rows(); ++r) rows.push_back(std::vector<double>(w.row(r).begin(), w.row(r).end()));
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  const json j{{"tokens", lexical::tokenize(in.text)}, {"attention", layers}};
  run.out() << j.dump() << "\n";
}

// ---- embed / eval ----

embed::Sentences load_sentences(Run& run, const std::string& path) {
  embed::Sentences out;
  for (const auto& line : read_lines(run.input(path))) out.push_back(lexical::tokenize(line));
  return out;
}

void embed_lvc(Run& run, const Inputs& in) {
  const auto table = enc::load_embeddings(run.input(in.embeddings));
  run.out() << eval::format_metric(embed::lvc(table, embed::load_terms(run.input(in.terms)))) << "\n";
}

void embed_leca(Run& run, const Inputs& in) {
  const auto table = enc::load_embeddings(run.input(in.embeddings));
  const auto terms = embed::load_terms(run.input(in.terms));
  const auto report = embed::evaluate(table, terms, load_sentences(run, in.sentences));
  run.out() << embed::to_json(report).dump(2) << "\n";
}

void embed_project(Run& run, const Inputs& in) {
  const auto table = enc::load_embeddings(run.input(in.embeddings));
  std::map<std::string, std::string> labels;
  if (!in.terms.empty()) {
    for (const auto& t : embed::load_terms(run.input(in.terms))) labels[t] = "legal";
  }
  embed::export_projection(run.output("projection.tsv"), table, labels, in.top_k);
  run.out() << std::min(in.top_k, table.size()) << " rows\n";
}

void eval_prf2(Run& run, const Inputs& in) {
  if (!in.judgments.empty()) {
    const auto js = eval::load_judgments(run.input(in.judgments));
    const auto p = eval::macro_f2(js, run.count("k"));
    run.out() << eval::format_metric(p.precision) << " " << eval::format_metric(p.recall) << " "
              << eval::format_metric(p.f2) << "\n";
    return;
  }
  const auto p = eval::prf2(split_ids(in.gold), split_ids(in.retrieved));
  run.out() << eval::format_metric(p.precision) << " " << eval::format_metric(p.recall) << " "
            << eval::format_metric(p.f2) << "\n";
}

void eval_accuracy(Run& run, const Inputs& in) {
  std::vector<bool> preds, golds;
  if (!in.data.empty()) {
    for_each_jsonl(run.input(in.data), [&](const json& j, std::size_t line) {
      try {
        preds.push_back(j.at("pred").get<bool>());
        golds.push_back(j.at("gold").get<bool>());
      } catch (const json::exception& e) {
        throw ValidationError(in.data + ":" + std::to_string(line) + ": " + e.what());
      }
    });
  } else {
    if (in.correct > in.total) throw ValidationError("--correct exceeds --total");
    for (std::size_t i = 0; i < in.total; ++i) {
      preds.push_back(true);
      golds.push_back(i < in.correct);
    }
  }
  run.out() << eval::format_metric(eval::accuracy(preds, golds)) << "\n";
}

void eval_human(Run& run, const Inputs& in) {
  std::vector<int> pos;
  std::stringstream ss(in.positives);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      pos.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValidationError("--positives expects comma-separated integers, got \"" + item + "\"");
    }
  }
  run.out() << eval::format_metric(eval::aggregate_human_eval(pos, in.s)) << "\n";
}

int selftest_gradcheck(Run& run, const Inputs& in) {
  const std::uint64_t seed = run.config()["seed"].is_null() ? 1 : run.seed();
  bool ok = true;
  for (const auto& c : gradient_suite(in.instances, seed)) {
    const bool pass = c.max_rel_error < 1e-4;
    ok = ok && pass;
    run.out() << std::left << std::setw(20) << c.name << " " << std::scientific << std::setprecision(3)
              << c.max_rel_error << std::defaultfloat << (pass ? "  ok" : "  FAIL") << "\n";
  }
  return ok ? kExitOk : kExitRuntime;
}

int selftest_properties(Run& run, const Inputs& in) {
  const std::uint64_t seed = run.config()["seed"].is_null() ? 1 : run.seed();
  bool ok = true;
  for (const auto& c : property_suite(in.instances * 10, seed)) {
    ok = ok && c.pass();
    run.out() << std::left << std::setw(36) << c.name << " worst " << std::scientific << std::setprecision(3)
              << c.worst << " tol " << c.tolerance << std::defaultfloat << (c.pass() ? "  ok" : "  FAIL") << "\n";
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Statute-law retrieval, lawfulness and knowledge-injection toolkit", "slab"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Inputs in;
  std::deque<Common> commons;
  std::function<int()> action;

  struct Leaf {
    CLI::App* app;
    Common* flags;
  };
  auto leaf = [&](CLI::App* group, const std::string& name, const std::string& help, json defaults,
                  std::function<int(Run&)> fn) {
    Common& flags = commons.emplace_back();
    CLI::App* sub = group->add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "seed for every random draw");
    sub->add_option("--out", flags.out, "run output directory");
    sub->add_option("--preset", flags.preset, "paper | desk");
    sub->add_option("--set", flags.set, "override one config key: key=json");
    const std::string full = group->get_name() + " " + name;
    sub->callback([&, full, defaults, fn, fl = &flags] {
      action = [&, full, defaults, fn, fl] {
        Run run(full, *fl, defaults, out);
        const int code = fn(run);
        if (code == kExitOk) run.finish();
        return code;
      };
    });
    return Leaf{sub, &flags};
  };
  auto wrap = [](auto f) {
    return [f](Run& r) {
      f(r);
      return kExitOk;
    };
  };
  auto group = [&](const std::string& name, const std::string& help) {
    CLI::App* g = app.add_subcommand(name, help);
    g->require_subcommand(1);
    return g;
  };

  const json bm25{{"k1", 1.2}, {"b", 0.75}};

  CLI::App* corpus_g = group("corpus", "corpus statistics and chunking");
  auto l = leaf(corpus_g, "stats", "article (and query) length statistics", json::object(),
                wrap([&](Run& r) { corpus_stats(r, in); }));
  l.app->add_option("--corpus", in.corpus)->required();
  l.app->add_option("--queries", in.queries);
  l = leaf(corpus_g, "chunk", "split articles into statements", json::object(),
           wrap([&](Run& r) { corpus_chunk(r, in); }));
  l.app->add_option("--corpus", in.corpus)->required();

  CLI::App* aug_g = group("augment", "data augmentation");
  l = leaf(aug_g, "negate", "negate one sentence", json::object(), wrap([&](Run& r) { augment_negate(r, in); }));
  l.app->add_option("--text", in.text)->required();
  l.app->add_option("--lang", in.lang);
  l.app->add_option("--rules", in.rules);
  l = leaf(aug_g, "lawfulness", "derive and negation-augment lawfulness data", json{{"negate", true}},
           wrap([&](Run& r) { augment_lawfulness(r, in); }));
  l.app->add_option("--corpus", in.corpus)->required();
  l.app->add_option("--queries", in.queries)->required();
  l.app->add_option("--lang", in.lang);
  l.app->add_option("--rules", in.rules);
  for (auto [name, task] : {std::pair{"nfsp", augment::PairTask::kNfsp}, std::pair{"nmsp", augment::PairTask::kNmsp}}) {
    l = leaf(aug_g, name, std::string("generate ") + name + " pairs", json{{"neg_ratio", augment::kDefaultNegRatio}},
             wrap([&, task](Run& r) { augment_pairs(r, in, task); }));
    l.app->add_option("--docs", in.docs)->required();
  }

  CLI::App* index_g = group("index", "BM25 inverted index");
  l = leaf(index_g, "build", "index a corpus", json::object(), wrap([&](Run& r) { index_build(r, in); }));
  l.app->add_option("--corpus", in.corpus)->required();

  CLI::App* rank_g = group("rank", "semantic rankers and ensembles");
  l = leaf(rank_g, "train", "train a ranker",
           merge(merge(model_keys(), bm25), json{{"kind", "attentive_cnn"},
                                                 {"lr", 0.05},
                                                 {"epochs", 10},
                                                 {"K", 4},
                                                 {"n_train", lexical::kDefaultTopNTrain},
                                                 {"min_count", 1}}),
           wrap([&](Run& r) { rank_train(r, in); }));
  l.app->add_option("--corpus", in.corpus)->required();
  l.app->add_option("--queries", in.queries)->required();
  const json rank_keys = merge(bm25, json{{"n_predict", lexical::kDefaultTopNPredict}, {"k", 1}, {"step", 0.01}});
  l = leaf(rank_g, "grid-alpha", "grid-search the ensemble weight", rank_keys,
           wrap([&](Run& r) { rank_grid(r, in); }));
  l.app->add_option("--model", in.model)->required();
  l.app->add_option("--corpus", in.corpus)->required();
  l.app->add_option("--queries", in.queries, "validation queries")->required();
  l = leaf(rank_g, "run", "rank queries", merge(rank_keys, json{{"alpha", "grid"}}),
           wrap([&](Run& r) { rank_run(r, in); }));
  l.app->add_option("--model", in.model)->required();
  l.app->add_option("--corpus", in.corpus)->required();
  l.app->add_option("--queries", in.queries)->required();
  l.app->add_option("--val", in.val, "validation queries for alpha \"grid\"");

  CLI::App* cls_g = group("classify", "lawfulness classification");
  l = leaf(cls_g, "train", "train the classifier",
           merge(model_keys(), json{{"lr", 0.05}, {"epochs", 10}, {"min_count", 1}}),
           wrap([&](Run& r) { classify_train(r, in); }));
  l.app->add_option("--data", in.data)->required();
  l = leaf(cls_g, "run", "classify labeled statements", json::object(), wrap([&](Run& r) { classify_run(r, in); }));
  l.app->add_option("--model", in.model)->required();
  l.app->add_option("--data", in.data)->required();

  CLI::App* inj_g = group("inject", "syntactic and semantic knowledge injection");
  const json body_keys{{"d", 16},       {"layers", 2},         {"heads", 2},
                       {"max_len", 64}, {"init_scale", 0.3},   {"use_positions", true}};
  l = leaf(inj_g, "hydra-pretrain", "fit attention heads to relation matrices",
           merge(body_keys, json{{"hydra_heads", 2}, {"head_scale", 0.3}, {"steps", 500}, {"lr", 0.02}}),
           wrap([&](Run& r) { hydra_pretrain(r, in); }));
  l.app->add_option("--targets", in.targets)->required();
  l.app->add_option("--body", in.body, "body checkpoint; a random body is created when absent");
  l = leaf(inj_g, "hydra-attach", "append pretrained heads as a new layer", json::object(),
           wrap([&](Run& r) { hydra_attach(r, in); }));
  l.app->add_option("--body", in.body)->required();
  l.app->add_option("--heads", in.heads)->required();
  l = leaf(inj_g, "tre-train", "train with needles at intermediate layers",
           merge(body_keys, json{{"layers", 4},
                                 {"positions", {2, 3, 4}},
                                 {"portions", {1.0 / 3, 1.0 / 3, 1.0 / 3}},
                                 {"epochs", 3},
                                 {"lr", 0.02}}),
           wrap([&](Run& r) { tre_train(r, in); }));
  l.app->add_option("--train", in.train)->required();
  l.app->add_option("--val", in.val);
  l.app->add_option("--body", in.body);
  l = leaf(inj_g, "tag-stats", "count BIOE tags", json::object(), wrap([&](Run& r) { tag_stats(r, in); }));
  l.app->add_option("--data", in.data)->required();
  l = leaf(inj_g, "attn-report", "attention weights per layer and head", json::object(),
           wrap([&](Run& r) { attn_report(r, in); }));
  l.app->add_option("--model", in.model)->required();
  l.app->add_option("--text", in.text)->required();

  CLI::App* emb_g = group("embed", "word-embedding metrics");
  l = leaf(emb_g, "lvc", "legal vocabulary coverage", json::object(), wrap([&](Run& r) { embed_lvc(r, in); }));
  l.app->add_option("--embeddings", in.embeddings)->required();
  l.app->add_option("--terms", in.terms)->required();
  l = leaf(emb_g, "leca", "legal embedding centroid agreement", json::object(),
           wrap([&](Run& r) { embed_leca(r, in); }));
  l.app->add_option("--embeddings", in.embeddings)->required();
  l.app->add_option("--terms", in.terms)->required();
  l.app->add_option("--sentences", in.sentences, "one sentence per line")->required();
  l = leaf(emb_g, "project", "export vectors for an external projection", json::object(),
           wrap([&](Run& r) { embed_project(r, in); }));
  l.app->add_option("--embeddings", in.embeddings)->required();
  l.app->add_option("--terms", in.terms, "terms labelled legal");
  l.app->add_option("--top-k", in.top_k);

  CLI::App* eval_g = group("eval", "evaluation metrics");
  l = leaf(eval_g, "prf2", "precision, recall and F2", json{{"k", 1}}, wrap([&](Run& r) { eval_prf2(r, in); }));
  l.app->add_option("--gold", in.gold, "comma-separated ids");
  l.app->add_option("--retrieved", in.retrieved, "comma-separated ids");
  l.app->add_option("--judgments", in.judgments, "JSONL judgments for macro F2@k");
  l = leaf(eval_g, "accuracy", "classification accuracy", json::object(),
           wrap([&](Run& r) { eval_accuracy(r, in); }));
  l.app->add_option("--data", in.data, "JSONL {pred, gold}");
  l.app->add_option("--correct", in.correct);
  l.app->add_option("--total", in.total);
  l = leaf(eval_g, "human", "aggregate human evaluation", json::object(), wrap([&](Run& r) { eval_human(r, in); }));
  l.app->add_option("--positives", in.positives, "comma-separated counts")->required();
  l.app->add_option("--s", in.s, "samples per rater")->required();

  CLI::App* self_g = group("selftest", "built-in checks");
  l = leaf(self_g, "gradcheck", "finite-difference check of every kernel", json::object(),
           [&](Run& r) { return selftest_gradcheck(r, in); });
  l.app->add_option("--instances", in.instances);
  l = leaf(self_g, "properties", "kernel identities against reference computations", json::object(),
           [&](Run& r) { return selftest_properties(r, in); });
  l.app->add_option("--instances", in.instances);

  std::vector<const char*> argv{"slab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }
  if (!action) {
    err << app.help();
    return kExitValidation;
  }
  try {
    return action();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const RuntimeError& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace slab::cli
