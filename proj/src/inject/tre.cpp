#include <algorithm>
#include <cmath>
#include <numeric>

#include "slab/common/error.hpp"
#include "slab/common/random.hpp"
#include "slab/inject/inject.hpp"

namespace slab::inject {

using nlohmann::json;

void InjectionConfig::validate(std::size_t depth) const {
  if (positions.empty()) throw ValidationError("injection config needs at least one position");
  if (positions.size() != portions.size()) {
    throw ValidationError(std::to_string(positions.size()) + " positions but " + std::to_string(portions.size()) +
                          " portions");
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] < 1 || positions[i] > depth) {
      throw ValidationError("injection position " + std::to_string(positions[i]) + " outside layers 1.." +
                            std::to_string(depth));
    }
    if (i && positions[i] <= positions[i - 1]) throw ValidationError("injection positions must strictly increase");
    if (!(portions[i] >= 0.0) || !std::isfinite(portions[i])) throw ValidationError("loss portions must be >= 0");
  }
  const double total = std::accumulate(portions.begin(), portions.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("loss portions must sum to 1");
}

std::vector<Needle> make_needles(const InjectionConfig& config, std::size_t d) {
  const std::size_t p = config.positions.size();
  std::vector<Needle> out;
  for (std::size_t n = 0; n < std::max(kLevels, p); ++n) {
    out.push_back({n % p, n % kLevels, Tensor({d, kTagCount}), Tensor({kTagCount})});
  }
  return out;
}

namespace {

std::vector<std::size_t> tag_ids(const std::vector<Tag>& tags) {
  std::vector<std::size_t> out;
  for (Tag t : tags) out.push_back(static_cast<std::size_t>(t));
  return out;
}

Var needle_logits(tc::ParamBinder& bind, Var z, const Tensor& W, const Tensor& b) {
  if (W.rank() != 2 || W.cols() != kTagCount || b.size() != kTagCount || z.value().cols() != W.rows()) {
    throw ValidationError("needle must map the hidden width to " + std::to_string(kTagCount) + " tags");
  }
  return tc::add_row(tc::matmul(z, bind(W)), bind(b));
}

}  // namespace

Var tre_needle_loss(tc::ParamBinder& bind, Var z, const std::vector<Tag>& gold, const Tensor& W, const Tensor& b) {
  if (z.value().rank() != 2 || z.value().rows() != gold.size()) {
    throw ValidationError(std::to_string(gold.size()) + " gold tags for " + std::to_string(z.value().rows()) +
                          " hidden rows");
  }
  const auto ids = tag_ids(gold);
  return tc::row_cross_entropy(needle_logits(bind, z, W, b), ids);
}

double tre_needle_loss(const Tensor& z, const std::vector<Tag>& gold, const Tensor& W, const Tensor& b) {
  tc::Tape tape;
  tc::ParamBinder bind(tape, false);
  return tre_needle_loss(bind, tape.constant(z), gold, W, b).value()[0];
}

TreForward tre_forward(tc::ParamBinder& bind, const enc::TransformerEncoder& model, const std::vector<Needle>& needles,
                       const InjectionConfig& config, const BioeSample& sample) {
  if (sample.tokens.size() > model.max_len() && model.use_positions) {
    throw ValidationError("sample of " + std::to_string(sample.tokens.size()) + " tokens exceeds max_len " +
                          std::to_string(model.max_len()));
  }
  const auto states = enc::transformer_forward(bind, sample.tokens, model);
  if (states.hidden.front().value().rows() != sample.tokens.size()) {
    throw ValidationError("sample tokens were dropped by the vocabulary; use a zero-vector OOV policy");
  }
  TreForward out;
  std::vector<std::vector<Var>> per_slot(config.positions.size());
  for (const auto& n : needles) {
    Var z = states.hidden.at(config.positions.at(n.slot));
    Var logits = needle_logits(bind, z, n.W, n.b);
    const auto ids = tag_ids(sample.levels[n.level]);
    Var loss = tc::row_cross_entropy(logits, ids);
    out.logits.push_back(logits);
    out.needle_losses.push_back(loss);
    per_slot[n.slot].push_back(loss);
  }
  std::vector<Var> weighted;
  for (std::size_t j = 0; j < per_slot.size(); ++j) {
    if (per_slot[j].empty()) throw ValidationError("injection position without a needle");
    Var mean = tc::scale(tc::sum(tc::stack(per_slot[j])), 1.0 / static_cast<double>(per_slot[j].size()));
    out.slot_losses.push_back(mean);
    weighted.push_back(tc::scale(mean, config.portions[j]));
  }
  out.total = tc::sum(tc::stack(weighted));
  return out;
}

TreLosses tre_losses(const enc::TransformerEncoder& model, const std::vector<Needle>& needles,
                     const InjectionConfig& config, const BioeSample& sample) {
  tc::Tape tape;
  tc::ParamBinder bind(tape, false);
  const auto fwd = tre_forward(bind, model, needles, config, sample);
  TreLosses out;
  for (const Var& v : fwd.needle_losses) out.needle.push_back(v.value()[0]);
  for (const Var& v : fwd.slot_losses) out.slot.push_back(v.value()[0]);
  out.total = fwd.total.value()[0];
  return out;
}

namespace {

// Deepest needle for each level.
std::array<std::size_t, kLevels> reading_needles(const std::vector<Needle>& needles, const InjectionConfig& config) {
  std::array<std::size_t, kLevels> pick{};
  std::array<bool, kLevels> seen{};
  for (std::size_t i = 0; i < needles.size(); ++i) {
    const std::size_t l = needles[i].level;
    if (!seen[l] || config.positions[needles[i].slot] > config.positions[needles[pick[l]].slot]) pick[l] = i;
    seen[l] = true;
  }
  for (bool s : seen) {
    if (!s) throw ValidationError("every BIOE level needs a needle");
  }
  return pick;
}

void add_counts(Prf1& p, const std::vector<Segment>& gold, const std::vector<Segment>& pred) {
  p.gold += gold.size();
  p.predicted += pred.size();
  for (const auto& s : pred) p.correct += std::binary_search(gold.begin(), gold.end(), s) ? 1 : 0;
}

void finish(Prf1& p) {
  p.precision = p.predicted ? static_cast<double>(p.correct) / static_cast<double>(p.predicted) : 0.0;
  p.recall = p.gold ? static_cast<double>(p.correct) / static_cast<double>(p.gold) : 0.0;
  p.f1 = p.precision + p.recall > 0.0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
}

}  // namespace

std::array<std::vector<Tag>, kLevels> tre_predict(const enc::TransformerEncoder& model,
                                                  const std::vector<Needle>& needles, const InjectionConfig& config,
                                                  const std::vector<std::string>& tokens) {
  const auto pick = reading_needles(needles, config);
  tc::Tape tape;
  tc::ParamBinder bind(tape, false);
  const auto states = enc::transformer_forward(bind, tokens, model);
  std::array<std::vector<Tag>, kLevels> out;
  for (std::size_t l = 0; l < kLevels; ++l) {
    const Needle& n = needles[pick[l]];
    const Tensor logits = needle_logits(bind, states.hidden.at(config.positions.at(n.slot)), n.W, n.b).value();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const auto row = logits.row(r);
      out[l].push_back(static_cast<Tag>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

TreEval tre_evaluate(const enc::TransformerEncoder& model, const std::vector<Needle>& needles,
                     const InjectionConfig& config, const std::vector<BioeSample>& data) {
  TreEval ev;
  std::size_t correct = 0, total = 0;
  for (const auto& s : data) {
    const auto pred = tre_predict(model, needles, config, s.tokens);
    for (std::size_t l = 0; l < kLevels; ++l) {
      for (std::size_t i = 0; i < s.tokens.size(); ++i) correct += pred[l][i] == s.levels[l][i] ? 1 : 0;
      total += s.tokens.size();
      auto gold = segments(s.levels[l]);
      auto got = segments(pred[l]);
      std::sort(gold.begin(), gold.end());
      add_counts(ev.level[l], gold, got);
      add_counts(ev.overall, gold, got);
    }
  }
  for (auto& p : ev.level) finish(p);
  finish(ev.overall);
  ev.token_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return ev;
}

TreResult tre_train(enc::TransformerEncoder& model, const InjectionConfig& config, const std::vector<BioeSample>& train,
                    const std::vector<BioeSample>& val, const TreTrainConfig& tc_config) {
  config.validate(model.layers.size());
  if (train.empty()) throw ValidationError("TRE training data is empty");
  if (!(tc_config.lr > 0.0)) throw ValidationError("learning rate must be positive");
  for (const auto& s : train) s.validate();
  for (const auto& s : val) s.validate();
  TreResult result;
  result.needles = make_needles(config, model.d());
  Rng rng(tc_config.seed);
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < tc_config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t idx : order) {
      tc::Tape tape;
      tc::ParamBinder bind(tape, true);
      const auto fwd = tre_forward(bind, model, result.needles, config, train[idx]);
      TreStep step{fwd.total.value()[0], {}};
      for (const Var& v : fwd.slot_losses) step.slot.push_back(v.value()[0]);
      sum += step.total;
      result.steps.push_back(std::move(step));
      tape.backward(fwd.total);
      bind.sgd_step(tc_config.lr);
    }
    const double mean = sum / static_cast<double>(train.size());
    if (!std::isfinite(mean)) throw RuntimeError("TRE training diverged; lower the learning rate");
    result.epoch_loss.push_back(mean);
  }
  result.train_eval = tre_evaluate(model, result.needles, config, train);
  if (!val.empty()) result.val_eval = tre_evaluate(model, result.needles, config, val);
  return result;
}

std::vector<std::vector<Tensor>> attention_weights_report(const enc::TransformerEncoder& model,
                                                          const std::vector<std::string>& tokens) {
  tc::Tape tape;
  tc::ParamBinder bind(tape, false);
  const auto states = enc::transformer_forward(bind, tokens, model);
  std::vector<std::vector<Tensor>> out;
  for (const auto& layer : states.attention) {
    out.emplace_back();
    for (const Var& w : layer) out.back().push_back(w.value());
  }
  return out;
}

json to_json(const Prf1& p) {
  return json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
              {"gold", p.gold},           {"predicted", p.predicted}, {"correct", p.correct}};
}

json to_json(const TreEval& e) {
  json levels = json::array();
  for (const auto& l : e.level) levels.push_back(to_json(l));
  return json{{"token_accuracy", e.token_accuracy}, {"levels", levels}, {"overall", to_json(e.overall)}};
}

json to_json(const InjectionConfig& c) { return json{{"positions", c.positions}, {"portions", c.portions}}; }

}  // namespace slab::inject
