#include <cmath>

#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"
#include "slab/common/random.hpp"
#include "slab/inject/inject.hpp"

namespace slab::inject {

using nlohmann::json;

void SdoiMatrix::validate() const {
  const std::size_t m = n();
  if (m == 0) throw ValidationError("SDOI matrix over an empty sentence");
  if (matrix.rank() != 2 || matrix.rows() != m || matrix.cols() != m) {
    throw ValidationError("SDOI matrix must be " + std::to_string(m) + "x" + std::to_string(m));
  }
  for (double v : matrix.values()) {
    if (v != 0.0 && v != 1.0) throw ValidationError("SDOI matrix entries must be 0 or 1");
  }
}

std::vector<SdoiMatrix> load_sdoi(const std::filesystem::path& path) {
  std::vector<SdoiMatrix> out;
  for_each_jsonl(path, [&](const json& j, std::size_t line) {
    try {
      SdoiMatrix s;
      s.tokens = j.at("tokens").get<std::vector<std::string>>();
      s.matrix = Tensor::from_rows(j.at("matrix").get<std::vector<std::vector<double>>>());
      s.validate();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

void save_sdoi(const std::filesystem::path& path, const std::vector<SdoiMatrix>& rows) {
  std::vector<json> lines;
  for (const auto& s : rows) {
    json m = json::array();
    for (std::size_t r = 0; r < s.n(); ++r) {
      const auto row = s.matrix.row(r);
      m.push_back(std::vector<int>(row.begin(), row.end()));
    }
    lines.push_back(json{{"tokens", s.tokens}, {"matrix", m}});
  }
  write_jsonl(path, lines);
}

HydraHead HydraHead::random(std::size_t d, std::size_t head_dim, Rng& rng, double scale) {
  return {Tensor::uniform({d, head_dim}, rng, scale), Tensor::uniform({d, head_dim}, rng, scale)};
}

Var hydra_scores(tc::ParamBinder& bind, Var hidden, const HydraHead& head) {
  if (hidden.value().rank() != 2 || hidden.value().cols() != head.d()) {
    throw ValidationError("hidden states of width " + std::to_string(hidden.value().cols()) +
                          " do not match head input size " + std::to_string(head.d()));
  }
  Var q = tc::matmul(hidden, bind(head.wq));
  Var k = tc::matmul(hidden, bind(head.wk));
  return tc::scale(tc::matmul(q, tc::transpose(k)), 1.0 / std::sqrt(static_cast<double>(head.head_dim())));
}

Tensor hydra_scores(const Tensor& hidden, const HydraHead& head) {
  tc::Tape tape;
  tc::ParamBinder bind(tape, false);
  return hydra_scores(bind, tape.constant(hidden), head).value();
}

namespace {

void check_inputs(const std::vector<Tensor>& hidden, const std::vector<SdoiMatrix>& targets,
                  const std::vector<HydraHead>& heads) {
  if (hidden.size() != targets.size()) {
    throw ValidationError(std::to_string(hidden.size()) + " hidden-state samples for " + std::to_string(targets.size()) +
                          " targets");
  }
  if (targets.empty()) throw ValidationError("HYDRA pretraining needs at least one target");
  if (heads.empty()) throw ValidationError("HYDRA pretraining needs at least one head");
  for (const auto& h : heads) {
    if (h.wq.shape() != h.wk.shape() || h.wq.rank() != 2) throw ValidationError("head W_q and W_k shapes differ");
  }
  for (std::size_t s = 0; s < targets.size(); ++s) {
    targets[s].validate();
    if (hidden[s].rank() != 2 || hidden[s].rows() != targets[s].n()) {
      throw ValidationError("sample " + std::to_string(s) + ": " + std::to_string(hidden[s].rows()) +
                            " hidden rows for a " + std::to_string(targets[s].n()) + "-token target");
    }
  }
}

Var total_loss(tc::ParamBinder& bind, tc::Tape& tape, const std::vector<Tensor>& hidden,
               const std::vector<SdoiMatrix>& targets, const std::vector<HydraHead>& heads) {
  std::vector<Var> parts;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    Var h = tape.constant(hidden[s]);
    Var t = tape.constant(targets[s].matrix);
    for (const auto& head : heads) parts.push_back(tc::mse_matrix(hydra_scores(bind, h, head), t));
  }
  return tc::scale(tc::sum(tc::stack(parts)), 1.0 / static_cast<double>(parts.size()));
}

}  // namespace

double hydra_loss(const std::vector<Tensor>& hidden_states, const std::vector<SdoiMatrix>& targets,
                  const std::vector<HydraHead>& heads) {
  check_inputs(hidden_states, targets, heads);
  tc::Tape tape;
  tc::ParamBinder bind(tape, false);
  return total_loss(bind, tape, hidden_states, targets, heads).value()[0];
}

HydraTrace hydra_pretrain(const std::vector<Tensor>& hidden_states, const std::vector<SdoiMatrix>& targets,
                          std::vector<HydraHead>& heads, const HydraConfig& config) {
  check_inputs(hidden_states, targets, heads);
  if (!(config.lr > 0.0)) throw ValidationError("learning rate must be positive");
  std::vector<Tensor*> params;
  for (auto& h : heads) {
    params.push_back(&h.wq);
    params.push_back(&h.wk);
  }
  std::vector<Tensor> m1, m2;
  for (const Tensor* p : params) {
    m1.emplace_back(p->shape());
    m2.emplace_back(p->shape());
  }
  HydraTrace trace;
  for (std::size_t step = 0; step < config.steps; ++step) {
    tc::Tape tape;
    tc::ParamBinder bind(tape, true);
    Var loss = total_loss(bind, tape, hidden_states, targets, heads);
    trace.loss.push_back(loss.value()[0]);
    tape.backward(loss);
    // Adam; the loss curvature grows with the fourth power of the hidden-state
    // scale, which a fixed plain step cannot absorb.
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(config.beta1, t), c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Tensor& g = bind(*params[p]).grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        m1[p][i] = config.beta1 * m1[p][i] + (1.0 - config.beta1) * g[i];
        m2[p][i] = config.beta2 * m2[p][i] + (1.0 - config.beta2) * g[i] * g[i];
        (*params[p])[i] -= config.lr * (m1[p][i] / c1) / (std::sqrt(m2[p][i] / c2) + 1e-12);
      }
    }
  }
  trace.final_loss = hydra_loss(hidden_states, targets, heads);
  if (!std::isfinite(trace.final_loss)) throw RuntimeError("HYDRA pretraining diverged; lower the learning rate");
  return trace;
}

std::vector<Tensor> body_states(const enc::TransformerEncoder& body, const std::vector<SdoiMatrix>& targets) {
  std::vector<Tensor> out;
  for (const auto& t : targets) {
    tc::Tape tape;
    tc::ParamBinder bind(tape, false);
    out.push_back(enc::transformer_forward(bind, t.tokens, body).hidden.back().value());
  }
  return out;
}

HydraTrace hydra_pretrain(const enc::TransformerEncoder& body, const std::vector<SdoiMatrix>& targets,
                          std::vector<HydraHead>& heads, const HydraConfig& config) {
  return hydra_pretrain(body_states(body, targets), targets, heads, config);
}

enc::TransformerEncoder hydra_attach(const enc::TransformerEncoder& body, const std::vector<HydraHead>& heads) {
  const std::size_t d = body.d();
  if (heads.empty()) throw ValidationError("no heads to attach");
  const std::size_t dh = heads.front().head_dim();
  for (const auto& h : heads) {
    if (h.d() != d || h.head_dim() != dh || h.wk.shape() != h.wq.shape()) {
      throw ValidationError("head shape [" + std::to_string(h.d()) + "x" + std::to_string(h.head_dim()) +
                            "] does not fit a body of width " + std::to_string(d));
    }
  }
  if (dh * heads.size() != d) {
    throw ValidationError(std::to_string(heads.size()) + " heads of width " + std::to_string(dh) +
                          " do not span the body width " + std::to_string(d));
  }
  enc::SelfAttentionLayer layer;
  layer.n_heads = heads.size();
  layer.wq = Tensor({d, d});
  layer.wk = Tensor({d, d});
  for (std::size_t h = 0; h < heads.size(); ++h) {
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < dh; ++c) {
        layer.wq.at(r, h * dh + c) = heads[h].wq.at(r, c);
        layer.wk.at(r, h * dh + c) = heads[h].wk.at(r, c);
      }
    }
  }
  layer.wv = Tensor({d, d});
  layer.wo = Tensor({d, d});
  enc::TransformerEncoder out = body;
  out.layers.push_back(std::move(layer));
  return out;
}

enc::TransformerEncoder hydra_detach(const enc::TransformerEncoder& model) {
  if (model.layers.empty()) throw ValidationError("model has no layer to detach");
  enc::TransformerEncoder out = model;
  out.layers.pop_back();
  return out;
}

std::vector<HydraHead> heads_of(const enc::SelfAttentionLayer& layer) {
  layer.validate();
  const std::size_t d = layer.d(), dh = layer.head_dim();
  std::vector<HydraHead> out;
  for (std::size_t h = 0; h < layer.n_heads; ++h) {
    HydraHead head{Tensor({d, dh}), Tensor({d, dh})};
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < dh; ++c) {
        head.wq.at(r, c) = layer.wq.at(r, h * dh + c);
        head.wk.at(r, c) = layer.wk.at(r, h * dh + c);
      }
    }
    out.push_back(std::move(head));
  }
  return out;
}

std::size_t parameter_count(const enc::TransformerEncoder& model) {
  std::size_t n = model.embeddings.matrix().size() + model.positions.size();
  for (const auto& l : model.layers) n += l.wq.size() + l.wk.size() + l.wv.size() + l.wo.size();
  return n;
}

}  // namespace slab::inject
