#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "slab/encoders/encoders.hpp"

namespace slab::inject {

using tc::Tensor;
using tc::Var;

// ---- HYDRA -----------------------------------------------------------------

// Binary token-token relation matrix over a tokenized sentence.
struct SdoiMatrix {
  std::vector<std::string> tokens;
  Tensor matrix;  // [n×n], entries 0 or 1

  std::size_t n() const { return tokens.size(); }
  void validate() const;
};

// JSONL rows {"tokens":[...], "matrix":[[0,1,...],...]}.
std::vector<SdoiMatrix> load_sdoi(const std::filesystem::path& path);
void save_sdoi(const std::filesystem::path& path, const std::vector<SdoiMatrix>& rows);

struct HydraHead {
  Tensor wq, wk;  // [d × d_head]

  std::size_t d() const { return wq.rows(); }
  std::size_t head_dim() const { return wq.cols(); }
  static HydraHead random(std::size_t d, std::size_t head_dim, Rng& rng, double scale);
};

// (H W_q)(H W_k)ᵀ / sqrt(d_head), no softmax.
Var hydra_scores(tc::ParamBinder& bind, Var hidden, const HydraHead& head);
Tensor hydra_scores(const Tensor& hidden, const HydraHead& head);

struct HydraConfig {
  std::size_t steps = 500;
  double lr = 0.02;  // Adam
  double beta1 = 0.9, beta2 = 0.999;
};

struct HydraTrace {
  std::vector<double> loss;  // before each step, mean over samples and heads
  double final_loss = 0.0;   // after the last step
};

// Full-batch Adam on mean mse_matrix(M^h, M*) over every
// (sample, head) pair. Only the head tensors change.
HydraTrace hydra_pretrain(const std::vector<Tensor>& hidden_states, const std::vector<SdoiMatrix>& targets,
                          std::vector<HydraHead>& heads, const HydraConfig& config);
// Hidden states are the frozen body's last layer over each target's tokens.
std::vector<Tensor> body_states(const enc::TransformerEncoder& body, const std::vector<SdoiMatrix>& targets);
HydraTrace hydra_pretrain(const enc::TransformerEncoder& body, const std::vector<SdoiMatrix>& targets,
                          std::vector<HydraHead>& heads, const HydraConfig& config);

double hydra_loss(const std::vector<Tensor>& hidden_states, const std::vector<SdoiMatrix>& targets,
                  const std::vector<HydraHead>& heads);

// Appends one self-attention layer whose query/key columns are the heads'
// W_q/W_k side by side and whose value/output projections are zero.
enc::TransformerEncoder hydra_attach(const enc::TransformerEncoder& body, const std::vector<HydraHead>& heads);
enc::TransformerEncoder hydra_detach(const enc::TransformerEncoder& model);
std::vector<HydraHead> heads_of(const enc::SelfAttentionLayer& layer);
std::size_t parameter_count(const enc::TransformerEncoder& model);

// ---- BIOE / TRE --------------------------------------------------------------

// Index order is the needle output order.
enum class Tag : std::uint8_t { O, BR, IR, ER, BE, IE, EE, BU, IU, EU };
inline constexpr std::size_t kTagCount = 10;
inline constexpr std::size_t kLevels = 3;

std::string_view tag_name(Tag t);
// "-" is read as O.
Tag parse_tag(std::string_view s);

struct BioeSample {
  std::vector<std::string> tokens;
  std::array<std::vector<Tag>, kLevels> levels;

  // Per level: I-x and E-x need an open x segment, B-x needs none open, and
  // every segment is closed. O may interrupt an open segment.
  void validate() const;
};

// TSV: token, L1, L2, L3 per line; blank line between samples.
std::vector<BioeSample> parse_bioe(const std::string& text);
std::vector<BioeSample> load_bioe(const std::filesystem::path& path);
std::string format_bioe(const std::vector<BioeSample>& samples);

struct Segment {
  char kind;  // 'R', 'E' or 'U'
  std::size_t begin, end;  // B and E token indices
  friend auto operator<=>(const Segment&, const Segment&) = default;
};

// B-x (I-x | O)* E-x runs; O gaps are allowed inside a segment, stray tags
// are ignored.
std::vector<Segment> segments(const std::vector<Tag>& level);

std::map<std::string, std::size_t> tag_stats(const std::vector<BioeSample>& data);

struct InjectionConfig {
  std::vector<std::size_t> positions;  // 1-based layer indices, strictly increasing
  std::vector<double> portions;

  void validate(std::size_t depth) const;
};

// Needle n (n < max(3, |positions|)) reads the output of layer
// positions[n % P] and predicts level n % 3.
struct Needle {
  std::size_t slot = 0;   // index into positions
  std::size_t level = 0;
  Tensor W;  // [d × kTagCount]
  Tensor b;  // [kTagCount]
};

std::vector<Needle> make_needles(const InjectionConfig& config, std::size_t d);

// Mean token cross-entropy of softmax(Z W + b) against gold.
Var tre_needle_loss(tc::ParamBinder& bind, Var z, const std::vector<Tag>& gold, const Tensor& W, const Tensor& b);
double tre_needle_loss(const Tensor& z, const std::vector<Tag>& gold, const Tensor& W, const Tensor& b);

struct TreLosses {
  std::vector<double> needle;  // per needle
  std::vector<double> slot;    // per position: mean of its needles
  double total = 0.0;          // Σ portions[j] · slot[j]
};

// Forward pass of one sample; `total` is differentiable.
struct TreForward {
  Var total;
  std::vector<Var> needle_losses;
  std::vector<Var> slot_losses;  // per position
  std::vector<Var> logits;  // per needle, [M × kTagCount]
};
TreForward tre_forward(tc::ParamBinder& bind, const enc::TransformerEncoder& model, const std::vector<Needle>& needles,
                       const InjectionConfig& config, const BioeSample& sample);
TreLosses tre_losses(const enc::TransformerEncoder& model, const std::vector<Needle>& needles,
                     const InjectionConfig& config, const BioeSample& sample);

struct Prf1 {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t gold = 0, predicted = 0, correct = 0;
};

struct TreEval {
  double token_accuracy = 0.0;  // over all levels
  std::array<Prf1, kLevels> level;
  Prf1 overall;  // segments pooled over levels
};

// Each level is read from its deepest needle.
std::array<std::vector<Tag>, kLevels> tre_predict(const enc::TransformerEncoder& model,
                                                  const std::vector<Needle>& needles, const InjectionConfig& config,
                                                  const std::vector<std::string>& tokens);
TreEval tre_evaluate(const enc::TransformerEncoder& model, const std::vector<Needle>& needles,
                     const InjectionConfig& config, const std::vector<BioeSample>& data);

struct TreTrainConfig {
  std::size_t epochs = 10;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

struct TreStep {
  double total;
  std::vector<double> slot;
};

struct TreResult {
  std::vector<double> epoch_loss;
  std::vector<TreStep> steps;   // every step's per-position losses and total
  std::vector<Needle> needles;  // discarded by callers before saving
  TreEval train_eval, val_eval;
};

// Per-sample gradient descent over shuffled data; every body tensor and the
// needles are updated.
TreResult tre_train(enc::TransformerEncoder& model, const InjectionConfig& config, const std::vector<BioeSample>& train,
                    const std::vector<BioeSample>& val, const TreTrainConfig& tc_config);

// [layer][head] row-stochastic attention matrices for one input.
std::vector<std::vector<Tensor>> attention_weights_report(const enc::TransformerEncoder& model,
                                                          const std::vector<std::string>& tokens);

nlohmann::json to_json(const Prf1& p);
nlohmann::json to_json(const TreEval& e);
nlohmann::json to_json(const InjectionConfig& c);

}  // namespace slab::inject
