#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace slab::eval {

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f2 = 0.0;
};

// P = |gold ∩ retrieved| / |retrieved|, R = ... / |gold|, F2 = 5PR / (4P + R).
// Empty denominators give 0.
Prf prf2(const std::set<std::string>& gold, const std::set<std::string>& retrieved);

struct RetrievalJudgment {
  std::string qid;
  std::set<std::string> gold;
  std::vector<std::string> retrieved;  // ranked, no duplicates
};

// Per-query prf2 on the top-k retrieved ids, averaged arithmetically.
Prf macro_f2(std::span<const RetrievalJudgment> judgments, std::size_t k);

double accuracy(const std::vector<bool>& preds, const std::vector<bool>& golds);

// (1/n) Σ p_i / s
double aggregate_human_eval(std::span<const int> positives, int s);

// {"qid","gold":[...],"retrieved":[...]} per line.
std::vector<RetrievalJudgment> load_judgments(const std::filesystem::path& path);
nlohmann::json to_json(const RetrievalJudgment& j);
nlohmann::json to_json(const Prf& p);

// Fixed 4-decimal rounding with trailing zeros trimmed (keeps one decimal).
std::string format_metric(double v);

}  // namespace slab::eval
