#include "slab/evalkit/evalkit.hpp"

#include <cstdio>

#include "slab/common/error.hpp"
#include "slab/common/jsonl.hpp"

namespace slab::eval {

using nlohmann::json;

Prf prf2(const std::set<std::string>& gold, const std::set<std::string>& retrieved) {
  std::size_t hit = 0;
  for (const auto& r : retrieved) hit += gold.count(r);
  Prf out;
  if (!retrieved.empty()) out.precision = static_cast<double>(hit) / static_cast<double>(retrieved.size());
  if (!gold.empty()) out.recall = static_cast<double>(hit) / static_cast<double>(gold.size());
  if (out.precision > 0.0 || out.recall > 0.0) {
    out.f2 = 5.0 * out.precision * out.recall / (4.0 * out.precision + out.recall);
  }
  return out;
}

Prf macro_f2(std::span<const RetrievalJudgment> judgments, std::size_t k) {
  if (judgments.empty()) throw ValidationError("macro_f2 needs at least one judgment");
  if (k == 0) throw ValidationError("macro_f2 cutoff k must be at least 1");
  Prf sum;
  for (const auto& j : judgments) {
    std::set<std::string> top;
    for (std::size_t i = 0; i < j.retrieved.size() && i < k; ++i) {
      if (!top.insert(j.retrieved[i]).second) {
        throw ValidationError("query " + j.qid + " retrieves " + j.retrieved[i] + " twice");
      }
    }
    const Prf p = prf2(j.gold, top);
    sum.precision += p.precision;
    sum.recall += p.recall;
    sum.f2 += p.f2;
  }
  const double n = static_cast<double>(judgments.size());
  return {sum.precision / n, sum.recall / n, sum.f2 / n};
}

double accuracy(const std::vector<bool>& preds, const std::vector<bool>& golds) {
  if (preds.size() != golds.size()) {
    throw ValidationError("accuracy: " + std::to_string(preds.size()) + " predictions for " +
                          std::to_string(golds.size()) + " labels");
  }
  if (preds.empty()) throw ValidationError("accuracy of an empty set is undefined");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == golds[i];
  return static_cast<double>(ok) / static_cast<double>(preds.size());
}

double aggregate_human_eval(std::span<const int> positives, int s) {
  if (s < 1) throw ValidationError("human eval: s must be at least 1");
  if (positives.empty()) throw ValidationError("human eval: no evaluators");
  double total = 0.0;
  for (int p : positives) {
    if (p < 0 || p > s) throw ValidationError("human eval: positive count " + std::to_string(p) + " outside [0, " + std::to_string(s) + "]");
    total += static_cast<double>(p) / static_cast<double>(s);
  }
  return total / static_cast<double>(positives.size());
}

std::vector<RetrievalJudgment> load_judgments(const std::filesystem::path& path) {
  std::vector<RetrievalJudgment> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    RetrievalJudgment r;
    r.qid = j.value("qid", std::to_string(out.size()));
    for (const auto& g : j.at("gold")) r.gold.insert(g.get<std::string>());
    for (const auto& x : j.at("retrieved")) r.retrieved.push_back(x.get<std::string>());
    out.push_back(std::move(r));
  });
  return out;
}

json to_json(const RetrievalJudgment& j) { return json{{"qid", j.qid}, {"gold", j.gold}, {"retrieved", j.retrieved}}; }

json to_json(const Prf& p) { return json{{"precision", p.precision}, {"recall", p.recall}, {"f2", p.f2}}; }

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  return s;
}

}  // namespace slab::eval
