#include "slab/tensorcore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "slab/common/error.hpp"

namespace slab::tc {

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double m = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> sparsemax(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  // Working relative to the max makes exactly representable shifts of x
  // give bit-identical output.
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - m;
  std::sort(z.begin(), z.end(), std::greater<>());

  // Support size k = max{k : 1 + k z_(k) > sum_{j<=k} z_(j)}.
  double cumulative = 0.0;
  double support_sum = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    cumulative += z[i];
    if (1.0 + static_cast<double>(i + 1) * z[i] > cumulative) {
      k = i + 1;
      support_sum = cumulative;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(k);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max((x[i] - m) - tau, 0.0);
  return out;
}

double ce_negsample(double y_pos, std::span<const double> y_negs) {
  double m = y_pos;
  for (double v : y_negs) m = std::max(m, v);
  if (m == y_pos) {
    // log1p keeps precision when the positive dominates and the loss is tiny.
    double rest = 0.0;
    for (double v : y_negs) rest += std::exp(v - y_pos);
    return std::log1p(rest);
  }
  double total = std::exp(y_pos - m);
  for (double v : y_negs) total += std::exp(v - m);
  return std::log(total) + m - y_pos;
}

double softargmax(std::span<const double> x, double beta) {
  if (!(beta >= 1.0)) throw ValidationError("softargmax needs beta >= 1");
  std::vector<double> scaled(x.begin(), x.end());
  for (double& v : scaled) v *= beta;
  const auto p = softmax(scaled);
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) out += p[i] * static_cast<double>(i);
  return out;
}

}  // namespace slab::tc
