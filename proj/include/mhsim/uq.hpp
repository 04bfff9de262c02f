#pragma once

// Entropy decomposition of repeated binary predictions and cross-model rank
// normalisation. All entropies are in nats.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ranges>
#include <vector>

#include "mhsim/error.hpp"

namespace mhsim {

struct UncertaintyEstimate {
  double predictive = 0.0;  // H(mean of group means)
  double aleatoric = 0.0;   // mean over groups of H(group mean)
  double epistemic = 0.0;   // predictive - aleatoric
  double mean_prediction = 0.0;
  int n_groups = 0;
};

// H(p) = -p ln p - (1-p) ln(1-p), with 0 ln 0 = 0.
inline double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary_entropy: probability outside [0, 1]");
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log(p) - (1.0 - p) * std::log1p(-p);
}

// How the 25 verdicts of one (backend, mother, week) cell are grouped.
//   kGrouped: one group per prompt template (repeats within a wording).
//   kFlat:    every verdict its own group; aleatoric is then identically 0.
enum class Grouping { kGrouped, kFlat };

// `groups` is a range of ranges of binary verdicts (0/1). Empty groups are
// skipped; at least one non-empty group is required.
template <class Groups>
UncertaintyEstimate decompose(const Groups& groups) {
  std::vector<double> means;
  for (const auto& group : groups) {
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& v : group) {
      if (v != 0 && v != 1) throw DomainError("decompose: verdicts must be binary");
      sum += static_cast<double>(v);
      ++n;
    }
    if (n > 0) means.push_back(sum / static_cast<double>(n));
  }
  if (means.empty()) throw InsufficientDataError("decompose: no verdicts in any group");

  UncertaintyEstimate est;
  est.n_groups = static_cast<int>(means.size());
  double mean_sum = 0.0;
  double entropy_sum = 0.0;
  for (double m : means) {
    mean_sum += m;
    entropy_sum += binary_entropy(m);
  }
  est.mean_prediction = std::clamp(mean_sum / static_cast<double>(means.size()), 0.0, 1.0);
  est.predictive = binary_entropy(est.mean_prediction);
  est.aleatoric = entropy_sum / static_cast<double>(means.size());
  est.epistemic = est.predictive - est.aleatoric;
  return est;
}

// u'_j = rank(u_j) / M with ascending ranks from 1 and mean ranks for ties.
inline std::vector<double> rank_normalize(const std::vector<double>& values) {
  if (values.empty()) throw InsufficientDataError("rank_normalize: empty input");
  for (double v : values) {
    if (std::isnan(v)) throw DomainError("rank_normalize: NaN input");
  }
  const std::size_t m = values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> out(m);
  std::size_t i = 0;
  while (i < m) {
    std::size_t j = i;
    while (j + 1 < m && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = rank / static_cast<double>(m);
    i = j + 1;
  }
  return out;
}

}  // namespace mhsim
