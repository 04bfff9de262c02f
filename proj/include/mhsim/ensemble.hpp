#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mhsim/error.hpp"
#include "mhsim/uq.hpp"

namespace mhsim {

struct ModelCell {
  std::string backend_id;
  double mean_prediction = 0.0;  // p̄_j
  double epistemic_uncertainty = 0.0;  // u_j
  double rank_normalized = 1.0;  // u'_j in (0, 1]
};

enum class EnsembleMethod { kDirectAverage, kUncertaintyWeighted, kLowestUncertainty };

inline constexpr std::array<EnsembleMethod, 3> kEnsembleMethods = {
    EnsembleMethod::kDirectAverage, EnsembleMethod::kUncertaintyWeighted, EnsembleMethod::kLowestUncertainty};

inline std::string_view method_name(EnsembleMethod m) {
  switch (m) {
    case EnsembleMethod::kDirectAverage: return "direct_average";
    case EnsembleMethod::kUncertaintyWeighted: return "uncertainty_weighted";
    case EnsembleMethod::kLowestUncertainty: return "lowest_uncertainty";
  }
  return "?";
}

inline std::optional<EnsembleMethod> parse_method(std::string_view text) {
  for (auto m : kEnsembleMethods) {
    if (method_name(m) == text) return m;
  }
  return std::nullopt;
}

inline constexpr double kBinarizeThreshold = 0.5;

inline int binarize(double probability) { return probability >= kBinarizeThreshold ? 1 : 0; }

struct EnsemblePrediction {
  EnsembleMethod method = EnsembleMethod::kDirectAverage;
  double probability = 0.0;
  int binarized = 0;
  std::map<std::string, double> contributing_weights;
};

// Builds cells for one (mother, week) and fills u'_j by rank normalisation.
inline std::vector<ModelCell> make_cells(const std::vector<std::string>& backend_ids,
                                         const std::vector<double>& means,
                                         const std::vector<double>& epistemic) {
  if (backend_ids.size() != means.size() || means.size() != epistemic.size()) {
    throw ConfigError("make_cells: length mismatch");
  }
  const auto ranks = rank_normalize(epistemic);
  std::vector<ModelCell> cells;
  for (std::size_t j = 0; j < means.size(); ++j) cells.push_back({backend_ids[j], means[j], epistemic[j], ranks[j]});
  return cells;
}

namespace detail {
inline void require_cells(const std::vector<ModelCell>& cells, std::string_view op) {
  if (cells.empty()) throw InsufficientDataError(std::string(op) + ": no model cells");
}

inline EnsemblePrediction finish(EnsembleMethod method, double probability, std::map<std::string, double> weights) {
  probability = std::clamp(probability, 0.0, 1.0);
  return {method, probability, binarize(probability), std::move(weights)};
}
}  // namespace detail

inline EnsemblePrediction direct_average(const std::vector<ModelCell>& cells) {
  detail::require_cells(cells, "direct_average");
  const double w = 1.0 / static_cast<double>(cells.size());
  double sum = 0.0;
  std::map<std::string, double> weights;
  for (const auto& c : cells) {
    sum += c.mean_prediction;
    weights[c.backend_id] += w;
  }
  return detail::finish(EnsembleMethod::kDirectAverage, sum / static_cast<double>(cells.size()), std::move(weights));
}

// Precision tau_j = 1 / u'_j; p = sum(tau p̄) / sum(tau).
inline EnsemblePrediction uncertainty_weighted(const std::vector<ModelCell>& cells) {
  detail::require_cells(cells, "uncertainty_weighted");
  double u_min = cells.front().rank_normalized;
  for (const auto& c : cells) {
    if (!(c.rank_normalized > 0.0)) throw DomainError("uncertainty_weighted: rank-normalised uncertainty must be > 0");
    u_min = std::min(u_min, c.rank_normalized);
  }
  // Precisions scaled by 1/max(tau) = u_min; the weighted mean is unchanged
  // and equal u' give weights of exactly 1.
  std::vector<double> tau;
  double tau_sum = 0.0;
  double weighted = 0.0;
  for (const auto& c : cells) {
    tau.push_back(u_min / c.rank_normalized);
    tau_sum += tau.back();
    weighted += tau.back() * c.mean_prediction;
  }
  std::map<std::string, double> weights;
  for (std::size_t j = 0; j < cells.size(); ++j) weights[cells[j].backend_id] += tau[j] / tau_sum;
  return detail::finish(EnsembleMethod::kUncertaintyWeighted, weighted / tau_sum, std::move(weights));
}

// Prediction of the cell with the smallest u'_j; ties go to the smallest backend_id.
inline EnsemblePrediction lowest_uncertainty(const std::vector<ModelCell>& cells) {
  detail::require_cells(cells, "lowest_uncertainty");
  const ModelCell* best = &cells.front();
  for (const auto& c : cells) {
    if (c.rank_normalized < best->rank_normalized ||
        (c.rank_normalized == best->rank_normalized && c.backend_id < best->backend_id)) {
      best = &c;
    }
  }
  std::map<std::string, double> weights;
  for (const auto& c : cells) weights[c.backend_id] = 0.0;
  weights[best->backend_id] = 1.0;
  return detail::finish(EnsembleMethod::kLowestUncertainty, best->mean_prediction, std::move(weights));
}

inline EnsemblePrediction combine(EnsembleMethod method, const std::vector<ModelCell>& cells) {
  switch (method) {
    case EnsembleMethod::kDirectAverage: return direct_average(cells);
    case EnsembleMethod::kUncertaintyWeighted: return uncertainty_weighted(cells);
    case EnsembleMethod::kLowestUncertainty: return lowest_uncertainty(cells);
  }
  throw ConfigError("combine: unknown method");
}

}  // namespace mhsim
