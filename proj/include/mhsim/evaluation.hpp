#pragma once

// Metrics over run logs: per-week accuracy, F1, log-likelihood and engagement,
// pooled sociodemographic bias, engagement curves and transition estimates.
// Weeks are 0-based here; reports add one.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mhsim/cohort.hpp"
#include "mhsim/engine.hpp"
#include "mhsim/ensemble.hpp"
#include "mhsim/enums.hpp"
#include "mhsim/error.hpp"
#include "mhsim/runlog.hpp"

namespace mhsim {

inline constexpr double kLogLikelihoodEpsilon = 1e-3;

enum class Metric { kAccuracy, kF1, kLogLikelihood, kEngagementProportion };

inline std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::kAccuracy: return "accuracy";
    case Metric::kF1: return "f1";
    case Metric::kLogLikelihood: return "log_likelihood";
    case Metric::kEngagementProportion: return "engagement_proportion";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(std::string_view text) {
  for (auto m : {Metric::kAccuracy, Metric::kF1, Metric::kLogLikelihood, Metric::kEngagementProportion}) {
    if (metric_name(m) == text) return m;
  }
  return std::nullopt;
}

inline bool needs_truth(Metric m) { return m != Metric::kEngagementProportion; }

struct MetricSeries {
  std::string subject;
  Metric metric = Metric::kAccuracy;
  std::vector<std::optional<double>> values;  // absent when n_effective is 0
  std::vector<std::size_t> n_effective;
};

struct SubjectPrediction {
  bool missing = true;
  double probability = 0.0;
  int binarized = 0;
};

// Backend ids followed by the ensemble methods.
inline std::vector<std::string> subjects_of(const RunLog& log) {
  std::vector<std::string> out = log.backend_ids;
  for (auto m : kEnsembleMethods) out.emplace_back(method_name(m));
  return out;
}

// Lookup of one subject's predictions in a log.
class SubjectView {
 public:
  SubjectView(const RunLog& log, const std::string& subject) : log_(&log), subject_(subject) {
    if (auto m = parse_method(subject)) {
      method_ = m;
    } else if (std::find(log.backend_ids.begin(), log.backend_ids.end(), subject) == log.backend_ids.end()) {
      throw ValidationError("subject '" + subject + "' is not in the run log");
    }
  }

  SubjectPrediction at(const std::string& mother, int week) const {
    SubjectPrediction p;
    if (method_) {
      const auto* e = log_->ensemble(*method_, mother, week);
      if (!e || e->missing) return p;
      p = {false, e->prediction.probability, e->prediction.binarized};
    } else {
      const auto* c = log_->cell(subject_, mother, week);
      if (!c || c->missing) return p;
      p = {false, c->mean_prediction, binarize(c->mean_prediction)};
    }
    return p;
  }

  const std::string& subject() const { return subject_; }

 private:
  const RunLog* log_;
  std::string subject_;
  std::optional<EnsembleMethod> method_;
};

inline int evaluated_weeks(const RunLog& log) { return log.weeks_completed; }

inline void require_truth(const RunLog& log, const TruthTable* truth, std::string_view what) {
  if (!truth) {
    throw ConfigError(std::string(what) + " requires ground-truth engagement sequences (truth file)");
  }
  const auto weeks = static_cast<std::size_t>(evaluated_weeks(log));
  for (const auto& id : log.mother_ids) {
    auto it = truth->find(id);
    if (it == truth->end()) throw ValidationError("ground truth has no sequence for mother " + id);
    if (it->second.size() < weeks) throw ValidationError("ground truth for mother " + id + " is shorter than the run");
  }
}

inline double clamp_probability(double p) {
  return std::clamp(p, kLogLikelihoodEpsilon, 1.0 - kLogLikelihoodEpsilon);
}

// F1 with engaged as the positive class; 1 when neither predictions nor truth
// hold a positive, 0 whenever precision + recall is 0 otherwise.
inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

inline MetricSeries metric_series(const RunLog& log, const TruthTable* truth, const std::string& subject, Metric metric) {
  const SubjectView view(log, subject);
  if (needs_truth(metric)) require_truth(log, truth, metric_name(metric));
  MetricSeries s;
  s.subject = subject;
  s.metric = metric;
  const int weeks = evaluated_weeks(log);
  for (int t = 0; t < weeks; ++t) {
    std::size_t n = 0;
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0, positive = 0;
    double ll = 0.0;
    for (const auto& id : log.mother_ids) {
      const auto p = view.at(id, t);
      if (p.missing) continue;
      ++n;
      positive += static_cast<std::size_t>(p.binarized);
      if (!needs_truth(metric)) continue;
      const int y = truth->at(id)[static_cast<std::size_t>(t)];
      correct += p.binarized == y;
      tp += p.binarized == 1 && y == 1;
      fp += p.binarized == 1 && y == 0;
      fn += p.binarized == 0 && y == 1;
      const double q = clamp_probability(p.probability);
      ll += std::log(y == 1 ? q : 1.0 - q);
    }
    s.n_effective.push_back(n);
    if (n == 0) {
      s.values.emplace_back();
      continue;
    }
    const auto dn = static_cast<double>(n);
    switch (metric) {
      case Metric::kAccuracy: s.values.emplace_back(static_cast<double>(correct) / dn); break;
      case Metric::kF1: s.values.emplace_back(f1_score(tp, fp, fn)); break;
      case Metric::kLogLikelihood: s.values.emplace_back(ll / dn); break;
      case Metric::kEngagementProportion: s.values.emplace_back(static_cast<double>(positive) / dn); break;
    }
  }
  return s;
}

// n_effective-weighted mean of the per-week values; absent if nothing counted.
inline std::optional<double> pooled(const MetricSeries& s) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < s.values.size(); ++t) {
    if (!s.values[t]) continue;
    sum += *s.values[t] * static_cast<double>(s.n_effective[t]);
    n += s.n_effective[t];
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

// Unweighted mean over weeks [from, to) that have a value.
inline std::optional<double> mean_over_weeks(const std::vector<std::optional<double>>& values, int from, int to) {
  double sum = 0.0;
  int n = 0;
  for (int t = std::max(0, from); t < std::min<int>(to, static_cast<int>(values.size())); ++t) {
    if (!values[static_cast<std::size_t>(t)]) continue;
    sum += *values[static_cast<std::size_t>(t)];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

// ---------------------------------------------------------------------------
// Sociodemographic bias.

enum class BiasFeature { kAge, kIncome, kEducation, kLanguage };

inline constexpr std::array<BiasFeature, 4> kBiasFeatures = {BiasFeature::kAge, BiasFeature::kIncome,
                                                             BiasFeature::kEducation, BiasFeature::kLanguage};

inline std::string_view bias_feature_name(BiasFeature f) {
  switch (f) {
    case BiasFeature::kAge: return "age";
    case BiasFeature::kIncome: return "income";
    case BiasFeature::kEducation: return "education";
    case BiasFeature::kLanguage: return "language";
  }
  return "?";
}

struct CategoryAccuracy {
  std::string category;
  double accuracy = 0.0;
  std::size_t n = 0;  // pooled (mother, week) observations
};

struct BiasTable {
  std::string subject;
  BiasFeature feature = BiasFeature::kAge;
  std::vector<CategoryAccuracy> categories;  // in category order, empty ones left out
  std::vector<std::string> omitted;          // categories without observations
  double bias = 0.0;                         // max - min category accuracy
};

namespace detail {

template <class E>
std::vector<std::string> category_names() {
  std::vector<std::string> out;
  for (auto name : EnumTraits<E>::kNames) out.emplace_back(name);
  return out;
}

inline std::pair<std::size_t, std::vector<std::string>> category_of(BiasFeature f, const MotherProfile& m) {
  switch (f) {
    case BiasFeature::kAge: return {enum_index(m.age_category), category_names<AgeCategory>()};
    case BiasFeature::kIncome: return {enum_index(m.income_bracket), category_names<IncomeBracket>()};
    case BiasFeature::kEducation: return {enum_index(m.education_level), category_names<EducationLevel>()};
    case BiasFeature::kLanguage: return {enum_index(m.language), category_names<Language>()};
  }
  return {0, {}};
}

}  // namespace detail

inline std::vector<BiasTable> bias_table(const RunLog& log, const TruthTable* truth, const std::string& subject,
                                         const std::vector<MotherProfile>& profiles) {
  const SubjectView view(log, subject);
  require_truth(log, truth, "bias");
  std::map<std::string, const MotherProfile*> by_id;
  for (const auto& p : profiles) by_id[p.id] = &p;
  for (const auto& id : log.mother_ids) {
    if (!by_id.count(id)) throw ValidationError("bias: no profile for mother " + id);
  }

  const int weeks = evaluated_weeks(log);
  std::vector<BiasTable> out;
  for (BiasFeature f : kBiasFeatures) {
    std::vector<std::string> names = detail::category_of(f, profiles.front()).second;
    std::vector<std::size_t> correct(names.size(), 0), total(names.size(), 0);
    for (const auto& id : log.mother_ids) {
      const std::size_t c = detail::category_of(f, *by_id.at(id)).first;
      const auto& y = truth->at(id);
      for (int t = 0; t < weeks; ++t) {
        const auto p = view.at(id, t);
        if (p.missing) continue;
        ++total[c];
        correct[c] += p.binarized == y[static_cast<std::size_t>(t)];
      }
    }
    BiasTable table;
    table.subject = subject;
    table.feature = f;
    for (std::size_t c = 0; c < names.size(); ++c) {
      if (total[c] == 0) {
        table.omitted.push_back(names[c]);
        continue;
      }
      table.categories.push_back({names[c], static_cast<double>(correct[c]) / static_cast<double>(total[c]), total[c]});
    }
    if (!table.categories.empty()) {
      const auto [lo, hi] = std::minmax_element(table.categories.begin(), table.categories.end(),
                                                [](const auto& a, const auto& b) { return a.accuracy < b.accuracy; });
      table.bias = hi->accuracy - lo->accuracy;
    }
    out.push_back(std::move(table));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Engagement curves.

struct EngagementCurves {
  std::string subject;
  std::map<Scenario, MetricSeries> curves;
  std::map<Scenario, MetricSeries> truth_curves;  // never for the counterfactual
  std::optional<std::vector<std::optional<double>>> minus_counterfactual;  // intervention - counterfactual
  std::optional<std::vector<std::optional<double>>> minus_control;         // intervention - control
};

inline MetricSeries truth_engagement(const TruthTable& truth, const std::vector<std::string>& mothers, int weeks) {
  MetricSeries s;
  s.subject = "ground_truth";
  s.metric = Metric::kEngagementProportion;
  for (int t = 0; t < weeks; ++t) {
    std::size_t n = 0, pos = 0;
    for (const auto& id : mothers) {
      auto it = truth.find(id);
      if (it == truth.end() || it->second.size() <= static_cast<std::size_t>(t)) continue;
      ++n;
      pos += static_cast<std::size_t>(it->second[static_cast<std::size_t>(t)]);
    }
    s.n_effective.push_back(n);
    if (n == 0) s.values.emplace_back();
    else s.values.emplace_back(static_cast<double>(pos) / static_cast<double>(n));
  }
  return s;
}

inline std::vector<std::optional<double>> difference(const MetricSeries& a, const MetricSeries& b) {
  std::vector<std::optional<double>> out;
  const std::size_t n = std::min(a.values.size(), b.values.size());
  for (std::size_t t = 0; t < n; ++t) {
    if (a.values[t] && b.values[t]) out.emplace_back(*a.values[t] - *b.values[t]);
    else out.emplace_back();
  }
  return out;
}

inline bool truth_covers(const TruthTable& truth, const RunLog& log) {
  for (const auto& id : log.mother_ids) {
    auto it = truth.find(id);
    if (it == truth.end() || it->second.size() < static_cast<std::size_t>(evaluated_weeks(log))) return false;
  }
  return true;
}

inline EngagementCurves engagement_curves(const std::map<Scenario, const RunLog*>& logs, const std::string& subject,
                                          const TruthTable* truth = nullptr) {
  EngagementCurves out;
  out.subject = subject;
  for (const auto& [scenario, log] : logs) {
    out.curves[scenario] = metric_series(*log, nullptr, subject, Metric::kEngagementProportion);
    if (truth && scenario != Scenario::kCounterfactual && truth_covers(*truth, *log)) {
      out.truth_curves[scenario] = truth_engagement(*truth, log->mother_ids, evaluated_weeks(*log));
    }
  }
  auto find = [&](Scenario s) -> const RunLog* {
    auto it = logs.find(s);
    return it == logs.end() ? nullptr : it->second;
  };
  const RunLog* intervention = find(Scenario::kIntervention);
  const RunLog* counterfactual = find(Scenario::kCounterfactual);
  if (intervention && counterfactual) {
    std::set<std::string> a(intervention->mother_ids.begin(), intervention->mother_ids.end());
    std::set<std::string> b(counterfactual->mother_ids.begin(), counterfactual->mother_ids.end());
    if (a != b) throw ValidationError("intervention and counterfactual logs cover different mothers");
    out.minus_counterfactual = difference(out.curves.at(Scenario::kIntervention), out.curves.at(Scenario::kCounterfactual));
  }
  if (intervention && find(Scenario::kControl)) {
    out.minus_control = difference(out.curves.at(Scenario::kIntervention), out.curves.at(Scenario::kControl));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transition estimates.

struct TransitionEstimate {
  std::string scenario;
  std::string subject;
  int week = 0;  // transition from week to week + 1
  std::optional<double> p01;  // P(1 | 0)
  std::size_t n0 = 0;
  std::optional<double> p11;  // P(1 | 1)
  std::size_t n1 = 0;
};

struct TransitionCounts {
  std::size_t n0 = 0, up = 0, n1 = 0, stay = 0;
  void add(int from, int to) {
    if (from == 0) {
      ++n0;
      up += static_cast<std::size_t>(to);
    } else {
      ++n1;
      stay += static_cast<std::size_t>(to);
    }
  }
};

inline TransitionEstimate finish_estimate(std::string scenario, std::string subject, int week, const TransitionCounts& c) {
  TransitionEstimate e{std::move(scenario), std::move(subject), week, std::nullopt, c.n0, std::nullopt, c.n1};
  if (c.n0) e.p01 = static_cast<double>(c.up) / static_cast<double>(c.n0);
  if (c.n1) e.p11 = static_cast<double>(c.stay) / static_cast<double>(c.n1);
  return e;
}

// From a subject's binarized predictions; pairs touching a missing cell are skipped.
inline std::vector<TransitionEstimate> transition_probs(const RunLog& log, const std::string& subject) {
  const SubjectView view(log, subject);
  std::vector<TransitionEstimate> out;
  const int weeks = evaluated_weeks(log);
  for (int t = 0; t + 1 < weeks; ++t) {
    TransitionCounts c;
    for (const auto& id : log.mother_ids) {
      const auto a = view.at(id, t);
      const auto b = view.at(id, t + 1);
      if (a.missing || b.missing) continue;
      c.add(a.binarized, b.binarized);
    }
    out.push_back(finish_estimate(std::string(scenario_name(log.scenario)), subject, t, c));
  }
  return out;
}

// From ground-truth sequences (all of equal length or truncated to `weeks`).
inline std::vector<TransitionEstimate> transition_probs(const TruthTable& truth, std::string_view scenario,
                                                        std::optional<int> weeks = std::nullopt) {
  std::size_t len = 0;
  for (const auto& [id, seq] : truth) len = std::max(len, seq.size());
  if (weeks) len = std::min(len, static_cast<std::size_t>(*weeks));
  std::vector<TransitionEstimate> out;
  for (std::size_t t = 0; t + 1 < len; ++t) {
    TransitionCounts c;
    for (const auto& [id, seq] : truth) {
      if (seq.size() > t + 1) c.add(seq[t], seq[t + 1]);
    }
    out.push_back(finish_estimate(std::string(scenario), "ground_truth", static_cast<int>(t), c));
  }
  return out;
}

// Count-weighted pooling of P(1|1) or P(1|0) over transitions starting in [from, to).
inline std::optional<double> pooled_retention(const std::vector<TransitionEstimate>& e, int from, int to) {
  double stay = 0.0;
  std::size_t n = 0;
  for (const auto& x : e) {
    if (x.week < from || x.week >= to || !x.p11) continue;
    stay += *x.p11 * static_cast<double>(x.n1);
    n += x.n1;
  }
  if (n == 0) return std::nullopt;
  return stay / static_cast<double>(n);
}

inline std::optional<double> pooled_reengagement(const std::vector<TransitionEstimate>& e, int from, int to) {
  double up = 0.0;
  std::size_t n = 0;
  for (const auto& x : e) {
    if (x.week < from || x.week >= to || !x.p01) continue;
    up += *x.p01 * static_cast<double>(x.n0);
    n += x.n0;
  }
  if (n == 0) return std::nullopt;
  return up / static_cast<double>(n);
}

}  // namespace mhsim
