#pragma once

// Seeded synthetic engagement world. It supplies ground-truth sequences for
// desk-scale experiments and backs the mock prediction backend.
//
// Ground truth for one mother:
//   week 0:  engaged ~ Bernoulli(logistic(w . x(profile)))
//   week t:  P(1 | 0) = p01_base
//            P(1 | 1) = p11_base + delta * decay^(t - t_call)   if a live call
//                       happened at week t_call <= t, else p11_base
// Every draw comes from CounterRng keyed by (seed, stream, mother, week), so
// a mother's sequence does not depend on the rest of the cohort or on the
// schedule of anyone else.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mhsim/cohort.hpp"
#include "mhsim/error.hpp"
#include "mhsim/rng.hpp"

namespace mhsim {

using WarningSink = std::function<void(const std::string&)>;

inline void default_warning(const std::string& message) {
  static std::once_flag once;
  std::call_once(once, [&] { std::clog << "warning: " << message << " (further warnings of this kind suppressed)\n"; });
}

// x(profile) = [1, age/4, income/5, education/6, owns phone, pregnant at enrollment]
inline constexpr std::size_t kPropensityFeatures = 6;

inline std::vector<double> propensity_features(const MotherProfile& m) {
  return {1.0,
          static_cast<double>(enum_index(m.age_category)) / 4.0,
          static_cast<double>(enum_index(m.income_bracket)) / 5.0,
          static_cast<double>(enum_index(m.education_level)) / 6.0,
          m.phone_owner == PhoneOwner::kMother ? 1.0 : 0.0,
          m.enroll_delivery_status == DeliveryStatus::kPregnant ? 1.0 : 0.0};
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

struct SyntheticWorldParams {
  std::vector<double> feature_weights = {0.2, 0.1, 0.3, 0.4, 0.3, 0.0};
  double p01_base = 0.30;
  double p11_base = 0.80;
  double retention_boost = 0.0;  // delta, added to P(1|1) from the call week on
  double boost_decay = 0.8;      // multiplicative per week after the call
  double noise_level = 0.0;      // default logit-space noise of synthetic backends
  std::uint64_t seed = 1;

  void validate() const {
    if (feature_weights.size() != kPropensityFeatures) {
      throw ConfigError("world: feature_weights needs " + std::to_string(kPropensityFeatures) + " entries");
    }
    auto prob = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("world: ") + name + " must be in [0, 1]");
    };
    prob(p01_base, "p01_base");
    prob(p11_base, "p11_base");
    prob(boost_decay, "boost_decay");
    if (!std::isfinite(retention_boost)) throw ConfigError("world: retention_boost must be finite");
    if (!(noise_level >= 0.0)) throw ConfigError("world: noise_level must be >= 0");
  }
};

inline std::vector<double> feature_independent_weights(double intercept) {
  std::vector<double> w(kPropensityFeatures, 0.0);
  w[0] = intercept;
  return w;
}

inline double initial_engagement_probability(const SyntheticWorldParams& world, const MotherProfile& m) {
  const auto x = propensity_features(m);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += world.feature_weights[i] * x[i];
  return logistic(z);
}

// Probability of being engaged at week t >= 1 given the state at t - 1.
inline double transition_probability(const SyntheticWorldParams& world, int previous_state, int week,
                                     std::optional<int> call_week, const WarningSink& warn = default_warning) {
  if (previous_state == 0) return world.p01_base;
  double p = world.p11_base;
  if (call_week && week >= *call_week) {
    p += world.retention_boost * std::pow(world.boost_decay, week - *call_week);
  }
  if (p > 1.0 || p < 0.0) {
    warn("boosted retention probability " + std::to_string(p) + " clamped to [0, 1]");
    p = std::clamp(p, 0.0, 1.0);
  }
  return p;
}

inline std::uint64_t mother_key(const std::string& id) { return fnv1a64(id); }

inline std::vector<int> synthetic_ground_truth(const SyntheticWorldParams& world, const MotherProfile& profile,
                                               const InterventionSchedule* schedule, int weeks,
                                               const WarningSink& warn = default_warning) {
  if (weeks < 1) throw ConfigError("synthetic_ground_truth: weeks must be >= 1");
  const CounterRng rng(world.seed);
  const std::uint64_t key = mother_key(profile.id);
  const std::optional<int> call = schedule ? schedule->week_of(profile.id) : std::nullopt;

  std::vector<int> seq(static_cast<std::size_t>(weeks));
  seq[0] = rng.uniform({stream::kGroundTruthInit, key}) < initial_engagement_probability(world, profile) ? 1 : 0;
  for (int t = 1; t < weeks; ++t) {
    const double p = transition_probability(world, seq[static_cast<std::size_t>(t - 1)], t, call, warn);
    seq[static_cast<std::size_t>(t)] =
        rng.uniform({stream::kGroundTruthStep, key, static_cast<std::uint64_t>(t)}) < p ? 1 : 0;
  }
  return seq;
}

inline TruthTable synthetic_truth_table(const SyntheticWorldParams& world, const std::vector<MotherProfile>& mothers,
                                        const InterventionSchedule* schedule, int weeks,
                                        const WarningSink& warn = default_warning) {
  TruthTable truth;
  for (const auto& m : mothers) truth[m.id] = synthetic_ground_truth(world, m, schedule, weeks, warn);
  return truth;
}

// Per-backend behaviour of the mock model.
struct SyntheticAgentParams {
  std::optional<double> noise_level;  // falls back to the world's noise_level
  double sharpness = 1.0;  // 1 = calibrated; > 1 squashes probabilities toward {0, 1}
  std::uint64_t seed = 0;
};

// Which (mother, week, wording, repeat) a draw belongs to.
struct DrawKey {
  std::string backend_id;
  std::string mother_id;
  int week = 0;
  int template_id = 1;
  int repeat_index = 0;
};

// The probability the world itself would use for the next week, given the
// trajectory the agent sees. `visible_call_week` is the live-call week known to
// the agent (this week or an earlier one), if any.
inline double synthetic_conditional_probability(const SyntheticWorldParams& world, const MotherProfile& profile,
                                                const TrajectoryState& trajectory,
                                                std::optional<int> visible_call_week,
                                                const WarningSink& warn = default_warning) {
  const auto t = static_cast<int>(trajectory.engagement_history.size());
  if (t == 0) return initial_engagement_probability(world, profile);
  return transition_probability(world, trajectory.engagement_history.back(), t, visible_call_week, warn);
}

// Noise is shared by the five repeats of one wording (disagreement across
// wordings), the Bernoulli draw is per repeat.
inline double synthetic_vote_probability(const SyntheticWorldParams& world, const SyntheticAgentParams& agent,
                                         double p, const DrawKey& key) {
  const double noise = agent.noise_level.value_or(world.noise_level);
  const CounterRng rng(world.seed ^ mix64(agent.seed + 0x5eed));
  const std::uint64_t backend = fnv1a64(key.backend_id);
  const std::uint64_t mother = mother_key(key.mother_id);
  if (p > 0.0 && p < 1.0 && (noise > 0.0 || agent.sharpness != 1.0)) {
    double z = logit(p);
    if (noise > 0.0) {
      z += noise * rng.normal({stream::kPredictNoise, backend, mother, static_cast<std::uint64_t>(key.week),
                               static_cast<std::uint64_t>(key.template_id)});
    }
    p = logistic(agent.sharpness * z);
  }
  return p;
}

inline bool synthetic_vote(const SyntheticWorldParams& world, const SyntheticAgentParams& agent, double p,
                           const DrawKey& key) {
  const CounterRng rng(world.seed ^ mix64(agent.seed + 0x5eed));
  const double u = rng.uniform({stream::kPredictDraw, fnv1a64(key.backend_id), mother_key(key.mother_id),
                                static_cast<std::uint64_t>(key.week), static_cast<std::uint64_t>(key.template_id),
                                static_cast<std::uint64_t>(key.repeat_index)});
  return u < synthetic_vote_probability(world, agent, p, key);
}

}  // namespace mhsim
