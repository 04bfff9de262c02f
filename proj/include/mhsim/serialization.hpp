#pragma once

// JSON forms of profiles, schedules, world parameters and backend configs.
// These are used both in run-log headers (canonical spec) and config files.

#include <string>

#include <json.hpp>

#include "mhsim/backend.hpp"
#include "mhsim/cohort.hpp"
#include "mhsim/synthetic.hpp"

namespace mhsim {

inline json profile_to_json(const MotherProfile& m) {
  return json{{"id", m.id},
              {"enroll_gest_age", m.enroll_gest_age},
              {"age_category", enum_name(m.age_category)},
              {"income_bracket", enum_name(m.income_bracket)},
              {"education_level", enum_name(m.education_level)},
              {"language", enum_name(m.language)},
              {"phone_owner", enum_name(m.phone_owner)},
              {"call_slot_preference", enum_name(m.call_slot_preference)},
              {"channel_type", enum_name(m.channel_type)},
              {"enroll_delivery_status", enum_name(m.enroll_delivery_status)},
              {"g", m.g},
              {"p", m.p},
              {"s", m.s},
              {"l", m.l}};
}

template <class E>
E enum_from_json(const json& j) {
  const auto text = j.at(std::string(EnumTraits<E>::kField)).template get<std::string>();
  auto v = parse_enum<E>(text);
  if (!v) throw ValidationError(std::string(EnumTraits<E>::kField) + ": unknown category '" + text + "'");
  return *v;
}

inline MotherProfile profile_from_json(const json& j) {
  MotherProfile m;
  m.id = j.at("id").get<std::string>();
  m.enroll_gest_age = j.at("enroll_gest_age").get<int>();
  m.age_category = enum_from_json<AgeCategory>(j);
  m.income_bracket = enum_from_json<IncomeBracket>(j);
  m.education_level = enum_from_json<EducationLevel>(j);
  m.language = enum_from_json<Language>(j);
  m.phone_owner = enum_from_json<PhoneOwner>(j);
  m.call_slot_preference = enum_from_json<CallSlot>(j);
  m.channel_type = enum_from_json<ChannelType>(j);
  m.enroll_delivery_status = enum_from_json<DeliveryStatus>(j);
  m.g = j.at("g").get<int>();
  m.p = j.at("p").get<int>();
  m.s = j.at("s").get<int>();
  m.l = j.at("l").get<int>();
  validate(m);
  return m;
}

inline json schedule_to_json(const InterventionSchedule& s) {
  json assignments = json::object();
  for (const auto& [id, week] : s.assignments) assignments[id] = week;
  return json{{"weekly_fraction", s.weekly_fraction}, {"weeks", s.weeks}, {"assignments", assignments}};
}

inline InterventionSchedule schedule_from_json(const json& j) {
  InterventionSchedule s;
  s.weekly_fraction = j.value("weekly_fraction", 0.10);
  s.weeks = j.value("weeks", kInterventionWindow);
  for (const auto& [id, week] : j.at("assignments").items()) s.assignments[id] = week.get<int>();
  return s;
}

inline json world_to_json(const SyntheticWorldParams& w) {
  return json{{"feature_weights", w.feature_weights}, {"p01_base", w.p01_base},
              {"p11_base", w.p11_base},               {"retention_boost", w.retention_boost},
              {"boost_decay", w.boost_decay},         {"noise_level", w.noise_level},
              {"seed", w.seed}};
}

// Missing keys keep their defaults.
inline SyntheticWorldParams world_from_json(const json& j) {
  SyntheticWorldParams w;
  if (j.contains("feature_independent_intercept")) {
    w.feature_weights = feature_independent_weights(j.at("feature_independent_intercept").get<double>());
  }
  w.feature_weights = j.value("feature_weights", w.feature_weights);
  w.p01_base = j.value("p01_base", w.p01_base);
  w.p11_base = j.value("p11_base", w.p11_base);
  w.retention_boost = j.value("retention_boost", w.retention_boost);
  w.boost_decay = j.value("boost_decay", w.boost_decay);
  w.noise_level = j.value("noise_level", w.noise_level);
  w.seed = j.value("seed", w.seed);
  w.validate();
  return w;
}

inline json backend_to_json(const BackendConfig& c) {
  json j{{"backend_id", c.backend_id},
         {"provider", provider_name(c.provider)},
         {"model_name", c.model_name},
         {"temperature", c.temperature},
         {"max_tokens", c.max_tokens},
         {"max_retries", c.max_retries},
         {"backoff_base", c.backoff_base}};
  if (c.provider == Provider::kSynthetic) {
    j["sharpness"] = c.synthetic.sharpness;
    j["agent_seed"] = c.synthetic.seed;
    j["noise_level"] = c.synthetic.noise_level ? json(*c.synthetic.noise_level) : json(nullptr);
  } else {
    j["api_key_env"] = c.api_key_env;
    j["base_url"] = c.base_url;
    j["request_timeout"] = c.request_timeout;
    j["max_in_flight"] = c.max_in_flight;
  }
  return j;
}

// Starts from `base` (e.g. a named default profile) and overrides present keys.
inline BackendConfig backend_from_json(const json& j, BackendConfig base = {}) {
  BackendConfig c = std::move(base);
  c.backend_id = j.value("backend_id", c.backend_id);
  if (j.contains("provider")) c.provider = parse_provider(j.at("provider").get<std::string>());
  c.model_name = j.value("model_name", c.model_name);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.base_url = j.value("base_url", c.base_url);
  c.request_timeout = j.value("request_timeout", c.request_timeout);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_base = j.value("backoff_base", c.backoff_base);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.synthetic.sharpness = j.value("sharpness", c.synthetic.sharpness);
  c.synthetic.seed = j.value("agent_seed", c.synthetic.seed);
  if (j.contains("noise_level")) {
    const auto& n = j.at("noise_level");
    c.synthetic.noise_level = n.is_null() ? std::nullopt : std::optional<double>(n.get<double>());
  }
  if (c.provider == Provider::kSynthetic && c.model_name.empty()) c.model_name = "synthetic";
  c.validate();
  return c;
}

}  // namespace mhsim
