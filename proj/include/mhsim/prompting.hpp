#pragma once

// Prompt templates, rendering of a mother's profile and history into prompt
// text, and parsing of model replies into verdicts.
//
// Template layout on disk:
//   <dir>/no_intervention/template_<id>.txt
//   <dir>/intervention/template_<id>.txt      id = 1..5
//
// Placeholders are written {name}. Each of kPlaceholders must occur exactly
// once. The two variants of one template id may differ only in the delivery
// spans listed in kDeliverySpans.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mhsim/cohort.hpp"
#include "mhsim/enums.hpp"
#include "mhsim/error.hpp"
#include "mhsim/rng.hpp"
#include "mhsim/text.hpp"

namespace mhsim {

enum class Scenario { kIntervention, kCounterfactual, kControl };
enum class DeliveryMode { kNoIntervention, kIntervention };

inline std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kIntervention: return "intervention";
    case Scenario::kCounterfactual: return "counterfactual";
    case Scenario::kControl: return "control";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view text) {
  if (text == "intervention") return Scenario::kIntervention;
  if (text == "counterfactual") return Scenario::kCounterfactual;
  if (text == "control") return Scenario::kControl;
  throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

inline std::string_view delivery_mode_dir(DeliveryMode m) {
  return m == DeliveryMode::kIntervention ? "intervention" : "no_intervention";
}

inline constexpr std::array<std::string_view, 14> kPlaceholders = {
    "enroll_gest_age", "age_category",  "income_bracket",         "education_level", "language",
    "phone_owner",     "call_slot_preference", "channel_type", "enroll_delivery_status",
    "g",               "p",             "s",                      "l",               "past_behavior"};

struct DeliverySpan {
  std::string_view no_intervention;
  std::string_view intervention;
};

inline constexpr std::array<DeliverySpan, 2> kDeliverySpans = {{
    {"automated voice messages", "phone calls"},
    {"automated health message", "call from a health worker"},
}};

inline constexpr std::string_view kNoHistoryToken = "No history yet.";
inline constexpr std::string_view kAutomatedMarker = "automated message";
inline constexpr std::string_view kLiveCallMarker = "live call";
inline constexpr std::string_view kYesMarker = "##yes##";
inline constexpr std::string_view kNoMarker = "##no##";
inline constexpr int kTemplatesPerMode = 5;

struct PromptTemplate {
  int template_id = 1;
  DeliveryMode scenario_mode = DeliveryMode::kNoIntervention;
  std::string body;
};

// Throws ConfigError unless every placeholder occurs exactly once and no
// unknown {name} appears.
inline void validate(const PromptTemplate& t) {
  const std::string where = "template " + std::to_string(t.template_id) + " (" +
                            std::string(delivery_mode_dir(t.scenario_mode)) + ")";
  if (t.template_id < 1 || t.template_id > kTemplatesPerMode) throw ConfigError(where + ": id must be in [1, 5]");
  for (auto name : kPlaceholders) {
    const std::string token = "{" + std::string(name) + "}";
    const auto n = count_occurrences(t.body, token);
    if (n != 1) throw ConfigError(where + ": placeholder {" + std::string(name) + "} occurs " + std::to_string(n) + " times");
  }
  for (std::size_t pos = t.body.find('{'); pos != std::string::npos; pos = t.body.find('{', pos + 1)) {
    const std::size_t close = t.body.find('}', pos);
    if (close == std::string::npos) throw ConfigError(where + ": unterminated placeholder");
    const std::string_view name(t.body.data() + pos + 1, close - pos - 1);
    if (std::find(kPlaceholders.begin(), kPlaceholders.end(), name) == kPlaceholders.end()) {
      throw ConfigError(where + ": unknown placeholder {" + std::string(name) + "}");
    }
  }
}

// Maps an intervention body onto its no-intervention counterpart by swapping
// the delivery spans.
inline std::string swap_delivery_spans_to_no_intervention(std::string body) {
  for (const auto& span : kDeliverySpans) body = replace_all(std::move(body), span.intervention, span.no_intervention);
  return body;
}

class TemplateSet {
 public:
  TemplateSet() = default;

  void add(PromptTemplate t) {
    validate(t);
    auto& slot = bodies_[static_cast<int>(t.scenario_mode)];
    if (slot.size() < static_cast<std::size_t>(t.template_id)) slot.resize(static_cast<std::size_t>(t.template_id));
    slot[static_cast<std::size_t>(t.template_id - 1)] = std::move(t);
  }

  // Checks that both modes are complete and pairwise differ only in delivery spans.
  void check_pairs() const {
    const auto& none = bodies_[0];
    const auto& live = bodies_[1];
    if (none.size() != live.size() || none.empty()) throw ConfigError("template set: modes must have equal, non-zero counts");
    for (std::size_t i = 0; i < none.size(); ++i) {
      const std::string where = "template " + std::to_string(i + 1);
      if (none[i].body.empty() || live[i].body.empty()) throw ConfigError(where + ": missing variant");
      for (const auto& span : kDeliverySpans) {
        if (none[i].body.find(span.no_intervention) == std::string::npos ||
            live[i].body.find(span.intervention) == std::string::npos) {
          throw ConfigError(where + ": delivery span missing");
        }
        if (none[i].body.find(span.intervention) != std::string::npos ||
            live[i].body.find(span.no_intervention) != std::string::npos) {
          throw ConfigError(where + ": delivery span of the other mode present");
        }
      }
      if (swap_delivery_spans_to_no_intervention(live[i].body) != none[i].body) {
        throw ConfigError(where + ": variants differ outside the delivery spans");
      }
    }
  }

  const PromptTemplate& get(DeliveryMode mode, int template_id) const {
    const auto& slot = bodies_[static_cast<int>(mode)];
    if (template_id < 1 || static_cast<std::size_t>(template_id) > slot.size()) {
      throw ConfigError("template " + std::to_string(template_id) + " not loaded");
    }
    return slot[static_cast<std::size_t>(template_id - 1)];
  }

  int count() const { return static_cast<int>(bodies_[0].size()); }

  std::uint64_t digest() const {
    std::string all;
    for (const auto& slot : bodies_) {
      for (const auto& t : slot) {
        all += t.body;
        all += '\x1f';
      }
    }
    return fnv1a64(all);
  }

 private:
  std::array<std::vector<PromptTemplate>, 2> bodies_;
};

inline TemplateSet load_templates(const std::filesystem::path& dir, int per_mode = kTemplatesPerMode) {
  TemplateSet set;
  for (DeliveryMode mode : {DeliveryMode::kNoIntervention, DeliveryMode::kIntervention}) {
    for (int id = 1; id <= per_mode; ++id) {
      const auto path = dir / delivery_mode_dir(mode) / ("template_" + std::to_string(id) + ".txt");
      std::ifstream in(path, std::ios::binary);
      if (!in) throw ConfigError("cannot open template " + path.string());
      std::ostringstream body;
      body << in.rdbuf();
      set.add(PromptTemplate{id, mode, body.str()});
    }
  }
  set.check_pairs();
  return set;
}

// "Week t: engaged (automated message); Week t+1: ..." with 1-based weeks.
// Counterfactual histories omit the delivery markers; control histories must
// carry only zero actions.
inline std::string render_history(const TrajectoryState& trajectory, Scenario scenario) {
  if (trajectory.engagement_history.empty()) return std::string(kNoHistoryToken);
  if (scenario == Scenario::kControl) {
    for (int a : trajectory.action_history) {
      if (a != 0) throw ValidationError("control trajectory " + trajectory.mother_id + " contains a live call");
    }
  }
  std::string out;
  for (std::size_t t = 0; t < trajectory.engagement_history.size(); ++t) {
    if (t) out += "; ";
    out += "Week " + std::to_string(t + 1) + ": ";
    out += trajectory.engagement_history[t] ? "engaged" : "not engaged";
    if (scenario != Scenario::kCounterfactual) {
      out += " (";
      out += trajectory.action_history[t] ? kLiveCallMarker : kAutomatedMarker;
      out += ")";
    }
  }
  return out;
}

inline std::map<std::string, std::string, std::less<>> placeholder_values(const MotherProfile& m,
                                                                          const TrajectoryState& trajectory,
                                                                          Scenario scenario) {
  return {
      {"enroll_gest_age", std::to_string(m.enroll_gest_age)},
      {"age_category", std::string(enum_name(m.age_category))},
      {"income_bracket", std::string(enum_name(m.income_bracket))},
      {"education_level", std::string(enum_name(m.education_level))},
      {"language", std::string(enum_name(m.language))},
      {"phone_owner", std::string(enum_name(m.phone_owner))},
      {"call_slot_preference", std::string(enum_name(m.call_slot_preference))},
      {"channel_type", std::string(enum_name(m.channel_type))},
      {"enroll_delivery_status", std::string(enum_name(m.enroll_delivery_status))},
      {"g", std::to_string(m.g)},
      {"p", std::to_string(m.p)},
      {"s", std::to_string(m.s)},
      {"l", std::to_string(m.l)},
      {"past_behavior", render_history(trajectory, scenario)},
  };
}

// Substitutes {name} placeholders. Unknown names are a render error.
inline std::string substitute(std::string_view body,
                              const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(body.size() + 512);
  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t open = body.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(body.substr(pos));
      break;
    }
    out.append(body.substr(pos, open - pos));
    const std::size_t close = body.find('}', open);
    if (close == std::string_view::npos) throw ValidationError("render: unterminated placeholder");
    const auto name = body.substr(open + 1, close - open - 1);
    auto it = values.find(name);
    if (it == values.end()) throw ValidationError("render: no value for placeholder {" + std::string(name) + "}");
    out.append(it->second);
    pos = close + 1;
  }
  return out;
}

inline std::string render_prompt(const PromptTemplate& tmpl, const MotherProfile& profile,
                                 const TrajectoryState& trajectory, Scenario scenario) {
  if (tmpl.scenario_mode == DeliveryMode::kIntervention && scenario != Scenario::kIntervention) {
    throw ValidationError("render: intervention wording is only valid in the intervention scenario");
  }
  if (!trajectory.mother_id.empty() && trajectory.mother_id != profile.id) {
    throw ValidationError("render: trajectory belongs to " + trajectory.mother_id + ", not " + profile.id);
  }
  validate(trajectory);
  return substitute(tmpl.body, placeholder_values(profile, trajectory, scenario));
}

enum class Verdict { kNotEngaged = 0, kEngaged = 1, kUnparseable = 2 };

inline std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kEngaged: return "engaged";
    case Verdict::kNotEngaged: return "not_engaged";
    case Verdict::kUnparseable: return "unparseable";
  }
  return "?";
}

inline Verdict parse_verdict_name(std::string_view text) {
  if (text == "engaged") return Verdict::kEngaged;
  if (text == "not_engaged") return Verdict::kNotEngaged;
  if (text == "unparseable") return Verdict::kUnparseable;
  throw ValidationError("unknown verdict '" + std::string(text) + "'");
}

struct ParsedResponse {
  Verdict verdict = Verdict::kUnparseable;
  std::string raw_text;
  std::size_t marker_count = 0;  // total sentinel occurrences, repeats included
};

// Case-insensitive. Exactly one distinct sentinel decides the verdict;
// repeats of the same sentinel are fine.
inline ParsedResponse parse_response(std::string_view raw) {
  const std::string lower = to_lower(raw);
  const std::size_t yes = count_occurrences(lower, kYesMarker);
  const std::size_t no = count_occurrences(lower, kNoMarker);
  ParsedResponse out;
  out.raw_text = std::string(raw);
  out.marker_count = yes + no;
  if (yes > 0 && no == 0) out.verdict = Verdict::kEngaged;
  else if (no > 0 && yes == 0) out.verdict = Verdict::kNotEngaged;
  return out;
}

}  // namespace mhsim
