#pragma once

// Participant records, synthetic cohorts, cohort files, intervention
// schedules and representative subsample selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mhsim/enums.hpp"
#include "mhsim/error.hpp"
#include "mhsim/kmeans.hpp"
#include "mhsim/rng.hpp"
#include "mhsim/text.hpp"

namespace mhsim {

struct MotherProfile {
  std::string id;
  int enroll_gest_age = 1;
  AgeCategory age_category = AgeCategory::k20To24;
  IncomeBracket income_bracket = IncomeBracket::k0To5000;
  EducationLevel education_level = EducationLevel::kIlliterate;
  Language language = Language::kHindi;
  PhoneOwner phone_owner = PhoneOwner::kMother;
  CallSlot call_slot_preference = CallSlot::k0830To1030;
  ChannelType channel_type = ChannelType::kCommunity;
  DeliveryStatus enroll_delivery_status = DeliveryStatus::kPregnant;
  int g = 0;  // gravidity
  int p = 0;  // parity
  int s = 0;  // stillbirths
  int l = 0;  // living children

  friend bool operator==(const MotherProfile&, const MotherProfile&) = default;
};

inline void validate(const MotherProfile& m) {
  auto fail = [&](const std::string& what) { throw ValidationError("mother " + m.id + ": " + what); };
  if (m.id.empty()) throw ValidationError("mother id must not be empty");
  if (m.enroll_gest_age < 1 || m.enroll_gest_age > 42) fail("enroll_gest_age must be in [1, 42]");
  if (m.g < 0 || m.p < 0 || m.s < 0 || m.l < 0) fail("g, p, s, l must be non-negative");
  if (m.p > m.g) fail("parity p exceeds gravidity g");
  if (m.s > m.g) fail("stillbirths s exceed gravidity g");
  if (!enum_valid(m.age_category) || !enum_valid(m.income_bracket) || !enum_valid(m.education_level) ||
      !enum_valid(m.language) || !enum_valid(m.phone_owner) || !enum_valid(m.call_slot_preference) ||
      !enum_valid(m.channel_type) || !enum_valid(m.enroll_delivery_status)) {
    fail("categorical field out of range");
  }
}

struct TrajectoryState {
  std::string mother_id;
  std::vector<int> engagement_history;  // 1 = engaged
  std::vector<int> action_history;      // 1 = live call received
  std::optional<std::vector<int>> ground_truth;
};

inline constexpr int kInterventionWindow = 6;

inline void validate(const TrajectoryState& t) {
  auto fail = [&](const std::string& what) { throw ValidationError("trajectory " + t.mother_id + ": " + what); };
  if (t.engagement_history.size() != t.action_history.size()) fail("history lengths differ");
  int calls = 0;
  for (std::size_t i = 0; i < t.action_history.size(); ++i) {
    const int a = t.action_history[i];
    if (a != 0 && a != 1) fail("actions must be binary");
    if (a == 1) {
      ++calls;
      if (i >= static_cast<std::size_t>(kInterventionWindow)) fail("live call after the intervention window");
    }
  }
  if (calls > 1) fail("more than one live call");
  for (int e : t.engagement_history) {
    if (e != 0 && e != 1) fail("engagement must be binary");
  }
}

struct InterventionSchedule {
  std::map<std::string, int> assignments;  // mother_id -> 0-based week; unassigned mothers absent
  double weekly_fraction = 0.10;
  int weeks = kInterventionWindow;

  std::optional<int> week_of(const std::string& mother_id) const {
    auto it = assignments.find(mother_id);
    if (it == assignments.end()) return std::nullopt;
    return it->second;
  }
  std::size_t assigned_in_week(int week) const {
    return static_cast<std::size_t>(
        std::count_if(assignments.begin(), assignments.end(), [&](const auto& kv) { return kv.second == week; }));
  }
};

// ---------------------------------------------------------------------------
// Synthetic cohort generator.
//
// Category frequencies are fixed documented constants, not population
// estimates. Age and income are peaked; every other categorical field is
// uniform. Reproductive counts: g in {1..5} with kGravidityWeights, p uniform
// in [0, g], s uniform in [0, g - p], l uniform in [0, p].
namespace cohort_constants {
inline const std::vector<double> kAgeWeights = {0.10, 0.35, 0.30, 0.15, 0.10};
inline const std::vector<double> kIncomeWeights = {0.35, 0.30, 0.15, 0.10, 0.06, 0.04};
inline const std::vector<double> kGravidityWeights = {0.35, 0.30, 0.20, 0.10, 0.05};  // g = 1..5
inline constexpr int kMinGestAge = 1;
inline constexpr int kMaxGestAge = 42;
}  // namespace cohort_constants

inline std::string mother_id_for(std::size_t index, std::size_t n) {
  std::size_t width = 5;
  for (std::size_t v = n; v >= 100000; v /= 10) ++width;
  std::string digits = std::to_string(index + 1);
  return "M" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

inline std::vector<MotherProfile> generate_cohort(std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_cohort: n must be >= 1");
  using namespace cohort_constants;
  SplitMix64 rng(seed);
  auto uniform_enum = [&]<class E>(E) { return enum_from_index<E>(rng.uniform_below(enum_count<E>())); };
  auto uniform_int = [&](int lo, int hi) {
    return lo + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(hi - lo + 1)));
  };

  std::vector<MotherProfile> cohort;
  cohort.reserve(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    MotherProfile m;
    m.id = mother_id_for(i, static_cast<std::size_t>(n));
    m.enroll_gest_age = uniform_int(kMinGestAge, kMaxGestAge);
    m.age_category = enum_from_index<AgeCategory>(rng.categorical(kAgeWeights));
    m.income_bracket = enum_from_index<IncomeBracket>(rng.categorical(kIncomeWeights));
    m.education_level = uniform_enum(EducationLevel{});
    m.language = uniform_enum(Language{});
    m.phone_owner = uniform_enum(PhoneOwner{});
    m.call_slot_preference = uniform_enum(CallSlot{});
    m.channel_type = uniform_enum(ChannelType{});
    m.enroll_delivery_status = uniform_enum(DeliveryStatus{});
    m.g = 1 + static_cast<int>(rng.categorical(kGravidityWeights));
    m.p = uniform_int(0, m.g);
    m.s = uniform_int(0, m.g - m.p);
    m.l = uniform_int(0, m.p);
    cohort.push_back(std::move(m));
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// Intervention scheduling: disjoint uniformly random weekly subsets.

inline InterventionSchedule schedule_interventions(const std::vector<MotherProfile>& cohort, double weekly_fraction,
                                                   int weeks, std::uint64_t seed) {
  if (!(weekly_fraction >= 0.0 && weekly_fraction <= 1.0)) {
    throw ConfigError("schedule_interventions: weekly_fraction must be in [0, 1]");
  }
  if (weeks < 0 || weeks > kInterventionWindow) {
    throw ConfigError("schedule_interventions: weeks must be in [0, 6]");
  }
  if (weekly_fraction * weeks > 1.0 + 1e-12) {
    throw ConfigError("schedule_interventions: infeasible schedule, weekly_fraction x weeks exceeds 1");
  }
  const std::size_t n = cohort.size();
  const auto per_week = static_cast<std::size_t>(std::llround(weekly_fraction * static_cast<double>(n)));
  if (per_week * static_cast<std::size_t>(weeks) > n) {
    throw ConfigError("schedule_interventions: infeasible schedule, rounded weekly quota exceeds cohort");
  }

  InterventionSchedule schedule;
  schedule.weekly_fraction = weekly_fraction;
  schedule.weeks = weeks;
  if (per_week == 0) return schedule;

  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& m : cohort) ids.push_back(m.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ValidationError("schedule_interventions: duplicate mother id");
  }
  SplitMix64 rng(seed);
  rng.shuffle(ids.begin(), ids.end());
  for (std::size_t i = 0; i < per_week * static_cast<std::size_t>(weeks); ++i) {
    schedule.assignments.emplace(ids[i], static_cast<int>(i / per_week));
  }
  return schedule;
}

// ---------------------------------------------------------------------------
// Feature encoding for clustering.
//
// Ordinal fields -> integer rank, min-max scaled to [0, 1] over the cohort.
// Nominal fields (language, channel, phone owner) -> one-hot.
// Trajectory summaries: mean engagement (already in [0, 1]) and the OLS slope
// of engagement on week index, min-max scaled over the cohort.

inline double ols_slope(const std::vector<int>& y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  const double t_mean = static_cast<double>(n - 1) / 2.0;
  double y_mean = 0.0;
  for (int v : y) y_mean += v;
  y_mean /= static_cast<double>(n);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - t_mean;
    num += dt * (y[t] - y_mean);
    den += dt * dt;
  }
  return num / den;
}

inline double mean_of(const std::vector<int>& y) {
  if (y.empty()) return 0.0;
  double sum = 0.0;
  for (int v : y) sum += v;
  return sum / static_cast<double>(y.size());
}

struct FeatureMatrix {
  std::vector<std::string> columns;
  std::vector<std::string> mother_ids;  // row order
  std::vector<Point> rows;
};

// Rows follow `cohort` order. Every mother needs a trajectory with ground truth.
inline FeatureMatrix subsample_features(const std::vector<MotherProfile>& cohort,
                                        const std::vector<TrajectoryState>& trajectories) {
  if (trajectories.empty()) throw InsufficientDataError("select_subsample: no trajectories supplied");
  std::map<std::string, const std::vector<int>*> truth;
  for (const auto& t : trajectories) {
    if (!t.ground_truth) throw ValidationError("select_subsample: trajectory " + t.mother_id + " lacks ground truth");
    truth[t.mother_id] = &*t.ground_truth;
  }

  FeatureMatrix fm;
  fm.columns = {"enroll_gest_age", "age_category", "income_bracket", "education_level", "call_slot_preference",
                "enroll_delivery_status", "g", "p", "s", "l"};
  for (auto name : EnumTraits<Language>::kNames) fm.columns.push_back("language=" + std::string(name));
  for (auto name : EnumTraits<ChannelType>::kNames) fm.columns.push_back("channel_type=" + std::string(name));
  for (auto name : EnumTraits<PhoneOwner>::kNames) fm.columns.push_back("phone_owner=" + std::string(name));
  fm.columns.push_back("mean_engagement");
  fm.columns.push_back("engagement_slope");

  constexpr std::size_t kOrdinal = 10;
  const std::size_t slope_col = fm.columns.size() - 1;
  for (const auto& m : cohort) {
    auto it = truth.find(m.id);
    if (it == truth.end()) throw ValidationError("select_subsample: no trajectory for mother " + m.id);
    Point row(fm.columns.size(), 0.0);
    row[0] = m.enroll_gest_age;
    row[1] = static_cast<double>(enum_index(m.age_category));
    row[2] = static_cast<double>(enum_index(m.income_bracket));
    row[3] = static_cast<double>(enum_index(m.education_level));
    row[4] = static_cast<double>(enum_index(m.call_slot_preference));
    row[5] = static_cast<double>(enum_index(m.enroll_delivery_status));
    row[6] = m.g;
    row[7] = m.p;
    row[8] = m.s;
    row[9] = m.l;
    std::size_t col = kOrdinal;
    row[col + enum_index(m.language)] = 1.0;
    col += enum_count<Language>();
    row[col + enum_index(m.channel_type)] = 1.0;
    col += enum_count<ChannelType>();
    row[col + enum_index(m.phone_owner)] = 1.0;
    col += enum_count<PhoneOwner>();
    row[col] = mean_of(*it->second);
    row[slope_col] = ols_slope(*it->second);
    fm.mother_ids.push_back(m.id);
    fm.rows.push_back(std::move(row));
  }

  auto min_max = [&](std::size_t c) {
    double lo = fm.rows.front()[c];
    double hi = lo;
    for (const auto& r : fm.rows) {
      lo = std::min(lo, r[c]);
      hi = std::max(hi, r[c]);
    }
    for (auto& r : fm.rows) r[c] = hi > lo ? (r[c] - lo) / (hi - lo) : 0.0;
  };
  if (!fm.rows.empty()) {
    for (std::size_t c = 0; c < kOrdinal; ++c) min_max(c);
    min_max(slope_col);
  }
  return fm;
}

inline constexpr std::size_t kDefaultClusters = 10;

// Representative subsample: k-means on the encoded features, slots allotted to
// clusters by largest remainder, members nearest their centroid chosen first.
// Returns ids in ascending order; independent of the cohort's input order.
inline std::vector<std::string> select_subsample(std::vector<MotherProfile> cohort,
                                                 const std::vector<TrajectoryState>& trajectories,
                                                 std::size_t target_size, std::size_t k, std::uint64_t seed) {
  if (cohort.empty()) throw InsufficientDataError("select_subsample: empty cohort");
  if (trajectories.empty()) throw InsufficientDataError("select_subsample: no trajectories supplied");
  if (k == 0 || k > cohort.size()) throw ConfigError("select_subsample: k must be in [1, cohort size]");
  if (target_size > cohort.size()) throw ConfigError("select_subsample: target size exceeds cohort size");

  std::sort(cohort.begin(), cohort.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < cohort.size(); ++i) {
    if (cohort[i].id == cohort[i - 1].id) throw ValidationError("select_subsample: duplicate mother id " + cohort[i].id);
  }
  if (target_size == cohort.size()) {
    std::vector<std::string> all;
    for (const auto& m : cohort) all.push_back(m.id);
    return all;
  }

  const FeatureMatrix fm = subsample_features(cohort, trajectories);
  const KMeansResult km = kmeans(fm.rows, k, seed);

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < fm.rows.size(); ++i) members[km.assignment[i]].push_back(i);
  std::vector<std::size_t> sizes;
  for (const auto& m : members) sizes.push_back(m.size());
  const std::vector<std::size_t> quota = largest_remainder(sizes, target_size);

  std::vector<std::string> selected;
  for (std::size_t c = 0; c < k; ++c) {
    auto& group = members[c];
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i : group) ranked.emplace_back(squared_distance(fm.rows[i], km.centroids[c]), i);
    std::sort(ranked.begin(), ranked.end());  // distance, then id order
    for (std::size_t j = 0; j < quota[c]; ++j) selected.push_back(fm.mother_ids[ranked[j].second]);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

// ---------------------------------------------------------------------------
// Cohort CSV files.

inline const std::vector<std::string>& cohort_columns() {
  static const std::vector<std::string> kColumns = {
      "id",          "enroll_gest_age",      "age_category", "income_bracket",         "education_level",
      "language",    "phone_owner",          "call_slot_preference", "channel_type", "enroll_delivery_status",
      "g",           "p",                    "s",            "l"};
  return kColumns;
}

inline void write_cohort(std::ostream& out, const std::vector<MotherProfile>& cohort) {
  out << join(cohort_columns(), ",") << "\n";
  for (const auto& m : cohort) {
    out << m.id << ',' << m.enroll_gest_age << ',' << enum_name(m.age_category) << ','
        << enum_name(m.income_bracket) << ',' << enum_name(m.education_level) << ',' << enum_name(m.language)
        << ',' << enum_name(m.phone_owner) << ',' << enum_name(m.call_slot_preference) << ','
        << enum_name(m.channel_type) << ',' << enum_name(m.enroll_delivery_status) << ',' << m.g << ',' << m.p
        << ',' << m.s << ',' << m.l << "\n";
  }
}

inline void write_cohort(const std::filesystem::path& path, const std::vector<MotherProfile>& cohort) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write cohort file " + path.string());
  write_cohort(out, cohort);
}

inline std::vector<MotherProfile> read_cohort(std::istream& in, const std::string& source = "cohort") {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": missing header row");
  strip_bom(line);
  strip_cr(line);
  const auto header = split(line, ',');
  const auto& expected = cohort_columns();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (std::find(expected.begin(), expected.end(), header[i]) == expected.end()) {
      throw ValidationError(source + ": unknown column '" + header[i] + "'");
    }
    if (!position.emplace(header[i], i).second) throw ValidationError(source + ": duplicate column '" + header[i] + "'");
  }
  for (const auto& name : expected) {
    if (!position.count(name)) throw ValidationError(source + ": missing column '" + name + "'");
  }

  std::vector<MotherProfile> cohort;
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    ++row;
    const auto cells = split(line, ',');
    const std::string where = source + " row " + std::to_string(row);
    if (cells.size() != header.size()) {
      throw ValidationError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    }
    auto cell = [&](const std::string& name) -> const std::string& { return cells[position.at(name)]; };
    auto integer = [&](const std::string& name) {
      auto v = parse_int(cell(name));
      if (!v) throw ValidationError(where + ", field " + name + ": not an integer: '" + cell(name) + "'");
      return *v;
    };
    auto category = [&]<class E>(E) {
      const std::string name(EnumTraits<E>::kField);
      auto v = parse_enum<E>(cell(name));
      if (!v) throw ValidationError(where + ", field " + name + ": unknown category '" + cell(name) + "'");
      return *v;
    };

    MotherProfile m;
    m.id = cell("id");
    if (m.id.empty()) throw ValidationError(where + ", field id: empty");
    m.enroll_gest_age = integer("enroll_gest_age");
    m.age_category = category(AgeCategory{});
    m.income_bracket = category(IncomeBracket{});
    m.education_level = category(EducationLevel{});
    m.language = category(Language{});
    m.phone_owner = category(PhoneOwner{});
    m.call_slot_preference = category(CallSlot{});
    m.channel_type = category(ChannelType{});
    m.enroll_delivery_status = category(DeliveryStatus{});
    m.g = integer("g");
    m.p = integer("p");
    m.s = integer("s");
    m.l = integer("l");
    try {
      validate(m);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!seen.insert(m.id).second) throw ValidationError(where + ", field id: duplicate id " + m.id);
    cohort.push_back(std::move(m));
  }
  return cohort;
}

inline std::vector<MotherProfile> load_cohort(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open cohort file " + path.string());
  return read_cohort(in, path.filename().string());
}

inline void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write id list " + path.string());
  for (const auto& id : ids) out << id << "\n";
}

inline std::vector<std::string> load_id_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open id list " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Observed engagement: mother_id -> weekly binary sequence. File form is a
// long CSV "mother_id,week,engaged" with 0-based weeks.

using TruthTable = std::map<std::string, std::vector<int>>;

inline void write_truth(const std::filesystem::path& path, const TruthTable& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write truth file " + path.string());
  out << "mother_id,week,engaged\n";
  for (const auto& [id, seq] : truth) {
    for (std::size_t t = 0; t < seq.size(); ++t) out << id << ',' << t << ',' << seq[t] << "\n";
  }
}

inline TruthTable load_truth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open truth file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header row");
  strip_bom(line);
  strip_cr(line);
  if (line != "mother_id,week,engaged") throw ValidationError(path.string() + ": header must be mother_id,week,engaged");
  std::map<std::string, std::map<int, int>> cells;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    ++row;
    const auto f = split(line, ',');
    const auto week = f.size() == 3 ? parse_int(f[1]) : std::nullopt;
    const auto engaged = f.size() == 3 ? parse_int(f[2]) : std::nullopt;
    if (!week || !engaged || *week < 0 || (*engaged != 0 && *engaged != 1)) {
      throw ValidationError(path.string() + " row " + std::to_string(row) + ": malformed truth row");
    }
    cells[f[0]][*week] = *engaged;
  }
  TruthTable truth;
  for (const auto& [id, weeks] : cells) {
    std::vector<int> seq;
    for (const auto& [week, value] : weeks) {
      if (week != static_cast<int>(seq.size())) throw ValidationError(path.string() + ": gap in weeks for " + id);
      seq.push_back(value);
    }
    truth[id] = std::move(seq);
  }
  return truth;
}

}  // namespace mhsim
