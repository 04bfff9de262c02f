#pragma once

// Categorical sociodemographic fields and their canonical spellings. The
// canonical strings are the on-disk representation in cohort files and the
// text substituted into prompts.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "mhsim/error.hpp"

namespace mhsim {

enum class AgeCategory { kUnder20, k20To24, k25To29, k30To34, k35Plus };
enum class IncomeBracket { k0To5000, k5001To10000, k10001To15000, k15001To20000, k20001To25000, k25001To30000 };
enum class EducationLevel { kIlliterate, k1To5Years, k6To9Years, k10thPass, k12thPass, kGraduate, kPostgraduate };
enum class Language { kHindi, kMarathi, kKannada, kGujarati, kEnglish };
enum class PhoneOwner { kMother, kHusband, kFamily };
enum class CallSlot { k0830To1030, k1030To1230, k1230To1530, k1530To1730, k1730To1930, k1930To2130 };
enum class ChannelType { kCommunity, kHospital, kArmman };
enum class DeliveryStatus { kPregnant, kPostpartum };

template <class E>
struct EnumTraits;

#define MHSIM_ENUM_NAMES(Type, field_name, ...)                                 \
  template <>                                                                    \
  struct EnumTraits<Type> {                                                      \
    static constexpr std::string_view kField = field_name;                       \
    static constexpr auto kNames = std::to_array<std::string_view>({__VA_ARGS__}); \
  };

MHSIM_ENUM_NAMES(AgeCategory, "age_category", "<20", "20-24", "25-29", "30-34", "35+")
MHSIM_ENUM_NAMES(IncomeBracket, "income_bracket", "0-5000", "5001-10000", "10001-15000", "15001-20000",
                 "20001-25000", "25001-30000")
MHSIM_ENUM_NAMES(EducationLevel, "education_level", "illiterate", "1-5 years", "6-9 years", "10th pass",
                 "12th pass", "graduate", "postgraduate")
MHSIM_ENUM_NAMES(Language, "language", "Hindi", "Marathi", "Kannada", "Gujarati", "English")
MHSIM_ENUM_NAMES(PhoneOwner, "phone_owner", "mother", "husband", "family")
MHSIM_ENUM_NAMES(CallSlot, "call_slot_preference", "8:30-10:30", "10:30-12:30", "12:30-15:30", "15:30-17:30",
                 "17:30-19:30", "19:30-21:30")
MHSIM_ENUM_NAMES(ChannelType, "channel_type", "community", "hospital", "ARMMAN")
MHSIM_ENUM_NAMES(DeliveryStatus, "enroll_delivery_status", "pregnant", "postpartum")

#undef MHSIM_ENUM_NAMES

template <class E>
constexpr std::size_t enum_count() {
  return EnumTraits<E>::kNames.size();
}

template <class E>
constexpr std::size_t enum_index(E value) {
  return static_cast<std::size_t>(value);
}

template <class E>
constexpr bool enum_valid(E value) {
  return static_cast<std::size_t>(value) < enum_count<E>();
}

template <class E>
std::string_view enum_name(E value) {
  if (!enum_valid(value)) throw ValidationError(std::string(EnumTraits<E>::kField) + ": invalid category");
  return EnumTraits<E>::kNames[enum_index(value)];
}

template <class E>
std::optional<E> parse_enum(std::string_view text) {
  const auto& names = EnumTraits<E>::kNames;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == text) return static_cast<E>(i);
  }
  return std::nullopt;
}

template <class E>
constexpr E enum_from_index(std::size_t index) {
  return static_cast<E>(index);
}

}  // namespace mhsim
