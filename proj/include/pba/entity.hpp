#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace pba {

enum class EntityLabel { PER, LOC };

inline constexpr std::string_view label_name(EntityLabel label) noexcept {
  return label == EntityLabel::PER ? "PER" : "LOC";
}

inline std::optional<EntityLabel> parse_label(std::string_view s) noexcept {
  if (s == "PER") return EntityLabel::PER;
  if (s == "LOC") return EntityLabel::LOC;
  return std::nullopt;
}

// Mask placeholder for a label: "[PER]" or "[LOC]", five code points each.
inline std::string placeholder(EntityLabel label) { return "[" + std::string(label_name(label)) + "]"; }

inline constexpr std::size_t kPlaceholderLength = 5;

// Half-open code-point span [start, end) with a label.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  EntityLabel label = EntityLabel::PER;

  std::size_t length() const noexcept { return end - start; }
  bool overlaps(const EntitySpan& o) const noexcept { return start < o.end && o.start < end; }

  bool operator==(const EntitySpan&) const = default;
  auto operator<=>(const EntitySpan&) const = default;
};

}  // namespace pba
