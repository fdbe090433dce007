#pragma once

#include <optional>
#include <string_view>

namespace bmui {

// Class order matches the classifier's logits.
enum class Direction { flex = 0, extend = 1, rest = 2 };

inline constexpr int kDirectionCount = 3;

constexpr std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::flex: return "flex";
    case Direction::extend: return "extend";
    case Direction::rest: return "rest";
  }
  return "rest";
}

constexpr std::optional<Direction> parse_direction(std::string_view s) noexcept {
  if (s == "flex") return Direction::flex;
  if (s == "extend") return Direction::extend;
  if (s == "rest") return Direction::rest;
  return std::nullopt;
}

}  // namespace bmui
