#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include "cats/errors.hpp"

namespace cats {

// Semantic priority of application data: 0 is critical interactive data,
// 4 is background traffic.
class Priority {
 public:
  static constexpr int kLevels = 5;
  static constexpr int kHighest = 0;
  static constexpr int kLowest = kLevels - 1;

  constexpr Priority() = default;
  constexpr explicit Priority(int level) : level_(checked(level)) {}

  static constexpr bool valid(int level) { return level >= 0 && level < kLevels; }
  static std::optional<Priority> from_int(int level) {
    if (!valid(level)) return std::nullopt;
    return Priority(level);
  }

  constexpr int level() const { return level_; }
  constexpr std::size_t index() const { return static_cast<std::size_t>(level_); }

  friend constexpr auto operator<=>(Priority, Priority) = default;

 private:
  static constexpr std::uint8_t checked(int level) {
    if (!valid(level)) {
      throw UsageError("priority level " + std::to_string(level) + " outside 0.." +
                       std::to_string(kLowest));
    }
    return static_cast<std::uint8_t>(level);
  }

  std::uint8_t level_ = 0;
};

}  // namespace cats
