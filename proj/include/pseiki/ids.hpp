#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace pseiki {

// Identity tag shared by both blackboard panels. Value 0 asks the blackboard
// to assign the next free id.
struct ElementId {
  std::uint32_t value = 0;

  constexpr auto operator<=>(const ElementId&) const = default;
  constexpr bool is_auto() const { return value == 0; }
};

// Label hypotheses are model-panel element ids.
using Label = ElementId;

// Open-world hypothesis: the data element corresponds to nothing in the model.
inline constexpr Label kUnmatched{0xFFFFFFFFu};

inline std::string to_string(ElementId id) {
  if (id == kUnmatched) return "null";
  return std::to_string(id.value);
}

}  // namespace pseiki

template <>
struct std::hash<pseiki::ElementId> {
  std::size_t operator()(pseiki::ElementId id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
