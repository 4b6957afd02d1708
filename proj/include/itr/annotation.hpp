#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "itr/error.hpp"

namespace itr {

// Experimental arm an annotation is served under.
enum class Condition { NoHighlights, Lime, Covar, Random };

inline constexpr std::array<Condition, 4> kAllConditions = {Condition::NoHighlights, Condition::Lime, Condition::Covar,
                                                            Condition::Random};

inline std::string_view condition_name(Condition c) {
  switch (c) {
    case Condition::NoHighlights: return "no_highlights";
    case Condition::Lime: return "lime";
    case Condition::Covar: return "covar";
    case Condition::Random: return "random";
  }
  return "?";
}

inline Condition parse_condition(std::string_view s) {
  for (auto c : kAllConditions) {
    if (condition_name(c) == s) return c;
  }
  fail(Errc::ParseError, "unknown condition '" + std::string(s) + "'");
}

// One timed judgment. label_given is zero-based (wire format is 1-based).
struct AnnotationRecord {
  std::string assignment_id;
  std::string worker_id;
  std::string doc_id;
  Condition condition = Condition::NoHighlights;
  std::size_t label_given = 0;
  double elapsed_ms = 0;
  std::int64_t server_received_at_ms = 0;
  std::optional<std::size_t> true_label;  // joined at analysis time
};

}  // namespace itr
