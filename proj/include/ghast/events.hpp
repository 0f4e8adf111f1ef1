#pragma once

#include <cstdint>
#include <string_view>

#include "ghast/block.hpp"

namespace ghast {

// The four event kinds the analysis state machine consumes.
enum class EventKind : std::uint8_t { hGenRls, mGen, mRls, Arvl };

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::hGenRls: return "hGenRls";
    case EventKind::mGen: return "mGen";
    case EventKind::mRls: return "mRls";
    case EventKind::Arvl: return "Arvl";
  }
  return "?";
}

struct Event {
  std::int64_t round = 0;
  BlockId block = 0;
  EventKind kind = EventKind::hGenRls;

  bool operator==(const Event&) const = default;
};

}  // namespace ghast
