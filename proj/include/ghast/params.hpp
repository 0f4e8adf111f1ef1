#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ghast {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ProtocolMode : std::uint8_t { ghast, plain_ghost, nakamoto_ref };

// Consensus parameters plus the two analysis-only thresholds. Defaults are the
// Conflux production set (eta_w=600, eta_t=360, eta_a=3*eta_w, eta_b=160) with
// s_m = 1.5*lambda and s_h = 3*lambda resolved at config load.
struct ProtocolParams {
  double eta_d = 10.0;           // puzzle difficulty: expected queries per block
  std::uint64_t eta_w = 600;     // heavy-block ratio and heavy weight
  std::uint64_t eta_a = 1800;    // dominance threshold
  std::uint64_t eta_t = 360;     // timer-block ratio
  std::uint64_t eta_b = 160;     // timer-height age threshold
  double s_m = 90.0;             // analysis threshold (oracle only)
  double s_h = 180.0;            // analysis threshold (oracle only)
  ProtocolMode mode = ProtocolMode::ghast;

  std::uint64_t heavy_weight() const { return mode == ProtocolMode::ghast ? eta_w : 1; }

  void validate(bool analysis_enabled) const {
    if (eta_d < 1.0) throw ConfigError("eta_d must be >= 1");
    if (eta_w < 1) throw ConfigError("eta_w must be >= 1");
    if (eta_t < 1) throw ConfigError("eta_t must be >= 1");
    if (eta_b < 1) throw ConfigError("eta_b must be >= 1");
    if (analysis_enabled) {
      if (s_m < 0 || s_h < 0) throw ConfigError("s_m and s_h must be non-negative");
      if (2.0 * (s_m + s_h) > static_cast<double>(eta_w))
        throw ConfigError("analysis thresholds violate 2*s_h + 2*s_m <= eta_w");
      if (static_cast<double>(eta_a) < 2.0 * s_m + 2.0 * s_h + 2.0 * static_cast<double>(eta_w))
        throw ConfigError("eta_a must be >= 2*s_m + 2*s_h + 2*eta_w when analysis is enabled");
    }
  }
};

}  // namespace ghast
