#pragma once

#include <cstdint>
#include <stdexcept>

#include "ghast/risk.hpp"
#include "ghast/treegraph.hpp"

namespace ghast {

struct NotOnPivot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfirmationConfig {
  double target_risk = 2e-5;
  double beta = 0.1;             // adversary fraction assumed by the estimator
  std::int64_t t_gap = 60;       // t = m + t_gap
  std::int64_t theta_gap = 9600; // theta = t + theta_gap
  std::int64_t z_gap = 10;       // withheld-timer-chain allowance (heuristic)
  std::int64_t slice_size = 50;
};

struct ConfirmDecision {
  bool confirmed = false;
  double risk = 1.0;
  double section_risk = 1.0;  // risk under the non-adaptive assumption
  double break_risk = 1.0;    // risk of the assumption breaking
};

// Full confirmation check for a pivot block: derives (m, n) from the graph,
// evaluates the section risk and the assumption-break risk over chain slices,
// and compares the total against the target. Throws NotOnPivot when the block
// is not on the graph's pivot chain.
ConfirmDecision confirm_decision(const TreeGraph& g, BlockId b, double target_risk,
                                 const ConfirmationConfig& cc);

}  // namespace ghast
