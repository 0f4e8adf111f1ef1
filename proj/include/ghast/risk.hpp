#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ghast::risk {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonConvergent : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
double reg_inc_beta(double x, double a, double b);

// Tail of the negative binomial: probability of at least k failures before
// the given number of successes, where each trial fails with probability
// fail_p. Equals I_{fail_p}(k, successes).
double nb_tail(std::int64_t k, std::int64_t successes, double fail_p);

// Pr[Binomial(n, p) >= k].
double binom_upper_tail(std::int64_t k, std::int64_t n, double p);

// Chernoff factors for the subtree-advantage walk: g1 bounds the per-block
// moment in the normal phase (steps of +/-1), g2 in the adaptive phase (steps
// of +/-eta_w taken by one block in eta_w). Both are exact moment generating
// functions of the extremal walk, evaluated in the log domain.
struct GPair {
  double g1;
  double g2;
};
GPair g_funcs(double s, double beta, std::uint64_t eta_w);
double ln_g1(double s, double beta);
double ln_g2(double s, double beta, std::uint64_t eta_w);

struct RiskQuery {
  std::int64_t m = 0;      // honest blocks generated since b.parent (upper bound)
  std::int64_t n = 0;      // subtree advantage of b over its best sibling (lower bound)
  std::int64_t theta = 0;  // assumption horizon in blocks
  std::int64_t t = 0;      // tail split point, t <= theta
  double beta = 0.0;
  std::uint64_t eta_w = 1;

  void validate() const;
};

// Pr[the advantage walk ever hits zero], given K adversary weight already in
// play and T blocks already generated. Exactly 1 when K >= n; non-decreasing
// in K and T; series truncated once the geometric continuation bound drops
// below 1e-12.
double partial_risk(std::int64_t K, std::int64_t T, const RiskQuery& q);

// Section-level risk under the non-adaptive assumption.
double confirmation_risk(const RiskQuery& q);

// One slice of the examined chain for the assumption-break bound. Values are
// the worst over the slice: maximum m and l, minimum w, and the timer-height
// gap of the oldest block.
struct BreakSlice {
  std::int64_t m = 0;       // honest blocks between a.parent and b.parent
  std::int64_t l = 0;       // honest weight in sibling subtrees of a
  std::int64_t w = 0;       // subtree weight of a at the parent's creation
  std::int64_t height_gap = 0;  // Z - TimerHeight(a.parent) for the oldest a
};

struct BreakQuery {
  std::int64_t theta = 0;
  std::uint64_t eta_t = 360;
  std::uint64_t eta_b = 160;
  std::uint64_t eta_a = 1800;
  std::uint64_t eta_w = 600;
  double beta = 0.0;
  std::int64_t z_gap = 10;  // upper bound on Z - MaxTH at b.parent
  std::vector<BreakSlice> slices;
};

// Probability that enough timer blocks arrive before the deadline to age a
// block with the given height gap.
double e1_bound(std::int64_t a_height_gap, const BreakQuery& bq);

// Probability that the adversary assembles w - eta_a - l block weight around
// one slice before the deadline. 1 when the bound is vacuous (w <= eta_a + l).
double e2_bound(const BreakSlice& s, const BreakQuery& bq);

double assumption_break_risk(const BreakQuery& bq);

}  // namespace ghast::risk
