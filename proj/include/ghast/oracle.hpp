#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ghast/events.hpp"
#include "ghast/lct.hpp"
#include "ghast/params.hpp"
#include "ghast/store.hpp"
#include "ghast/treegraph.hpp"

namespace ghast {

struct IllegalEventSequence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PotentialBreakdown {
  bool defined = false;  // block on chain C and old enough in G_min
  double p_with = 0;
  double p_adv = 0;
  double p_sp = 0;
  double total() const { return p_with + p_adv + p_sp; }
};

struct EventValueParts {
  double m = 0, h = 0, f = 0, t = 0;
  double sum() const { return m + h + f + t; }
};

struct OracleViolation {
  std::uint64_t event_index;
  std::string invariant;
};

struct OracleReport {
  std::uint64_t events_checked = 0;
  std::vector<OracleViolation> violations;
  std::uint64_t thm4_exceptions = 0;  // side-condition cases, logged not failed
  std::uint64_t lemma1_checks = 0;
  std::uint64_t thm3_checks = 0;
  std::string to_json() const;
};

// Observe-only adversary-state tracker. Consumes the simulator's event stream
// and maintains (G_gen, G_max, G_min, M, f, C, S, v) plus per-event checks of
// the structural claims and the potential-value step bounds. Subtree weights
// over the five weighted sets are kept in link-cut trees: adding a block to a
// set is a path update along its chain, a subtree weight is a point read.
class AnalysisOracle {
 public:
  AnalysisOracle(const BlockStore& store, ProtocolParams params, std::uint64_t audit_every = 997);

  void step(const Event& e);

  // Spec surface over the current state.
  bool special_status() const;
  double adv_margin(BlockId b) const;  // SubTW(G_min u {f}, b) - SibSubTW(G_max, b)
  PotentialBreakdown potential(BlockId b) const;
  double event_value(const Event& e) const;          // Delta(S', e) for the next event
  EventValueParts event_value_components(const Event& e) const;
  // Max potential over chain blocks whose past does not cover the reference
  // graph, identified by its DAG tips; 0 when empty or all undefined.
  double global_potential(const std::vector<BlockId>& ref_tips) const;

  // Registers the current G_min as a reference graph for per-event Theorem-4
  // step-bound checking.
  void add_probe();

  const std::vector<BlockId> chain() const;
  BlockId chain_tip() const { return store_->id_of(chain_.back().idx); }
  double special_value() const { return v_; }
  std::optional<BlockId> flag() const;
  bool in_g_max(BlockId b) const;
  bool in_g_min(BlockId b) const;

  const OracleReport& report() const { return report_; }
  OracleReport& report() { return report_; }

  // Full from-scratch rebuild of chain C and the margin conditions; records
  // violations instead of throwing. Runs automatically every audit_every
  // events.
  void audit();

 private:
  enum Flag : std::uint8_t {
    kGen = 1,
    kMax = 2,
    kMin = 4,
    kMal = 8,
    kSet = 16,  // member of S
  };

  struct Slot {
    std::uint32_t idx;
    std::uint32_t th;
    double prev_p = 0;
    bool prev_defined = false;
  };

  struct Probe {
    std::vector<std::uint32_t> tips;
    std::size_t boundary = 0;  // first chain position whose past covers the probe
    double prev_global = 0;
    bool prev_valid = false;
  };

  bool has(std::uint32_t idx, Flag f) const { return idx < flags_.size() && (flags_[idx] & f); }
  void ensure_node(std::uint32_t idx);
  std::uint64_t weight_of(std::uint32_t idx) const { return store_->rec(idx).weight; }
  bool is_heavy_block(std::uint32_t idx) const {
    return weight_of(idx) == params_.eta_w && params_.eta_w > 1;
  }
  void add_to_set(LinkCutTree& t, std::uint32_t idx, std::int64_t w);
  double adv_of(std::uint32_t idx) const;
  std::uint64_t sib_max_gmax(std::uint32_t idx) const;
  bool old_in_min(std::uint32_t idx) const;
  PotentialBreakdown potential_at(std::size_t pos) const;
  std::optional<std::uint32_t> positive_child(std::uint32_t parent, std::uint64_t event_hint);
  void rebuild_chain_positions();
  void update_chain(const Event& e, std::uint32_t eidx, bool flag_was_removed,
                    std::uint32_t old_flag_idx);
  void extend_chain(std::uint32_t pre_tip_idx);
  void run_checks(const Event& e, std::uint32_t eidx, double delta, bool spe_pre,
                  std::uint32_t pre_tip, double pre_tip_p, bool pre_tip_p_defined,
                  std::uint32_t pre_minmax_th, double v_pre);
  void violation(const char* name);
  bool ancestor_of(std::uint32_t anc, std::uint32_t idx) const;
  bool reaches(std::uint32_t from, std::uint32_t target) const;

  const BlockStore* store_;
  ProtocolParams params_;
  std::uint64_t audit_every_;
  std::uint64_t event_index_ = 0;

  std::vector<std::uint8_t> flags_;
  std::vector<LinkCutTree::Handle> handles_;  // shared by all trees (same ids)
  // Point reads splay, so the trees are mutable state behind const queries.
  mutable LinkCutTree w_max_;    // weights of G_max members
  mutable LinkCutTree w_minf_;   // weights of G_min plus the flag block
  mutable LinkCutTree w_with_;   // weights of G_gen \ G_max
  mutable LinkCutTree w_dm_;     // weights of (G_max \ G_min) ^ M
  mutable LinkCutTree w_dms_;    // weights of ((G_max \ G_min) ^ M) \ S
  mutable LinkCutTree w_dn1_;    // weight-1 honest blocks in G_max \ G_min

  std::int64_t cnt_h1_ = 0;   // honest weight-1 blocks in transit
  std::int64_t cnt_hw_ = 0;   // honest heavy blocks in transit
  std::uint32_t minmax_th_ = 0;
  std::uint32_t flag_idx_ = kNoIndex;
  double v_ = 0;
  std::set<std::uint32_t> dm_outside_s_;  // in-transit malicious, not yet in S

  std::vector<Slot> chain_;
  std::vector<std::int32_t> chain_pos_;  // arena idx -> position + 1, 0 = absent
  std::size_t last_cut_pos_ = static_cast<std::size_t>(-1);  // per event
  std::vector<Probe> probes_;

  OracleReport report_;
};

}  // namespace ghast
