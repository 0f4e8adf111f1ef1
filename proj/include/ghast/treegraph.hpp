#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ghast/block.hpp"
#include "ghast/params.hpp"
#include "ghast/store.hpp"

namespace ghast {

struct GenesisHasNoSiblings : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Chain from genesis to a tip; consecutive entries are parent/child.
using ChainView = std::vector<BlockId>;

// Dependency closure of a block (block excluded), materialized as an index
// view over the shared store. Indices ascend, which is a topological order.
class PastView {
 public:
  PastView(const BlockStore& store, std::vector<std::uint32_t> members)
      : store_(&store), members_(std::move(members)) {}

  const BlockStore& store() const { return *store_; }
  const std::vector<std::uint32_t>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  bool contains_idx(std::uint32_t idx) const;
  std::uint64_t total_weight() const;

 private:
  const BlockStore* store_;
  std::vector<std::uint32_t> members_;
};

// Fenwick tree with append/truncate, mirroring a plain array.
class PrefixSums {
 public:
  void clear();
  void push_back(std::uint64_t v);
  void truncate(std::size_t n);
  void add(std::size_t i, std::int64_t delta);
  std::uint64_t at(std::size_t i) const { return a_[i]; }
  // sum of a_[0..i]; i = SIZE_MAX allowed (returns 0 via wraparound guard)
  std::uint64_t prefix_inclusive(std::size_t i) const;
  std::size_t size() const { return a_.size(); }

 private:
  std::vector<std::uint64_t> a_;
  std::vector<std::uint64_t> t_;
};

// One honest node's view of the Tree-Graph: append-only membership over the
// shared BlockStore plus the caches that make per-round work cheap. The pivot
// chain is maintained incrementally: each weighted insert touches its fork
// position on the pivot, and only a flip or extension rebuilds a suffix.
//
// Single writer per instance; reads are safe between writes.
class TreeGraph {
 public:
  enum class Insert { ok, missing_dependency, duplicate_id, invalid_parent };

  struct Options {
    bool validate_parent = false;  // reject parent != Pivot(past) tip
  };

  explicit TreeGraph(const BlockStore& store) : TreeGraph(store, Options{}) {}
  TreeGraph(const BlockStore& store, Options opt);

  const BlockStore& store() const { return *store_; }

  Insert insert(BlockId id);
  Insert insert_idx(std::uint32_t idx);

  bool contains(BlockId id) const;
  bool contains_idx(std::uint32_t idx) const;
  std::size_t size() const { return size_; }
  std::uint64_t total_weight() const { return total_weight_; }

  // Spec surface. Queries throw UnknownBlock when the block is not a member.
  ChainView chain_of(BlockId id) const;
  std::uint64_t subtree_weight(BlockId id) const;
  std::vector<BlockId> children(BlockId id) const;  // positive-weight children only
  std::optional<BlockId> best_child(BlockId id) const;
  ChainView pivot() const;
  std::uint64_t sib_subtree_weight(BlockId id) const;
  std::vector<BlockId> order() const;
  PastView past(BlockId id) const;

  // DAG tips: members with no member child and no member referrer, ascending
  // by store index (deterministic).
  std::vector<BlockId> dag_tips() const;
  const std::set<std::uint32_t>& tip_indices() const { return tips_; }

  BlockId pivot_tip() const { return store_->id_of(pivot_.back()); }
  std::uint32_t pivot_tip_idx() const { return pivot_.back(); }
  std::size_t pivot_length() const { return pivot_.size(); }
  std::uint32_t pivot_at(std::size_t i) const { return pivot_[i]; }
  std::optional<std::uint32_t> pivot_pos_of(std::uint32_t idx) const;

  std::uint32_t max_timer_height() const { return max_th_; }
  std::uint64_t subtree_weight_at_pos(std::size_t i) const;
  std::uint64_t max_sibling_weight_at_pos(std::size_t i) const { return slots_[i].max_sib; }
  // Total weight under off-pivot children of pivot positions 0..i.
  std::uint64_t off_pivot_weight_through(std::size_t i) const {
    return sib_out_.prefix_inclusive(i);
  }
  // Weight under off-pivot children of one pivot position.
  std::uint64_t off_pivot_weight_at(std::size_t i) const { return sib_out_.at(i); }

  // Adapt scan support: true iff some non-genesis pivot block has an old
  // parent and a dominance margin below eta_a (condition 1 of the liveness
  // detector). Uses the lazily maintained low-margin position set.
  bool has_low_margin_old_parent(const ProtocolParams& p);
  bool tip_is_old(const ProtocolParams& p) const;

  // Stats for metrics: pivot reorganizations observed by this view.
  struct ReorgEvent {
    std::uint32_t fork_pos;       // deepest common position
    std::uint32_t old_len;
  };
  std::vector<ReorgEvent>& reorg_log() { return reorg_log_; }

  // Debug: recompute every cache from scratch and compare. Throws
  // std::logic_error on divergence.
  void audit() const;

 private:
  struct Slot {
    std::uint32_t idx = 0;
    std::uint64_t own_w = 0;
    std::uint64_t chain_pref = 0;  // own weights of pivot[0..this]
    std::uint64_t max_sib = 0;     // max candidate-sibling subtree weight
    std::uint32_t th = 0;          // extended timer height of the block
  };

  bool member(std::uint32_t idx) const {
    return idx < watermark_ || pending_.count(idx) != 0;
  }

  void add_member(std::uint32_t idx);
  std::uint64_t subtree_weight_idx(std::uint32_t idx) const;
  std::uint64_t dfs_subtree_sum(std::uint32_t root) const;
  void dfs_aggregates(std::uint32_t root,
                      std::unordered_map<std::uint32_t, std::uint64_t>& agg) const;
  // First pivot ancestor of x: returns (fork position, top off-pivot child).
  std::pair<std::uint32_t, std::uint32_t> fork_of(std::uint32_t x);
  void note_weight(std::uint32_t idx, std::uint64_t w);
  void flip(std::uint32_t f_pos, std::uint32_t challenger);
  void extend_from_tip(std::uint32_t challenger);
  void regen_suffix(std::uint32_t branch_root, std::uint64_t first_max_sib);
  void append_slot(std::uint32_t idx, std::uint64_t sib_out, std::uint64_t max_sib);
  void maybe_flag_low_margin(std::size_t pos);
  std::uint64_t margin_at(std::size_t pos) const;
  bool parent_is_past_pivot_tip(std::uint32_t idx) const;

  const BlockStore* store_;
  Options opt_;
  const ProtocolParams* params_;

  std::uint32_t watermark_ = 0;
  std::unordered_set<std::uint32_t> pending_;
  std::size_t size_ = 0;
  std::uint64_t total_weight_ = 0;
  std::uint32_t max_th_ = 0;

  std::set<std::uint32_t> tips_;
  std::vector<std::uint32_t> pivot_;
  std::vector<Slot> slots_;
  PrefixSums sib_out_;  // per pivot position: weight under its off-pivot children
  std::unordered_map<std::uint32_t, std::uint32_t> pos_;       // idx -> position
  std::unordered_map<std::uint32_t, std::uint64_t> counters_;  // off-pivot child -> subtree weight
  std::set<std::uint32_t> low_margin_;                         // positions, lazily pruned
  std::unordered_map<std::uint32_t, std::uint32_t> fork_memo_; // stem block -> top child
  std::vector<std::uint32_t> visited_scratch_;
  std::vector<ReorgEvent> reorg_log_;
};

// Brute-force helpers shared by validation paths, the analysis oracle and the
// adversaries. They only assume store indices are topologically ordered.
std::vector<std::uint32_t> closure_of(const BlockStore& store, std::uint32_t idx);
Strategy adapt_of_closure(const BlockStore& store, const std::vector<std::uint32_t>& closure,
                          const ProtocolParams& p);

// Snapshot export/import: one block per line,
//   id parent ref1,ref2,... creator born_round weight
// with "-" for the missing parent (genesis) and for an empty ref list.
std::string export_snapshot(const TreeGraph& g);
// Parses a snapshot into a fresh store (params supply the weight rules).
// Throws ConfigError with a line diagnostic on malformed input.
BlockStore import_snapshot(const std::string& text, const ProtocolParams& params);

}  // namespace ghast
