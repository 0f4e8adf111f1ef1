#include "ghast/treegraph.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace ghast {

namespace {
constexpr std::uint32_t kGenesisIdx = 0;

bool beats(std::uint64_t w_a, BlockId id_a, std::uint64_t w_b, BlockId id_b) {
  return w_a > w_b || (w_a == w_b && id_a < id_b);
}
}  // namespace

// ---------------------------------------------------------------------------
// PastView

bool PastView::contains_idx(std::uint32_t idx) const {
  return std::binary_search(members_.begin(), members_.end(), idx);
}

std::uint64_t PastView::total_weight() const {
  std::uint64_t w = 0;
  for (auto i : members_) w += store_->rec(i).weight;
  return w;
}

// ---------------------------------------------------------------------------
// PrefixSums

void PrefixSums::clear() {
  a_.clear();
  t_.clear();
}

std::uint64_t PrefixSums::prefix_inclusive(std::size_t i) const {
  if (i == static_cast<std::size_t>(-1) || a_.empty()) return 0;
  if (i >= a_.size()) i = a_.size() - 1;
  std::uint64_t s = 0;
  for (std::size_t k = i + 1; k > 0; k -= k & (~k + 1)) s += t_[k - 1];
  return s;
}

void PrefixSums::push_back(std::uint64_t v) {
  std::size_t n = a_.size();
  a_.push_back(v);
  std::size_t k = n + 1;
  std::uint64_t lo = k & (~k + 1);
  // t_[n] covers a_[(k-lo)..n]
  std::uint64_t s = prefix_inclusive(n - 1);
  std::uint64_t s2 = (k - lo == 0) ? 0 : prefix_inclusive(k - lo - 1);
  t_.push_back(s - s2 + v);
}

void PrefixSums::truncate(std::size_t n) {
  a_.resize(n);
  t_.resize(n);
}

void PrefixSums::add(std::size_t i, std::int64_t delta) {
  a_[i] += static_cast<std::uint64_t>(delta);
  for (std::size_t k = i + 1; k <= a_.size(); k += k & (~k + 1))
    t_[k - 1] += static_cast<std::uint64_t>(delta);
}

// ---------------------------------------------------------------------------
// TreeGraph

TreeGraph::TreeGraph(const BlockStore& store, Options opt)
    : store_(&store), opt_(opt), params_(&store.params()) {}

bool TreeGraph::contains(BlockId id) const {
  auto idx = store_->find(id);
  return idx && member(*idx);
}

bool TreeGraph::contains_idx(std::uint32_t idx) const { return member(idx); }

void TreeGraph::add_member(std::uint32_t idx) {
  if (idx == watermark_) {
    ++watermark_;
    while (pending_.erase(watermark_)) ++watermark_;
  } else {
    pending_.insert(idx);
  }
  ++size_;
}

TreeGraph::Insert TreeGraph::insert(BlockId id) {
  auto idx = store_->find(id);
  if (!idx) return Insert::missing_dependency;
  return insert_idx(*idx);
}

TreeGraph::Insert TreeGraph::insert_idx(std::uint32_t idx) {
  if (member(idx)) return Insert::duplicate_id;
  const BlockRecord& rec = store_->rec(idx);
  if (idx != kGenesisIdx) {
    if (!member(rec.parent_idx)) return Insert::missing_dependency;
    for (auto r : rec.ref_idx)
      if (!member(r)) return Insert::missing_dependency;
    if (pivot_.empty()) return Insert::missing_dependency;  // genesis first
    if (opt_.validate_parent && !parent_is_past_pivot_tip(idx)) return Insert::invalid_parent;
  }
  add_member(idx);

  tips_.erase(rec.parent_idx);
  for (auto r : rec.ref_idx) tips_.erase(r);
  tips_.insert(idx);

  if (rec.timer_tag) max_th_ = std::max(max_th_, rec.timer_height);

  if (idx == kGenesisIdx) {
    total_weight_ = rec.weight;
    pivot_.push_back(idx);
    pos_[idx] = 0;
    slots_.push_back(Slot{idx, rec.weight, rec.weight, 0, rec.timer_height});
    sib_out_.push_back(0);
    return Insert::ok;
  }

  total_weight_ += rec.weight;
  if (rec.weight > 0) note_weight(idx, rec.weight);
  return Insert::ok;
}

std::pair<std::uint32_t, std::uint32_t> TreeGraph::fork_of(std::uint32_t x) {
  // Walk the parent chain up to the first pivot member, memoizing the top
  // off-pivot child. A memo entry stays valid while its target is still an
  // off-pivot child of a pivot block.
  std::uint32_t cur = x;
  std::uint32_t prev = kNoIndex;
  visited_scratch_.clear();
  while (true) {
    auto pit = pos_.find(cur);
    if (pit != pos_.end()) {
      for (auto v : visited_scratch_) fork_memo_[v] = prev;
      return {pit->second, prev};
    }
    auto mit = fork_memo_.find(cur);
    if (mit != fork_memo_.end()) {
      std::uint32_t top = mit->second;
      std::uint32_t top_parent = store_->rec(top).parent_idx;
      auto ppos = pos_.find(top_parent);
      if (ppos != pos_.end() && !pos_.count(top)) {
        for (auto v : visited_scratch_) fork_memo_[v] = top;
        return {ppos->second, top};
      }
    }
    visited_scratch_.push_back(cur);
    prev = cur;
    cur = store_->rec(cur).parent_idx;
  }
}

std::uint64_t TreeGraph::margin_at(std::size_t pos) const {
  std::uint64_t sub = subtree_weight_at_pos(pos);
  std::uint64_t sib = slots_[pos].max_sib;
  return sub >= sib ? sub - sib : 0;
}

void TreeGraph::maybe_flag_low_margin(std::size_t pos) {
  if (pos == 0) return;
  std::uint64_t sub = subtree_weight_at_pos(pos);
  if (sub < slots_[pos].max_sib + params_->eta_a)
    low_margin_.insert(static_cast<std::uint32_t>(pos));
}

void TreeGraph::note_weight(std::uint32_t idx, std::uint64_t w) {
  auto [f_pos, top] = fork_of(idx);
  std::uint64_t agg = (counters_[top] += w);
  sib_out_.add(f_pos, static_cast<std::int64_t>(w));

  const BlockRecord& top_rec = store_->rec(top);
  bool candidate = top_rec.weight > 0;
  if (f_pos + 1 < pivot_.size()) {
    if (!candidate) return;
    Slot& next = slots_[f_pos + 1];
    if (agg > next.max_sib) {
      next.max_sib = agg;
      maybe_flag_low_margin(f_pos + 1);
    }
    std::uint64_t w_pivot = subtree_weight_at_pos(f_pos + 1);
    if (beats(agg, top_rec.block.id, w_pivot, store_->id_of(pivot_[f_pos + 1])))
      flip(f_pos, top);
  } else if (candidate) {
    extend_from_tip(top);
  }
}

void TreeGraph::flip(std::uint32_t f_pos, std::uint32_t challenger) {
  reorg_log_.push_back(
      ReorgEvent{f_pos, static_cast<std::uint32_t>(pivot_.size())});

  std::uint32_t pc = pivot_[f_pos + 1];
  std::uint64_t pc_weight = subtree_weight_at_pos(f_pos + 1);

  // Dismantle positions beyond the fork. Counters of their off-pivot children
  // fold into the demoted child's aggregate.
  for (std::size_t i = f_pos + 1; i < pivot_.size(); ++i) {
    std::uint32_t pb = pivot_[i];
    std::uint32_t on_chain = (i + 1 < pivot_.size()) ? pivot_[i + 1] : kNoIndex;
    for (std::uint32_t c = store_->rec(pb).first_child; c != kNoIndex;
         c = store_->rec(c).next_sib) {
      if (c != on_chain) counters_.erase(c);
    }
    pos_.erase(pb);
  }
  pivot_.resize(f_pos + 1);
  slots_.resize(f_pos + 1);
  while (!low_margin_.empty() && *low_margin_.rbegin() > f_pos)
    low_margin_.erase(std::prev(low_margin_.end()));

  std::uint64_t challenger_agg = counters_[challenger];
  counters_[pc] = pc_weight;
  counters_.erase(challenger);

  // sib_out at the fork: gains the demoted subtree, loses the promoted one.
  std::int64_t delta = static_cast<std::int64_t>(pc_weight) - static_cast<std::int64_t>(challenger_agg);
  sib_out_.add(f_pos, delta);
  sib_out_.truncate(f_pos + 1);

  // Max candidate sibling of the promoted child, among the fork's remaining
  // off-pivot children.
  std::uint64_t max_sib = 0;
  for (std::uint32_t c = store_->rec(pivot_[f_pos]).first_child; c != kNoIndex;
       c = store_->rec(c).next_sib) {
    if (c == challenger || !member(c) || store_->rec(c).weight == 0) continue;
    auto it = counters_.find(c);
    if (it != counters_.end()) max_sib = std::max(max_sib, it->second);
  }
  regen_suffix(challenger, max_sib);
}

void TreeGraph::extend_from_tip(std::uint32_t challenger) {
  std::uint32_t tip_pos = static_cast<std::uint32_t>(pivot_.size()) - 1;
  std::uint64_t challenger_agg = counters_[challenger];
  // Promotion requires the challenger to best every candidate sibling; the
  // pivot was walk-exhausted before, so only the freshly weighted child can
  // extend it, and only if it now wins the argmax at the tip.
  std::uint64_t max_sib = 0;
  BlockId ch_id = store_->id_of(challenger);
  for (std::uint32_t c = store_->rec(pivot_[tip_pos]).first_child; c != kNoIndex;
       c = store_->rec(c).next_sib) {
    if (c == challenger || !member(c) || store_->rec(c).weight == 0) continue;
    auto it = counters_.find(c);
    if (it == counters_.end()) continue;
    if (beats(it->second, store_->id_of(c), challenger_agg, ch_id)) return;  // not best
    max_sib = std::max(max_sib, it->second);
  }
  counters_.erase(challenger);
  sib_out_.add(tip_pos, -static_cast<std::int64_t>(challenger_agg));
  regen_suffix(challenger, max_sib);
}

void TreeGraph::dfs_aggregates(std::uint32_t root,
                               std::unordered_map<std::uint32_t, std::uint64_t>& agg) const {
  // Iterative post-order accumulation of subtree weights inside the view.
  struct Frame {
    std::uint32_t node;
    std::uint32_t child;
  };
  std::vector<Frame> stack;
  stack.push_back({root, store_->rec(root).first_child});
  agg[root] = store_->rec(root).weight;
  while (!stack.empty()) {
    Frame& f = stack.back();
    std::uint32_t c = f.child;
    while (c != kNoIndex && !member(c)) c = store_->rec(c).next_sib;
    if (c == kNoIndex) {
      std::uint32_t done = f.node;
      stack.pop_back();
      if (!stack.empty()) agg[stack.back().node] += agg[done];
      continue;
    }
    f.child = store_->rec(c).next_sib;
    agg[c] = store_->rec(c).weight;
    stack.push_back({c, store_->rec(c).first_child});
  }
}

void TreeGraph::append_slot(std::uint32_t idx, std::uint64_t sib_out, std::uint64_t max_sib) {
  const BlockRecord& rec = store_->rec(idx);
  Slot s;
  s.idx = idx;
  s.own_w = rec.weight;
  s.chain_pref = slots_.back().chain_pref + rec.weight;
  s.max_sib = max_sib;
  s.th = rec.timer_height;
  pos_[idx] = static_cast<std::uint32_t>(pivot_.size());
  pivot_.push_back(idx);
  slots_.push_back(s);
  sib_out_.push_back(sib_out);
}

void TreeGraph::regen_suffix(std::uint32_t branch_root, std::uint64_t first_max_sib) {
  std::unordered_map<std::uint32_t, std::uint64_t> agg;
  dfs_aggregates(branch_root, agg);

  std::uint32_t cur = branch_root;
  std::uint64_t cur_max_sib = first_max_sib;
  while (true) {
    // Pick the best candidate child of cur and register the rest.
    std::uint32_t best = kNoIndex;
    std::uint64_t best_w = 0;
    BlockId best_id = 0;
    std::uint64_t second = 0;
    for (std::uint32_t c = store_->rec(cur).first_child; c != kNoIndex;
         c = store_->rec(c).next_sib) {
      if (!member(c) || store_->rec(c).weight == 0) continue;
      std::uint64_t w = agg[c];
      BlockId cid = store_->id_of(c);
      if (best == kNoIndex || beats(w, cid, best_w, best_id)) {
        if (best != kNoIndex) second = std::max(second, best_w);
        best = c;
        best_w = w;
        best_id = cid;
      } else {
        second = std::max(second, w);
      }
    }
    std::uint64_t off_children = 0;
    for (std::uint32_t c = store_->rec(cur).first_child; c != kNoIndex;
         c = store_->rec(c).next_sib) {
      if (!member(c) || c == best) continue;
      auto it = agg.find(c);
      if (it == agg.end() || it->second == 0) continue;
      counters_[c] = it->second;
      off_children += it->second;
    }
    append_slot(cur, off_children, cur_max_sib);
    maybe_flag_low_margin(pivot_.size() - 1);
    if (best == kNoIndex) break;
    cur = best;
    cur_max_sib = second;
  }
}

// ---------------------------------------------------------------------------
// Queries

std::uint64_t TreeGraph::subtree_weight_at_pos(std::size_t i) const {
  if (i == 0) return total_weight_;
  return total_weight_ - slots_[i - 1].chain_pref - sib_out_.prefix_inclusive(i - 1);
}

std::uint64_t TreeGraph::dfs_subtree_sum(std::uint32_t root) const {
  std::uint64_t sum = 0;
  std::vector<std::uint32_t> stack{root};
  while (!stack.empty()) {
    std::uint32_t n = stack.back();
    stack.pop_back();
    sum += store_->rec(n).weight;
    for (std::uint32_t c = store_->rec(n).first_child; c != kNoIndex;
         c = store_->rec(c).next_sib)
      if (member(c)) stack.push_back(c);
  }
  return sum;
}

std::uint64_t TreeGraph::subtree_weight_idx(std::uint32_t idx) const {
  auto pit = pos_.find(idx);
  if (pit != pos_.end()) return subtree_weight_at_pos(pit->second);
  auto cit = counters_.find(idx);
  if (cit != counters_.end()) return cit->second;
  return dfs_subtree_sum(idx);
}

std::optional<std::uint32_t> TreeGraph::pivot_pos_of(std::uint32_t idx) const {
  auto it = pos_.find(idx);
  if (it == pos_.end()) return std::nullopt;
  return it->second;
}

ChainView TreeGraph::chain_of(BlockId id) const {
  auto idx = store_->find(id);
  if (!idx || !member(*idx)) throw UnknownBlock("chain_of: block not in graph");
  ChainView out;
  std::uint32_t cur = *idx;
  while (true) {
    out.push_back(store_->id_of(cur));
    if (cur == kGenesisIdx) break;
    cur = store_->rec(cur).parent_idx;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::uint64_t TreeGraph::subtree_weight(BlockId id) const {
  auto idx = store_->find(id);
  if (!idx || !member(*idx)) throw UnknownBlock("subtree_weight: block not in graph");
  return subtree_weight_idx(*idx);
}

std::vector<BlockId> TreeGraph::children(BlockId id) const {
  auto idx = store_->find(id);
  if (!idx || !member(*idx)) throw UnknownBlock("children: block not in graph");
  std::vector<BlockId> out;
  for (std::uint32_t c = store_->rec(*idx).first_child; c != kNoIndex;
       c = store_->rec(c).next_sib) {
    if (member(c) && store_->rec(c).weight > 0) out.push_back(store_->id_of(c));
  }
  return out;
}

std::optional<BlockId> TreeGraph::best_child(BlockId id) const {
  auto idx = store_->find(id);
  if (!idx || !member(*idx)) throw UnknownBlock("best_child: block not in graph");
  std::uint32_t best = kNoIndex;
  std::uint64_t best_w = 0;
  for (std::uint32_t c = store_->rec(*idx).first_child; c != kNoIndex;
       c = store_->rec(c).next_sib) {
    if (!member(c) || store_->rec(c).weight == 0) continue;
    std::uint64_t w = subtree_weight_idx(c);
    if (best == kNoIndex || beats(w, store_->id_of(c), best_w, store_->id_of(best))) {
      best = c;
      best_w = w;
    }
  }
  if (best == kNoIndex) return std::nullopt;
  return store_->id_of(best);
}

ChainView TreeGraph::pivot() const {
  ChainView out;
  out.reserve(pivot_.size());
  for (auto idx : pivot_) out.push_back(store_->id_of(idx));
  return out;
}

std::uint64_t TreeGraph::sib_subtree_weight(BlockId id) const {
  auto idx = store_->find(id);
  if (!idx || !member(*idx)) throw UnknownBlock("sib_subtree_weight: block not in graph");
  if (*idx == kGenesisIdx) throw GenesisHasNoSiblings("genesis has no siblings");
  std::uint32_t parent = store_->rec(*idx).parent_idx;
  std::uint64_t best = 0;
  for (std::uint32_t c = store_->rec(parent).first_child; c != kNoIndex;
       c = store_->rec(c).next_sib) {
    if (c == *idx || !member(c) || store_->rec(c).weight == 0) continue;
    best = std::max(best, subtree_weight_idx(c));
  }
  return best;
}

std::vector<BlockId> TreeGraph::order() const {
  std::vector<BlockId> out;
  if (pivot_.empty()) return out;
  std::unordered_set<std::uint32_t> emitted;
  emitted.insert(kGenesisIdx);
  out.push_back(store_->id_of(kGenesisIdx));
  for (std::size_t i = 1; i < pivot_.size(); ++i) {
    std::uint32_t next = pivot_[i];
    // New blocks this step: past(next) minus everything already emitted.
    std::vector<std::uint32_t> fresh;
    std::vector<std::uint32_t> stack;
    auto push_dep = [&](std::uint32_t d) {
      if (!emitted.count(d)) stack.push_back(d);
    };
    push_dep(store_->rec(next).parent_idx);
    for (auto r : store_->rec(next).ref_idx) push_dep(r);
    std::unordered_set<std::uint32_t> seen;
    while (!stack.empty()) {
      std::uint32_t n = stack.back();
      stack.pop_back();
      if (seen.count(n)) continue;
      seen.insert(n);
      fresh.push_back(n);
      push_dep(store_->rec(n).parent_idx);
      for (auto r : store_->rec(n).ref_idx)
        if (!seen.count(r) && !emitted.count(r)) stack.push_back(r);
    }
    // Kahn layering, ready set by ascending digest.
    std::unordered_map<std::uint32_t, std::uint32_t> indeg;
    std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> rdeps;
    for (auto n : fresh) indeg[n] = 0;
    for (auto n : fresh) {
      auto count_dep = [&](std::uint32_t d) {
        if (indeg.count(d)) {
          ++indeg[n];
          rdeps[d].push_back(n);
        }
      };
      count_dep(store_->rec(n).parent_idx);
      for (auto r : store_->rec(n).ref_idx) count_dep(r);
    }
    std::set<std::pair<BlockId, std::uint32_t>> ready;
    for (auto& [n, d] : indeg)
      if (d == 0) ready.insert({store_->id_of(n), n});
    while (!ready.empty()) {
      auto [bid, n] = *ready.begin();
      ready.erase(ready.begin());
      out.push_back(bid);
      emitted.insert(n);
      for (auto m : rdeps[n])
        if (--indeg[m] == 0) ready.insert({store_->id_of(m), m});
    }
    out.push_back(store_->id_of(next));
    emitted.insert(next);
  }
  return out;
}

PastView TreeGraph::past(BlockId id) const {
  auto idx = store_->find(id);
  if (!idx || !member(*idx)) throw UnknownBlock("past: block not in graph");
  return PastView(*store_, closure_of(*store_, *idx));
}

std::vector<BlockId> TreeGraph::dag_tips() const {
  std::vector<BlockId> out;
  out.reserve(tips_.size());
  for (auto idx : tips_) out.push_back(store_->id_of(idx));
  return out;
}

bool TreeGraph::parent_is_past_pivot_tip(std::uint32_t idx) const {
  auto closure = closure_of(*store_, idx);
  // Brute pivot walk over the closure.
  std::unordered_set<std::uint32_t> in(closure.begin(), closure.end());
  std::unordered_map<std::uint32_t, std::uint64_t> agg;
  for (auto it = closure.rbegin(); it != closure.rend(); ++it) {
    std::uint64_t w = agg[*it] += store_->rec(*it).weight;
    std::uint32_t p = store_->rec(*it).parent_idx;
    if (*it != kGenesisIdx && in.count(p)) agg[p] += w;
  }
  std::uint32_t cur = kGenesisIdx;
  while (true) {
    std::uint32_t best = kNoIndex;
    std::uint64_t best_w = 0;
    for (std::uint32_t c = store_->rec(cur).first_child; c != kNoIndex;
         c = store_->rec(c).next_sib) {
      if (!in.count(c) || store_->rec(c).weight == 0) continue;
      std::uint64_t w = agg[c];
      if (best == kNoIndex || beats(w, store_->id_of(c), best_w, store_->id_of(best))) {
        best = c;
        best_w = w;
      }
    }
    if (best == kNoIndex) break;
    cur = best;
  }
  return cur == store_->rec(idx).parent_idx;
}

// ---------------------------------------------------------------------------
// Adapt support

bool TreeGraph::tip_is_old(const ProtocolParams& p) const {
  if (pivot_.empty()) return false;
  std::uint32_t th = slots_.back().th;
  return max_th_ >= th && max_th_ - th >= p.eta_b;
}

bool TreeGraph::has_low_margin_old_parent(const ProtocolParams& p) {
  if (pivot_.size() < 2) return false;
  // Positions whose parent is old form a prefix: slot timer heights are
  // non-decreasing along the pivot.
  std::size_t lo = 1, hi = pivot_.size();  // first position with a non-old parent
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    std::uint32_t parent_th = slots_[mid - 1].th;
    bool old_parent = max_th_ >= parent_th && max_th_ - parent_th >= p.eta_b;
    if (old_parent)
      lo = mid + 1;
    else
      hi = mid;
  }
  std::size_t boundary = lo;  // positions < boundary have old parents
  auto it = low_margin_.begin();
  while (it != low_margin_.end() && *it < boundary) {
    if (margin_at(*it) < p.eta_a) return true;
    it = low_margin_.erase(it);  // margin recovered; it can only drop via a new fork
  }
  return false;
}

// ---------------------------------------------------------------------------
// Audit

void TreeGraph::audit() const {
  // Recompute aggregates from scratch and compare with the caches.
  std::unordered_map<std::uint32_t, std::uint64_t> agg;
  std::uint64_t total = 0;
  if (size_ == 0) return;
  dfs_aggregates(kGenesisIdx, agg);
  total = agg[kGenesisIdx];
  if (total != total_weight_) throw std::logic_error("audit: total weight mismatch");

  // Brute pivot walk.
  std::vector<std::uint32_t> want{kGenesisIdx};
  std::uint32_t cur = kGenesisIdx;
  while (true) {
    std::uint32_t best = kNoIndex;
    std::uint64_t best_w = 0;
    for (std::uint32_t c = store_->rec(cur).first_child; c != kNoIndex;
         c = store_->rec(c).next_sib) {
      if (!member(c) || store_->rec(c).weight == 0) continue;
      std::uint64_t w = agg[c];
      if (best == kNoIndex || beats(w, store_->id_of(c), best_w, store_->id_of(best))) {
        best = c;
        best_w = w;
      }
    }
    if (best == kNoIndex) break;
    want.push_back(best);
    cur = best;
  }
  if (want != pivot_) throw std::logic_error("audit: pivot mismatch");
  for (std::size_t i = 0; i < pivot_.size(); ++i) {
    if (subtree_weight_at_pos(i) != agg[pivot_[i]])
      throw std::logic_error("audit: pivot subtree weight mismatch");
    std::uint64_t max_sib = 0;
    if (i > 0) {
      for (std::uint32_t c = store_->rec(pivot_[i - 1]).first_child; c != kNoIndex;
           c = store_->rec(c).next_sib) {
        if (c == pivot_[i] || !member(c) || store_->rec(c).weight == 0) continue;
        max_sib = std::max(max_sib, agg[c]);
      }
      if (max_sib != slots_[i].max_sib) throw std::logic_error("audit: max_sib mismatch");
    }
  }
  for (auto& [idx, w] : counters_) {
    if (agg.find(idx) == agg.end() || agg[idx] != w)
      throw std::logic_error("audit: counter mismatch");
    if (!pos_.count(store_->rec(idx).parent_idx) || pos_.count(idx))
      throw std::logic_error("audit: counter key not an off-pivot child of pivot");
  }
}

// ---------------------------------------------------------------------------
// Closure / adapt helpers

std::vector<std::uint32_t> closure_of(const BlockStore& store, std::uint32_t idx) {
  std::vector<std::uint32_t> out;
  std::unordered_set<std::uint32_t> seen;
  std::vector<std::uint32_t> stack;
  auto push = [&](std::uint32_t d) {
    if (seen.insert(d).second) stack.push_back(d);
  };
  const BlockRecord& rec = store.rec(idx);
  if (idx == kGenesisIdx) return out;
  push(rec.parent_idx);
  for (auto r : rec.ref_idx) push(r);
  while (!stack.empty()) {
    std::uint32_t n = stack.back();
    stack.pop_back();
    out.push_back(n);
    if (n == kGenesisIdx) continue;
    push(store.rec(n).parent_idx);
    for (auto r : store.rec(n).ref_idx) push(r);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Strategy adapt_of_closure(const BlockStore& store, const std::vector<std::uint32_t>& closure,
                          const ProtocolParams& p) {
  if (closure.empty()) return Strategy::opt;
  // Subtree weights within the closure (ascending index = topological order).
  std::unordered_map<std::uint32_t, std::uint64_t> agg;
  std::unordered_set<std::uint32_t> in(closure.begin(), closure.end());
  std::uint32_t max_th = 0;
  for (auto it = closure.rbegin(); it != closure.rend(); ++it) {
    std::uint64_t w = agg[*it] += store.rec(*it).weight;
    if (store.rec(*it).timer_tag) max_th = std::max(max_th, store.rec(*it).timer_height);
    std::uint32_t parent = store.rec(*it).parent_idx;
    if (*it != kGenesisIdx && in.count(parent)) agg[parent] += w;
  }
  auto is_old = [&](std::uint32_t b) {
    std::uint32_t th = store.rec(b).timer_height;
    return max_th >= th && max_th - th >= p.eta_b;
  };
  // Pivot walk with the two adapt conditions.
  std::uint32_t cur = kGenesisIdx;
  while (true) {
    std::uint32_t best = kNoIndex;
    std::uint64_t best_w = 0;
    std::uint64_t second = 0;
    for (std::uint32_t c = store.rec(cur).first_child; c != kNoIndex;
         c = store.rec(c).next_sib) {
      if (!in.count(c) || store.rec(c).weight == 0) continue;
      std::uint64_t w = agg[c];
      if (best == kNoIndex || beats(w, store.id_of(c), best_w, store.id_of(best))) {
        if (best != kNoIndex) second = std::max(second, best_w);
        best = c;
        best_w = w;
      } else {
        second = std::max(second, w);
      }
    }
    if (best == kNoIndex) break;
    if (is_old(cur) && best_w < second + p.eta_a) return Strategy::con;
    cur = best;
  }
  return is_old(cur) ? Strategy::con : Strategy::opt;
}

// ---------------------------------------------------------------------------
// Snapshot I/O

std::string export_snapshot(const TreeGraph& g) {
  std::ostringstream os;
  const BlockStore& store = g.store();
  char buf[17];
  auto hex = [&](BlockId id) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
    return std::string(buf);
  };
  for (std::uint32_t i = 0; i < store.size(); ++i) {
    if (!g.contains_idx(i)) continue;
    const BlockRecord& r = store.rec(i);
    os << hex(r.block.id) << ' ';
    os << (r.block.is_genesis ? std::string("-") : hex(r.block.parent)) << ' ';
    if (r.ref_idx.empty()) {
      os << '-';
    } else {
      for (std::size_t k = 0; k < r.ref_idx.size(); ++k) {
        if (k) os << ',';
        os << hex(store.id_of(r.ref_idx[k]));
      }
    }
    os << ' ' << (r.block.creator == Creator::honest ? 'h' : 'm');
    os << ' ' << r.block.born_round;
    os << ' ' << r.weight << '\n';
  }
  return os.str();
}

namespace {
BlockId parse_hex_id(const std::string& tok, int line_no) {
  BlockId v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v, 16);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ConfigError("snapshot line " + std::to_string(line_no) + ": bad id '" + tok + "'");
  return v;
}
}  // namespace

BlockStore import_snapshot(const std::string& text, const ProtocolParams& params) {
  BlockStore store(params);
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  // Closure sizes for past stats, rebuilt as we go.
  std::unordered_map<BlockId, std::pair<std::uint64_t, std::uint64_t>> past_stats;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id_s, parent_s, refs_s, creator_s;
    std::int64_t born = 0;
    std::uint64_t weight = 0;
    if (!(ls >> id_s >> parent_s >> refs_s >> creator_s >> born >> weight))
      throw ConfigError("snapshot line " + std::to_string(line_no) + ": expected 6 fields");
    BlockId id = parse_hex_id(id_s, line_no);
    if (parent_s == "-") {
      if (id != kGenesisId)
        throw ConfigError("snapshot line " + std::to_string(line_no) + ": non-genesis without parent");
      continue;  // genesis is implicit in a fresh store
    }
    Block b;
    b.id = id;
    b.parent = parse_hex_id(parent_s, line_no);
    if (refs_s != "-") {
      std::size_t start = 0;
      while (start < refs_s.size()) {
        std::size_t comma = refs_s.find(',', start);
        if (comma == std::string::npos) comma = refs_s.size();
        b.refs.push_back(parse_hex_id(refs_s.substr(start, comma - start), line_no));
        start = comma + 1;
      }
    }
    if (creator_s != "h" && creator_s != "m")
      throw ConfigError("snapshot line " + std::to_string(line_no) + ": bad creator");
    b.creator = creator_s == "h" ? Creator::honest : Creator::malicious;
    b.born_round = born;
    b.strategy = weight == 1 ? Strategy::opt : Strategy::con;
    // Past stats from the closure over what is already imported.
    auto parent_idx = store.find(b.parent);
    if (!parent_idx)
      throw ConfigError("snapshot line " + std::to_string(line_no) + ": parent not yet defined");
    BlockStore::PastStats ps;
    {
      // temporary record to compute closure: insert after computing from deps
      std::unordered_set<std::uint32_t> seen;
      std::vector<std::uint32_t> stack;
      stack.push_back(*parent_idx);
      seen.insert(*parent_idx);
      for (auto r : b.refs) {
        auto ri = store.find(r);
        if (!ri)
          throw ConfigError("snapshot line " + std::to_string(line_no) + ": ref not yet defined");
        if (seen.insert(*ri).second) stack.push_back(*ri);
      }
      while (!stack.empty()) {
        std::uint32_t n = stack.back();
        stack.pop_back();
        ps.blocks++;
        ps.weight += store.rec(n).weight;
        if (n == 0) continue;
        if (seen.insert(store.rec(n).parent_idx).second) stack.push_back(store.rec(n).parent_idx);
        for (auto r : store.rec(n).ref_idx)
          if (seen.insert(r).second) stack.push_back(r);
      }
    }
    auto idx = store.add(b, ps);
    if (!idx) throw ConfigError("snapshot line " + std::to_string(line_no) + ": rejected block");
    if (store.rec(*idx).weight != weight)
      throw ConfigError("snapshot line " + std::to_string(line_no) + ": weight does not match tags");
  }
  return store;
}

}  // namespace ghast
