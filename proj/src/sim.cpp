#include "ghast/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <sstream>

#include "ghast/rules.hpp"
#include <nlohmann/json.hpp>

namespace ghast {

namespace {
constexpr std::uint32_t kGenesisIdx = 0;
}

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::validate() const {
  if (nodes < 1) throw ConfigError("nodes must be >= 1");
  if (nodes > 64) throw ConfigError("nodes is limited to 64");
  if (!(beta >= 0.0 && beta < 0.5)) throw ConfigError("beta must be in [0, 0.5)");
  double budget = beta * nodes;
  if (std::abs(budget - std::round(budget)) > 1e-9)
    throw ConfigError("beta * nodes must be an integer query budget");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  proto.validate(oracle_enabled);
  if (confirm_enabled) {
    if (!(confirm.beta >= 0.0 && confirm.beta < 0.5))
      throw ConfigError("confirmation beta must be in [0, 0.5)");
    if (confirm.t_gap < 0 || confirm.theta_gap < 0 || confirm.slice_size < 1)
      throw ConfigError("bad confirmation gaps");
  }
}

std::uint32_t SimConfig::adversary_budget() const {
  return static_cast<std::uint32_t>(std::llround(beta * nodes));
}

void SimConfig::resolve_analysis_thresholds() {
  double l = lambda();
  proto.s_m = 1.5 * l;
  proto.s_h = 3.0 * l;
}

// ---------------------------------------------------------------------------
// Honest block construction

Block make_honest_block(TreeGraph& view, DigestFactory& digests, const ProtocolParams& p,
                        std::int64_t round) {
  Block b;
  b.parent = view.pivot_tip();
  for (auto t : view.dag_tips())
    if (t != b.parent) b.refs.push_back(t);
  b.creator = Creator::honest;
  b.born_round = round;
  b.strategy = p.mode == ProtocolMode::ghast ? adapt(view, p) : Strategy::opt;
  b.id = digests.make(b.parent, b.refs, b.creator);
  return b;
}

// ---------------------------------------------------------------------------
// Adversaries

namespace {

std::uint64_t group_mask(std::uint32_t lo, std::uint32_t hi) {
  std::uint64_t m = 0;
  for (std::uint32_t i = lo; i < hi; ++i) m |= 1ull << i;
  return m;
}

}  // namespace

// Benign network plus beta extra mining power: releases everything it has
// and mines exactly like an honest node over its released view.
class NullAdversary final : public Adversary {
 public:
  void attach(World& w) override {
    view_ = std::make_unique<TreeGraph>(w.store());
    view_->insert(kGenesisId);
  }
  void deliveries(World& w, std::vector<std::pair<std::uint32_t, std::uint64_t>>& out) override {
    std::uint64_t all = w.all_nodes_mask();
    for (auto idx : w.undelivered()) out.emplace_back(idx, all);
    for (auto idx : pending_) out.emplace_back(idx, all);
    pending_.clear();
  }
  std::optional<CraftedBlock> mine(World& w) override {
    CraftedBlock cb;
    cb.parent_idx = view_->pivot_tip_idx();
    std::uint32_t parent = cb.parent_idx;
    for (auto t : view_->tip_indices())
      if (t != parent) cb.ref_idx.push_back(t);
    cb.strategy = w.config().proto.mode == ProtocolMode::ghast
                      ? adapt(*view_, w.config().proto)
                      : Strategy::opt;
    cb.past_blocks = view_->size();
    cb.past_weight = view_->total_weight();
    return cb;
  }
  void on_block(World& w, std::uint32_t idx) override {
    view_->insert_idx(idx);
    if (w.store().rec(idx).block.creator == Creator::malicious) pending_.push_back(idx);
  }

 private:
  std::unique_ptr<TreeGraph> view_;
  std::vector<std::uint32_t> pending_;
};

// Private-fork miner: keeps everything it mines to itself.
class WithholdAdversary final : public Adversary {
 public:
  void attach(World& w) override {
    view_ = std::make_unique<TreeGraph>(w.store());
    view_->insert(kGenesisId);
  }
  void deliveries(World&, std::vector<std::pair<std::uint32_t, std::uint64_t>>&) override {}
  std::optional<CraftedBlock> mine(World& w) override {
    CraftedBlock cb;
    cb.parent_idx = view_->pivot_tip_idx();
    for (auto t : view_->tip_indices())
      if (t != cb.parent_idx) cb.ref_idx.push_back(t);
    cb.strategy = w.config().proto.mode == ProtocolMode::ghast
                      ? adapt(*view_, w.config().proto)
                      : Strategy::opt;
    cb.past_blocks = view_->size();
    cb.past_weight = view_->total_weight();
    return cb;
  }
  void on_block(World&, std::uint32_t idx) override { view_->insert_idx(idx); }

 private:
  std::unique_ptr<TreeGraph> view_;
};

// Balance attack: honest nodes are split in two groups with the full delay d
// between them; the adversary mines on whichever top-level subtree is lighter
// in its omniscient view and releases withheld blocks to a group whenever that
// group's own side is about to fall behind in its local view.
class BalanceAdversary final : public Adversary {
 public:
  void attach(World& w) override {
    view_ = std::make_unique<TreeGraph>(w.store());
    view_->insert(kGenesisId);
    split_ = w.honest_count() / 2;
    masks_[0] = group_mask(0, split_);
    masks_[1] = group_mask(split_, w.honest_count());
    side_.assign(w.store().size(), kNoIndex);
    side_[kGenesisIdx] = kNoIndex;
  }

  void deliveries(World& w, std::vector<std::pair<std::uint32_t, std::uint64_t>>& out) override {
    // Intra-group delivery of honest blocks happens promptly; the other group
    // waits for the deadline.
    for (auto idx : w.undelivered()) {
      const BlockMeta& m = w.meta(idx);
      if (m.creator_node < 0) continue;  // own blocks go through releases
      int g = static_cast<std::uint32_t>(m.creator_node) < split_ ? 0 : 1;
      out.emplace_back(idx, masks_[g]);
    }
    // Rebalance: if a group's home side trails in its own view, feed it
    // withheld blocks from that side.
    auto kids = top_children(w);
    if (kids.first == kNoIndex || kids.second == kNoIndex) return;
    for (int g = 0; g < 2; ++g) {
      const TreeGraph& gv = w.node_view(g == 0 ? 0 : split_);
      std::uint32_t home = home_side(gv, kids);
      if (home == kNoIndex) continue;
      std::uint32_t other = home == kids.first ? kids.second : kids.first;
      std::int64_t margin = side_weight(gv, home) - side_weight(gv, other);
      std::int64_t boost_needed = 1 - margin;
      if (boost_needed <= 0) continue;
      for (auto& idx : withheld_) {
        if (idx == kNoIndex || side_of(w, idx) != home) continue;
        std::int64_t gain = static_cast<std::int64_t>(w.store().rec(idx).weight);
        release_with_deps(w, idx, masks_[g], out);
        idx = kNoIndex;
        boost_needed -= gain;
        if (boost_needed <= 0) break;
      }
    }
    while (!withheld_.empty() && withheld_.front() == kNoIndex) withheld_.pop_front();
  }

  std::optional<CraftedBlock> mine(World& w) override {
    auto kids = top_children(w);
    CraftedBlock cb;
    std::uint32_t parent;
    if (kids.first == kNoIndex || kids.second == kNoIndex) {
      parent = view_->pivot_tip_idx();
    } else {
      std::uint64_t wa = view_->subtree_weight(w.store().id_of(kids.first));
      std::uint64_t wb = view_->subtree_weight(w.store().id_of(kids.second));
      std::uint32_t target = wa <= wb ? kids.first : kids.second;
      parent = deepest_in_subtree(w, target);
    }
    cb.parent_idx = parent;
    auto closure = closure_of(w.store(), parent);
    cb.strategy = w.config().proto.mode == ProtocolMode::ghast
                      ? adapt_of_closure(w.store(), closure, w.config().proto)
                      : Strategy::opt;
    // Declared past = closure(parent) + parent itself.
    cb.past_blocks = closure.size() + 1;
    cb.past_weight = w.store().rec(parent).weight;
    for (auto i : closure) cb.past_weight += w.store().rec(i).weight;
    return cb;
  }

  void on_block(World& w, std::uint32_t idx) override {
    view_->insert_idx(idx);
    side_.resize(w.store().size(), kNoIndex);
    if (w.store().rec(idx).block.creator == Creator::malicious) withheld_.push_back(idx);
  }

 private:
  // The two heaviest positive-weight children of genesis in the omniscient view.
  std::pair<std::uint32_t, std::uint32_t> top_children(World& w) {
    std::uint32_t best = kNoIndex, second = kNoIndex;
    std::uint64_t bw = 0, sw = 0;
    const BlockStore& store = w.store();
    for (std::uint32_t c = store.rec(kGenesisIdx).first_child; c != kNoIndex;
         c = store.rec(c).next_sib) {
      if (!view_->contains_idx(c) || store.rec(c).weight == 0) continue;
      std::uint64_t sub = view_->subtree_weight(store.id_of(c));
      if (best == kNoIndex || sub > bw) {
        second = best;
        sw = bw;
        best = c;
        bw = sub;
      } else if (second == kNoIndex || sub > sw) {
        second = c;
        sw = sub;
      }
    }
    return {best, second};
  }

  std::uint32_t side_of(World& w, std::uint32_t idx) {
    if (idx < side_.size() && side_[idx] != kNoIndex) return side_[idx];
    std::uint32_t cur = idx;
    std::vector<std::uint32_t> path;
    while (cur != kGenesisIdx && w.store().rec(cur).parent_idx != kGenesisIdx) {
      path.push_back(cur);
      cur = w.store().rec(cur).parent_idx;
    }
    std::uint32_t side = cur == kGenesisIdx ? kNoIndex : cur;
    for (auto b : path) side_[b] = side;
    if (idx < side_.size()) side_[idx] = side;
    return side;
  }

  std::uint32_t home_side(const TreeGraph& gv, std::pair<std::uint32_t, std::uint32_t> kids) {
    std::uint32_t tip = gv.pivot_tip_idx();
    if (tip == kGenesisIdx) return kNoIndex;
    std::uint32_t cur = tip;
    while (gv.store().rec(cur).parent_idx != kGenesisIdx) cur = gv.store().rec(cur).parent_idx;
    return (cur == kids.first || cur == kids.second) ? cur : kNoIndex;
  }

  std::int64_t side_weight(const TreeGraph& gv, std::uint32_t child) {
    if (!gv.contains_idx(child)) return 0;
    return static_cast<std::int64_t>(gv.subtree_weight(gv.store().id_of(child)));
  }

  std::uint32_t deepest_in_subtree(World& w, std::uint32_t root) {
    std::uint32_t cur = root;
    while (true) {
      auto next = view_->best_child(w.store().id_of(cur));
      if (!next) return cur;
      cur = w.store().index_of(*next);
    }
  }

  void release_with_deps(World& w, std::uint32_t idx, std::uint64_t mask,
                         std::vector<std::pair<std::uint32_t, std::uint64_t>>& out) {
    // Deliver the dependency closure too; ascending index is dependency order.
    auto closure = closure_of(w.store(), idx);
    for (auto d : closure) out.emplace_back(d, mask);
    out.emplace_back(idx, mask);
  }

  std::unique_ptr<TreeGraph> view_;
  std::uint32_t split_ = 0;
  std::uint64_t masks_[2] = {0, 0};
  std::vector<std::uint32_t> side_;
  std::deque<std::uint32_t> withheld_;
};

std::unique_ptr<Adversary> make_adversary(AdversaryKind kind) {
  switch (kind) {
    case AdversaryKind::none: return std::make_unique<NullAdversary>();
    case AdversaryKind::withhold: return std::make_unique<WithholdAdversary>();
    case AdversaryKind::balance: return std::make_unique<BalanceAdversary>();
  }
  throw ConfigError("unknown adversary kind");
}

// ---------------------------------------------------------------------------
// World

World::World(SimConfig cfg) : World(std::move(cfg), nullptr) {}

World::World(SimConfig cfg, std::unique_ptr<Adversary> adversary)
    : cfg_(std::move(cfg)), store_(cfg_.proto), digests_(cfg_.seed), rng_(cfg_.seed) {
  cfg_.validate();
  honest_ = cfg_.honest_nodes();
  if (honest_ == 0) throw ConfigError("no honest nodes left after corruption");
  for (std::uint32_t i = 0; i < honest_; ++i) {
    views_.push_back(std::make_unique<TreeGraph>(store_));
    views_.back()->insert(kGenesisId);
  }
  BlockMeta genesis;
  genesis.first_exposure = 0;
  genesis.confirm_round = 0;
  genesis.delivered_mask = all_nodes_mask();
  genesis.exposed = true;
  meta_.push_back(genesis);
  longest_tip_.assign(honest_, kGenesisIdx);
  adversary_ = adversary ? std::move(adversary) : make_adversary(cfg_.adversary);
  adversary_->attach(*this);
}

World::~World() = default;

std::uint64_t World::mine_threshold() const {
  double eta_d = cfg_.proto.eta_d;
  if (eta_d <= 1.0) return ~0ull;
  double t = std::ldexp(1.0, 64) / eta_d;
  if (t >= std::ldexp(1.0, 64)) return ~0ull;
  return static_cast<std::uint64_t>(t);
}

void World::log(EventKind kind, std::uint32_t idx) {
  Event e{round_, store_.id_of(idx), kind};
  events_.push_back(e);
  if (sink_) sink_(e);
}

void World::expose(std::uint32_t idx) {
  BlockMeta& m = meta_[idx];
  if (m.exposed) return;
  m.exposed = true;
  m.first_exposure = round_;
  deadlines_[round_ + cfg_.eff_delay()].push_back(idx);
  if (store_.rec(idx).block.creator == Creator::malicious) log(EventKind::mRls, idx);
}

bool World::deliver(std::uint32_t idx, std::uint32_t node) {
  BlockMeta& m = meta_[idx];
  if (m.delivered_mask >> node & 1) return true;
  auto r = views_[node]->insert_idx(idx);
  if (r == TreeGraph::Insert::missing_dependency) return false;
  m.delivered_mask |= 1ull << node;
  expose(idx);
  if (cfg_.proto.mode == ProtocolMode::nakamoto_ref) {
    const BlockRecord& rec = store_.rec(idx);
    const BlockRecord& cur = store_.rec(longest_tip_[node]);
    if (rec.height > cur.height ||
        (rec.height == cur.height && rec.block.id < cur.block.id))
      longest_tip_[node] = idx;
  }
  return true;
}

void World::apply_delivery_batch(std::vector<std::pair<std::uint32_t, std::uint64_t>>& batch) {
  bool progress = true;
  while (progress) {
    progress = false;
    for (auto& [idx, mask] : batch) {
      if (!mask) continue;
      for (std::uint32_t v = 0; v < honest_; ++v) {
        if (!(mask >> v & 1)) continue;
        if (deliver(idx, v)) {
          mask &= ~(1ull << v);
          progress = true;
        }
      }
    }
  }
}

void World::request_delay(std::uint32_t idx, std::int64_t until_round) const {
  const BlockMeta& m = meta_[idx];
  if (!m.exposed) return;  // withheld blocks have no clock yet
  if (until_round > m.first_exposure + static_cast<std::int64_t>(cfg_.eff_delay()))
    throw DeadlineViolation("requested delay exceeds the admissible delivery bound");
}

std::vector<std::uint32_t> World::undelivered() const {
  std::vector<std::uint32_t> out;
  std::uint64_t all = all_nodes_mask();
  for (const auto& [r, blocks] : deadlines_)
    for (auto idx : blocks)
      if (meta_[idx].delivered_mask != all) out.push_back(idx);
  return out;
}

void World::run_round() {
  if (round_ + 1 >= cfg_.horizon) throw HorizonExceeded("simulation horizon reached");
  ++round_;

  // Phase 2: adversary-chosen deliveries, then deadline-forced ones.
  std::vector<std::pair<std::uint32_t, std::uint64_t>> batch;
  adversary_->deliveries(*this, batch);
  apply_delivery_batch(batch);
  for (auto& [idx, mask] : batch)
    if (mask) throw std::logic_error("adversary delivered a block with missing dependencies");

  auto it = deadlines_.find(round_);
  if (it != deadlines_.end()) {
    std::vector<std::uint32_t> due = std::move(it->second);
    deadlines_.erase(it);
    std::sort(due.begin(), due.end(), [&](std::uint32_t a, std::uint32_t b) {
      return store_.id_of(a) < store_.id_of(b);
    });
    std::vector<std::pair<std::uint32_t, std::uint64_t>> forced;
    forced.reserve(due.size());
    std::uint64_t all = all_nodes_mask();
    for (auto idx : due) forced.emplace_back(idx, all & ~meta_[idx].delivered_mask);
    apply_delivery_batch(forced);
    for (auto idx : due) {
      if (meta_[idx].delivered_mask != all)
        throw DeadlineViolation("block missed its delivery deadline");
      log(EventKind::Arvl, idx);
    }
  }

  honest_phase();
  adversary_phase();

  // Observer bookkeeping: reorgs, adapt spans, confirmations.
  for (std::uint32_t v = 0; v < honest_; ++v) {
    auto& lg = views_[v]->reorg_log();
    if (v == 0) {
      for (const auto& ev : lg) {
        ++stats_.reorgs;
        if (ev.old_len >= ev.fork_pos + 3) ++stats_.deep_reorgs;
        if (ev.fork_pos + 1 < frontier_) {
          ++stats_.confirmed_violations;
          frontier_ = ev.fork_pos + 1;
        }
      }
    }
    lg.clear();
  }
  if (cfg_.proto.mode == ProtocolMode::ghast && observer_adapt() == Strategy::con)
    ++stats_.adapt_con_rounds;
  if (cfg_.confirm_enabled) confirm_sweep();
}

void World::run() {
  for (std::int64_t r = round_ + 1; r < cfg_.horizon; ++r) run_round();
}

void World::honest_phase() {
  std::uint64_t thresh = mine_threshold();
  for (std::uint32_t v = 0; v < honest_; ++v) {
    bool success = rng_() <= thresh;
    if (!success) continue;
    TreeGraph& view = *views_[v];
    Block b;
    if (cfg_.proto.mode == ProtocolMode::nakamoto_ref) {
      b.parent = store_.id_of(longest_tip_[v]);
      b.creator = Creator::honest;
      b.born_round = round_;
      b.strategy = Strategy::opt;
      b.id = digests_.make(b.parent, b.refs, b.creator);
    } else {
      b = make_honest_block(view, digests_, cfg_.proto, round_);
    }
    auto idx = store_.add(b, {view.size(), view.total_weight()});
    while (!idx) {  // digest collision: draw a fresh nonce
      b.id = digests_.make(b.parent, b.refs, b.creator);
      idx = store_.add(b, {view.size(), view.total_weight()});
    }
    meta_.push_back(BlockMeta{});
    meta_.back().creator_node = static_cast<std::int32_t>(v);
    if (views_[v]->insert_idx(*idx) != TreeGraph::Insert::ok)
      throw std::logic_error("honest block rejected by its own creator");
    meta_[*idx].delivered_mask |= 1ull << v;
    if (cfg_.proto.mode == ProtocolMode::nakamoto_ref) longest_tip_[v] = *idx;
    ++stats_.honest_blocks;
    log(EventKind::hGenRls, *idx);
    expose(*idx);
    adversary_->on_block(*this, *idx);
  }
}

void World::adversary_phase() {
  std::uint64_t thresh = mine_threshold();
  std::uint32_t budget = cfg_.adversary_budget();
  for (std::uint32_t q = 0; q < budget; ++q) {
    bool success = rng_() <= thresh;
    if (!success) continue;
    auto cb = adversary_->mine(*this);
    if (!cb) continue;
    Block b;
    b.parent = store_.id_of(cb->parent_idx);
    for (auto r : cb->ref_idx) b.refs.push_back(store_.id_of(r));
    b.creator = Creator::malicious;
    b.born_round = round_;
    b.strategy = cb->strategy;
    b.id = digests_.make(b.parent, b.refs, b.creator);
    auto idx = store_.add(b, {cb->past_blocks, cb->past_weight});
    while (!idx) {
      b.id = digests_.make(b.parent, b.refs, b.creator);
      idx = store_.add(b, {cb->past_blocks, cb->past_weight});
    }
    meta_.push_back(BlockMeta{});
    ++stats_.malicious_blocks;
    log(EventKind::mGen, *idx);
    adversary_->on_block(*this, *idx);
  }
}

BlockId World::observer_pivot_tip() const { return views_[0]->pivot_tip(); }

Strategy World::observer_adapt() const {
  return adapt(*views_[0], cfg_.proto);
}

void World::confirm_sweep() {
  TreeGraph& view = *views_[0];
  while (frontier_ < view.pivot_length()) {
    std::uint32_t idx = view.pivot_at(frontier_);
    auto d = confirm_decision(view, store_.id_of(idx), cfg_.confirm.target_risk, cfg_.confirm);
    if (!d.confirmed) break;
    mark_confirmed(idx);
    ++frontier_;
  }
}

void World::mark_confirmed(std::uint32_t idx) {
  // Finalizing a pivot block finalizes its whole past: everything it covers
  // shares its history from here on.
  std::vector<std::uint32_t> stack{idx};
  while (!stack.empty()) {
    std::uint32_t n = stack.back();
    stack.pop_back();
    if (meta_[n].confirm_round >= 0) continue;
    meta_[n].confirm_round = round_;
    const BlockRecord& rec = store_.rec(n);
    if (n == 0) continue;
    stack.push_back(rec.parent_idx);
    for (auto r : rec.ref_idx) stack.push_back(r);
  }
}

// ---------------------------------------------------------------------------
// Metrics

MetricsRecord collect_metrics(const World& w) {
  MetricsRecord r;
  r.rounds = w.round() + 1;
  const auto& st = w.stats();
  r.honest_blocks = st.honest_blocks;
  r.malicious_blocks = st.malicious_blocks;
  r.reorgs = st.reorgs;
  r.deep_reorgs = st.deep_reorgs;
  r.confirmed_violations = st.confirmed_violations;
  r.adapt_con_rounds = st.adapt_con_rounds;
  const BlockStore& store = w.store();
  std::vector<double> latencies;
  std::int64_t confirmed = 0;
  for (std::uint32_t i = 1; i < store.size(); ++i) {
    const BlockRecord& rec = store.rec(i);
    const BlockMeta& m = w.meta(i);
    r.blocks.push_back(BlockRow{rec.block.id, rec.block.creator, rec.block.born_round,
                                m.first_exposure, m.confirm_round});
    if (m.confirm_round >= 0 && m.first_exposure >= 0) {
      ++confirmed;
      latencies.push_back(static_cast<double>(m.confirm_round - m.first_exposure));
    }
  }
  if (!r.blocks.empty())
    r.confirmed_fraction = static_cast<double>(confirmed) / static_cast<double>(r.blocks.size());
  if (!latencies.empty()) {
    std::sort(latencies.begin(), latencies.end());
    r.latency_p50 = latencies[latencies.size() / 2];
    r.latency_p95 = latencies[static_cast<std::size_t>(latencies.size() * 0.95)];
  }
  return r;
}

std::string MetricsRecord::to_csv() const {
  std::ostringstream os;
  os << "id,creator,born_round,first_exposure,confirm_round\n";
  char buf[17];
  for (const auto& b : blocks) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(b.id));
    os << buf << ',' << (b.creator == Creator::honest ? 'h' : 'm') << ',' << b.born_round << ','
       << b.first_exposure << ',' << b.confirm_round << '\n';
  }
  return os.str();
}

std::string MetricsRecord::to_json() const {
  nlohmann::json j;
  j["rounds"] = rounds;
  j["honest_blocks"] = honest_blocks;
  j["malicious_blocks"] = malicious_blocks;
  j["reorgs"] = reorgs;
  j["deep_reorgs"] = deep_reorgs;
  j["confirmed_violations"] = confirmed_violations;
  j["adapt_con_rounds"] = adapt_con_rounds;
  j["latency_p50"] = latency_p50;
  j["latency_p95"] = latency_p95;
  j["confirmed_fraction"] = confirmed_fraction;
  return j.dump(2) + "\n";
}

std::string export_event_log(const std::vector<Event>& events) {
  std::ostringstream os;
  char buf[17];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(e.block));
    os << e.round << ' ' << to_string(e.kind) << ' ' << buf << '\n';
  }
  return os.str();
}

}  // namespace ghast
