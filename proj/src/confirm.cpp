#include "ghast/confirm.hpp"

#include <algorithm>

namespace ghast {

ConfirmDecision confirm_decision(const TreeGraph& g, BlockId b, double target_risk,
                                 const ConfirmationConfig& cc) {
  const BlockStore& store = g.store();
  auto idx = store.find(b);
  if (!idx || !g.contains_idx(*idx)) throw UnknownBlock("confirm_decision: block not in graph");
  auto pos = g.pivot_pos_of(*idx);
  if (!pos) throw NotOnPivot("confirm_decision: block not on the pivot chain");

  ConfirmDecision out;
  if (*pos == 0) {  // genesis
    out.confirmed = true;
    out.risk = out.section_risk = out.break_risk = 0.0;
    return out;
  }

  const ProtocolParams& p = store.params();
  const BlockRecord& rec = store.rec(*idx);
  const BlockRecord& prec = store.rec(rec.parent_idx);

  // m: blocks in the closure of b but not of b.parent (generated later than
  // the parent, honest or not - an upper bound either way).
  std::int64_t m = static_cast<std::int64_t>(rec.past_blocks + 1) -
                   static_cast<std::int64_t>(prec.past_blocks);
  // n: subtree advantage over the best sibling in the current view.
  std::uint64_t sub = g.subtree_weight_at_pos(*pos);
  std::uint64_t sib = g.max_sibling_weight_at_pos(*pos);
  std::int64_t n = sub > sib ? static_cast<std::int64_t>(sub - sib) : 0;

  risk::RiskQuery q;
  q.m = m;
  q.n = n;
  q.beta = cc.beta;
  q.eta_w = p.heavy_weight();
  q.t = m + cc.t_gap;
  q.theta = q.t + cc.theta_gap;
  out.section_risk = risk::confirmation_risk(q);

  risk::BreakQuery bq;
  bq.theta = q.theta;
  bq.eta_t = p.eta_t;
  bq.eta_b = p.eta_b;
  bq.eta_a = p.eta_a;
  bq.eta_w = p.heavy_weight();
  bq.beta = cc.beta;
  bq.z_gap = cc.z_gap;

  // Slices over Chain(b.parent), newest first. Per-slice worst stats are
  // cheap because every ingredient is monotone along the pivot; the sibling
  // weight bound uses the accumulated off-pivot weight above the slice.
  std::int64_t z = static_cast<std::int64_t>(prec.timer_height) + cc.z_gap;
  std::int64_t slack = static_cast<std::int64_t>(g.total_weight()) -
                       static_cast<std::int64_t>(prec.past_weight) -
                       static_cast<std::int64_t>(prec.weight);
  std::int64_t hi = static_cast<std::int64_t>(*pos) - 1;  // shallowest slice start
  while (hi >= 1) {
    std::int64_t lo = std::max<std::int64_t>(1, hi - cc.slice_size + 1);
    risk::BreakSlice s;
    std::uint32_t deepest_parent = g.pivot_at(static_cast<std::size_t>(lo - 1));
    s.m = static_cast<std::int64_t>(prec.past_blocks + 1) -
          static_cast<std::int64_t>(store.rec(deepest_parent).past_blocks);
    std::uint64_t l = 0;
    for (std::int64_t j = lo; j <= hi; ++j)
      l = std::max(l, g.off_pivot_weight_at(static_cast<std::size_t>(j - 1)));
    s.l = static_cast<std::int64_t>(l);
    std::uint64_t w_now = g.subtree_weight_at_pos(static_cast<std::size_t>(hi));
    s.w = std::max<std::int64_t>(0, static_cast<std::int64_t>(w_now) - slack);
    s.height_gap = z - static_cast<std::int64_t>(store.rec(deepest_parent).timer_height);
    bq.slices.push_back(s);
    hi = lo - 1;
  }
  out.break_risk = risk::assumption_break_risk(bq);

  out.risk = std::clamp(out.section_risk + out.break_risk, 0.0, 1.0);
  out.confirmed = out.risk <= target_risk;
  return out;
}

}  // namespace ghast
