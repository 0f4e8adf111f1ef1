#include "ghast/rules.hpp"

namespace ghast {

std::uint32_t timer_height(const TreeGraph& g, BlockId id) {
  auto idx = g.store().find(id);
  if (!idx || !g.contains_idx(*idx)) throw UnknownBlock("timer_height: block not in graph");
  return g.store().rec(*idx).timer_height;
}

bool is_old(const TreeGraph& g, BlockId id, const ProtocolParams& p) {
  std::uint32_t th = g.store().rec(g.store().index_of(id)).timer_height;
  std::uint32_t max_th = g.max_timer_height();
  return max_th >= th && max_th - th >= p.eta_b;
}

Strategy adapt(TreeGraph& past_graph, const ProtocolParams& p) {
  if (past_graph.size() == 0) return Strategy::opt;
  if (past_graph.tip_is_old(p)) return Strategy::con;
  if (past_graph.has_low_margin_old_parent(p)) return Strategy::con;
  return Strategy::opt;
}

Strategy adapt(const BlockStore& store, const PastView& past_view, const ProtocolParams& p) {
  return adapt_of_closure(store, past_view.members(), p);
}

std::uint64_t block_weight(const Block& b, TreeGraph& past_graph, const ProtocolParams& p) {
  if (adapt(past_graph, p) == Strategy::opt) return 1;
  return weight_tag(b.id, p) == WeightTag::heavy ? p.eta_w : 0;
}

StrategyCheck validate_strategy(const Block& b, const BlockStore& store, const ProtocolParams& p) {
  auto idx = store.find(b.id);
  if (!idx) throw UnknownBlock("validate_strategy: block not in store");
  Strategy forced = adapt_of_closure(store, closure_of(store, *idx), p);
  return forced == b.strategy ? StrategyCheck::ok : StrategyCheck::strategy_mismatch;
}

}  // namespace ghast
