#pragma once

#include <cstdint>

#include "ghast/block.hpp"
#include "ghast/params.hpp"
#include "ghast/store.hpp"
#include "ghast/treegraph.hpp"

namespace ghast {

enum class WeightTag : std::uint8_t { heavy, light };

// Tag queries are pure functions of the digest.
inline WeightTag weight_tag(BlockId id, const ProtocolParams& p) {
  return tag_value(id, kWeightTagKey) <= tag_threshold(p.eta_w) ? WeightTag::heavy
                                                                : WeightTag::light;
}

inline bool timer_tag(BlockId id, const ProtocolParams& p) {
  return tag_value(id, kTimerTagKey) <= tag_threshold(p.eta_t);
}

// Height in the embedded timer chain. For a timer block this is one more than
// the maximum timer height in its past (1 for the first timer block ever); for
// any other block it is the maximum timer height of its past, 0 when the past
// has no timer block. The value depends only on the block's past, so it is
// resolved from the store; the graph argument scopes the membership check.
std::uint32_t timer_height(const TreeGraph& g, BlockId id);

inline std::uint32_t max_timer_height(const TreeGraph& g) { return g.max_timer_height(); }

// Block age speculation: well-defined even when the block is not a member of
// the graph, as long as the store knows it.
bool is_old(const TreeGraph& g, BlockId id, const ProtocolParams& p);

// Liveness detector over a miner's local graph.
Strategy adapt(TreeGraph& past_graph, const ProtocolParams& p);

// Same detector over an explicit past closure (adversary-declared pasts,
// validation paths).
Strategy adapt(const BlockStore& store, const PastView& past_view, const ProtocolParams& p);

// Weight assignment given the block's strategy and weight tag.
std::uint64_t block_weight(const Block& b, TreeGraph& past_graph, const ProtocolParams& p);

// Recomputes the forced strategy from the declared past and compares with the
// strategy bit carried in the header.
enum class StrategyCheck : std::uint8_t { ok, strategy_mismatch };
StrategyCheck validate_strategy(const Block& b, const BlockStore& store, const ProtocolParams& p);

}  // namespace ghast
