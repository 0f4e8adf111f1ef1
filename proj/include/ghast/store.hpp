#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ghast/block.hpp"
#include "ghast/params.hpp"

namespace ghast {

struct UnknownBlock : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything about a block that is fixed at creation. Weight, tags and timer
// height depend only on the digest and the declared past, so they are computed
// once here and shared by every graph view.
struct BlockRecord {
  Block block;
  std::uint32_t parent_idx = kNoIndex;
  std::vector<std::uint32_t> ref_idx;
  std::uint64_t weight = 1;
  std::uint32_t height = 0;  // |Chain(b)| - 1
  bool heavy_tag = false;
  bool timer_tag = false;
  std::uint32_t timer_height = 0;      // for timer blocks: 1 + max over past; else max over past
  std::uint64_t past_blocks = 0;       // |past(b)|
  std::uint64_t past_weight = 0;       // TotalW(past(b))
  std::uint32_t past_max_timer = 0;    // MaxTH(past(b))
  std::uint32_t first_child = kNoIndex;  // intrusive child list (all views share topology)
  std::uint32_t next_sib = kNoIndex;
};

// Append-only arena of immutable blocks. Insertion order is a topological
// order by construction (dependencies are added first), which the graph views
// and the ordering algorithm rely on.
class BlockStore {
 public:
  explicit BlockStore(ProtocolParams params) : params_(params) {
    Block g;
    g.id = kGenesisId;
    g.is_genesis = true;
    g.strategy = Strategy::opt;
    BlockRecord rec;
    rec.block = g;
    rec.weight = 1;  // Adapt(empty) = opt
    recs_.push_back(std::move(rec));
    index_.emplace(kGenesisId, 0);
  }

  const ProtocolParams& params() const { return params_; }

  struct PastStats {
    std::uint64_t blocks = 0;  // |declared past|
    std::uint64_t weight = 0;  // total weight of declared past
  };

  // Adds a mined block. The creator supplies the size/weight of the declared
  // past (its local graph); timer data is derived from the direct
  // dependencies. Returns nullopt on duplicate id or missing dependency.
  std::optional<std::uint32_t> add(const Block& b, PastStats past) {
    if (index_.count(b.id)) return std::nullopt;
    BlockRecord rec;
    rec.block = b;
    auto pit = index_.find(b.parent);
    if (pit == index_.end()) return std::nullopt;
    rec.parent_idx = pit->second;
    rec.height = recs_[rec.parent_idx].height + 1;
    rec.ref_idx.reserve(b.refs.size());
    std::uint32_t max_th = recs_[rec.parent_idx].timer_height;
    for (BlockId r : b.refs) {
      auto it = index_.find(r);
      if (it == index_.end()) return std::nullopt;
      rec.ref_idx.push_back(it->second);
      max_th = std::max(max_th, recs_[it->second].timer_height);
    }
    rec.heavy_tag = tag_value(b.id, kWeightTagKey) <= tag_threshold(params_.heavy_weight());
    rec.timer_tag = tag_value(b.id, kTimerTagKey) <= tag_threshold(params_.eta_t);
    rec.past_max_timer = max_th;
    rec.timer_height = max_th + (rec.timer_tag ? 1 : 0);
    rec.past_blocks = past.blocks;
    rec.past_weight = past.weight;
    rec.weight = resolve_weight(b.strategy, rec.heavy_tag);
    std::uint32_t parent_idx = rec.parent_idx;
    std::uint32_t idx = static_cast<std::uint32_t>(recs_.size());
    rec.next_sib = recs_[parent_idx].first_child;
    recs_.push_back(std::move(rec));
    recs_[parent_idx].first_child = idx;
    index_.emplace(b.id, idx);
    return idx;
  }

  std::uint64_t resolve_weight(Strategy s, bool heavy) const {
    if (params_.mode != ProtocolMode::ghast) return 1;
    if (s == Strategy::opt) return 1;
    return heavy ? params_.eta_w : 0;
  }

  std::size_t size() const { return recs_.size(); }
  const BlockRecord& rec(std::uint32_t idx) const { return recs_[idx]; }

  std::uint32_t index_of(BlockId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw UnknownBlock("unknown block id");
    return it->second;
  }

  std::optional<std::uint32_t> find(BlockId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  BlockId id_of(std::uint32_t idx) const { return recs_[idx].block.id; }

 private:
  ProtocolParams params_;
  std::vector<BlockRecord> recs_;
  std::unordered_map<BlockId, std::uint32_t> index_;
};

}  // namespace ghast
