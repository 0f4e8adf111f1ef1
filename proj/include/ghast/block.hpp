#pragma once

#include <cstdint>
#include <vector>

namespace ghast {

// 64-bit digest. Serves as block identity, best-child tie-breaker and the
// source for the weight/timer tags.
using BlockId = std::uint64_t;

inline constexpr BlockId kGenesisId = 0x9e3779b97f4a7c15ull;
inline constexpr std::uint32_t kNoIndex = 0xffffffffu;

enum class Creator : std::uint8_t { honest, malicious };

// Strategy bit carried in the block header. Forced by the block's past graph;
// a block whose bit disagrees with its past is invalid.
enum class Strategy : std::uint8_t { opt, con };

struct Block {
  BlockId id = 0;
  BlockId parent = 0;  // ignored for genesis
  bool is_genesis = false;
  std::vector<BlockId> refs;
  Creator creator = Creator::honest;
  std::int64_t born_round = 0;
  Strategy strategy = Strategy::opt;
};

// SplitMix64 finalizer. Fixed integer arithmetic, bit-identical everywhere.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Keyed PRF over block ids, one key per tag family.
inline constexpr std::uint64_t kWeightTagKey = 0xc2b2ae3d27d4eb4full;
inline constexpr std::uint64_t kTimerTagKey = 0x165667b19e3779f9ull;

constexpr std::uint64_t tag_value(BlockId id, std::uint64_t key) {
  return mix64(id ^ key);
}

// Largest value v such that Pr[uniform u64 <= v] ~= 1/eta.
constexpr std::uint64_t tag_threshold(std::uint64_t eta) {
  return eta <= 1 ? ~0ull : ~0ull / eta;
}

// Seeded digest source for freshly mined blocks. The nonce stream makes ids
// unique per run; everything else only needs uniformity.
class DigestFactory {
 public:
  explicit DigestFactory(std::uint64_t seed) : seed_(mix64(seed ^ 0x71ee2f5bd8a9d3c1ull)) {}

  BlockId make(BlockId parent, const std::vector<BlockId>& refs, Creator creator) {
    std::uint64_t h = seed_ ^ mix64(parent);
    for (BlockId r : refs) h = mix64(h ^ mix64(r));
    h ^= static_cast<std::uint64_t>(creator) << 1;
    return mix64(h ^ mix64(++nonce_ * 0x2545f4914f6cdd1dull));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t nonce_ = 0;
};

}  // namespace ghast
