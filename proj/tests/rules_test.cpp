#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ghast/rules.hpp"
#include "ghast/treegraph.hpp"
#include "support/reference.hpp"

using namespace ghast;
using testref::RandomGraphBuilder;
using testref::RefGraph;

namespace {

// Search for ids with prescribed tags.
BlockId find_id(const ProtocolParams& p, bool want_heavy, bool want_timer, BlockId start = 1) {
  for (BlockId cand = start;; ++cand) {
    if ((weight_tag(cand, p) == WeightTag::heavy) == want_heavy &&
        timer_tag(cand, p) == want_timer && cand != kGenesisId)
      return cand;
  }
}

struct Fixture {
  BlockStore store;
  TreeGraph graph;

  explicit Fixture(ProtocolParams p) : store(p), graph(store) { graph.insert(kGenesisId); }

  void add(BlockId id, BlockId parent, Strategy s = Strategy::opt,
           std::vector<BlockId> refs = {}) {
    Block b;
    b.id = id;
    b.parent = parent;
    b.refs = std::move(refs);
    b.strategy = s;
    auto idx = store.add(b, {});
    REQUIRE(idx.has_value());
    REQUIRE(graph.insert_idx(*idx) == TreeGraph::Insert::ok);
  }
};

}  // namespace

TEST_CASE("weight tag: eta_w = 1 makes every block heavy") {
  ProtocolParams p;
  p.eta_w = 1;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) CHECK(weight_tag(rng(), p) == WeightTag::heavy);
}

TEST_CASE("weight tag frequency matches 1/eta_w within 3 sigma") {
  ProtocolParams p;
  p.eta_w = 600;
  std::mt19937_64 rng(17);
  const int n = 1'000'000;
  int heavy = 0;
  for (int i = 0; i < n; ++i)
    if (weight_tag(rng(), p) == WeightTag::heavy) ++heavy;
  double mean = n / 600.0;
  double sigma = std::sqrt(n * (1.0 / 600) * (1 - 1.0 / 600));
  CHECK(std::abs(heavy - mean) <= 3 * sigma);
}

TEST_CASE("weight tag is deterministic per id") {
  ProtocolParams p;
  p.eta_w = 600;
  BlockId id = 0xdeadbeef12345678ull;
  CHECK(weight_tag(id, p) == weight_tag(id, p));
}

TEST_CASE("timer tag: eta_t = 1 makes every block a timer block") {
  ProtocolParams p;
  p.eta_t = 1;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(timer_tag(rng(), p));
}

TEST_CASE("timer tag frequency matches 1/eta_t within 3 sigma") {
  ProtocolParams p;
  p.eta_t = 360;
  std::mt19937_64 rng(23);
  const int n = 1'000'000;
  int timer = 0;
  for (int i = 0; i < n; ++i)
    if (timer_tag(rng(), p)) ++timer;
  double mean = n / 360.0;
  double sigma = std::sqrt(n * (1.0 / 360) * (1 - 1.0 / 360));
  CHECK(std::abs(timer - mean) <= 3 * sigma);
}

TEST_CASE("timer heights: first timer block has height 1, chains count up") {
  ProtocolParams p;
  p.eta_t = 2;
  Fixture f(p);
  BlockId prev = kGenesisId;
  for (int i = 1; i <= 5; ++i) {
    BlockId id = find_id(p, false, true, 1000 * i);
    f.add(id, prev);
    CHECK(timer_height(f.graph, id) == static_cast<std::uint32_t>(i));
    prev = id;
  }
  // A non-timer block on top carries the max of its past.
  BlockId plain = find_id(p, false, false, 999999);
  f.add(plain, prev);
  CHECK(timer_height(f.graph, plain) == 5);
  CHECK(max_timer_height(f.graph) == 5);
}

TEST_CASE("timer heights: diamond of two height-2 timer blocks gives height 3") {
  ProtocolParams p;
  p.eta_t = 2;
  Fixture f(p);
  BlockId t1 = find_id(p, false, true, 100);
  BlockId t2a = find_id(p, false, true, 200);
  BlockId t2b = find_id(p, false, true, 300);
  BlockId t3 = find_id(p, false, true, 400);
  f.add(t1, kGenesisId);
  f.add(t2a, t1);
  f.add(t2b, t1);
  CHECK(timer_height(f.graph, t2a) == 2);
  CHECK(timer_height(f.graph, t2b) == 2);
  f.add(t3, t2a, Strategy::opt, {t2b});  // both height-2 blocks in past
  CHECK(timer_height(f.graph, t3) == 3);
}

TEST_CASE("max_timer_height: graph without timer blocks is 0") {
  ProtocolParams p;
  p.eta_t = 2;
  Fixture f(p);
  BlockId plain = find_id(p, false, false, 50);
  f.add(plain, kGenesisId);
  CHECK(max_timer_height(f.graph) == 0);
}

TEST_CASE("max_timer_height matches brute-force scan on random graphs") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 3;
  p.eta_a = 20;
  p.eta_b = 4;
  RandomGraphBuilder b(p, 4242);
  TreeGraph g(b.store);
  g.insert(kGenesisId);
  for (int i = 0; i < 150; ++i) {
    g.insert_idx(b.add_random_block());
    RefGraph ref{&b.store, {}};
    for (std::uint32_t k = 0; k < b.store.size(); ++k) ref.members.insert(k);
    CHECK(max_timer_height(g) == ref.max_timer_height());
  }
}

TEST_CASE("is_old boundary cases") {
  ProtocolParams p;
  p.eta_t = 1;  // every block is a timer block
  p.eta_b = 4;
  Fixture f(p);
  // Grow a timer chain to height eta_b; genesis (height 0) turns old exactly
  // at the boundary.
  BlockId prev = kGenesisId;
  for (std::uint32_t i = 1; i < p.eta_b; ++i) {
    BlockId id = find_id(p, false, true, 1000 * i);
    f.add(id, prev);
    prev = id;
    CHECK(!is_old(f.graph, kGenesisId, p));
  }
  BlockId last = find_id(p, false, true, 777777);
  f.add(last, prev);
  CHECK(max_timer_height(f.graph) == p.eta_b);
  CHECK(is_old(f.graph, kGenesisId, p));
}

TEST_CASE("is_old is monotone under graph growth and hereditary over pasts") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 2;
  p.eta_a = 20;
  p.eta_b = 3;
  for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
    RandomGraphBuilder b(p, seed);
    TreeGraph g(b.store);
    g.insert(kGenesisId);
    std::vector<char> was_old;  // per store idx
    was_old.push_back(0);
    for (int i = 0; i < 120; ++i) {
      g.insert_idx(b.add_random_block());
      was_old.push_back(0);
      for (std::uint32_t idx = 0; idx < b.store.size(); ++idx) {
        bool old_now = is_old(g, b.store.id_of(idx), p);
        if (was_old[idx]) CHECK(old_now);  // once old, always old
        was_old[idx] = old_now ? 1 : 0;
        if (old_now && idx != 0) {
          // every block in its past is old too
          for (auto m : closure_of(b.store, idx))
            CHECK(is_old(g, b.store.id_of(m), p));
        }
      }
    }
  }
}

TEST_CASE("adapt: empty past is opt, fresh graphs are opt") {
  ProtocolParams p;
  p.eta_b = 4;
  BlockStore store(p);
  TreeGraph g(store);
  CHECK(adapt(g, p) == Strategy::opt);  // empty graph
  g.insert(kGenesisId);
  CHECK(adapt(g, p) == Strategy::opt);
  PastView empty(store, {});
  CHECK(adapt(store, empty, p) == Strategy::opt);
}

TEST_CASE("adapt flips to con when an old pivot parent lacks a dominant child") {
  ProtocolParams p;
  p.eta_t = 1;   // every block a timer block: heights grow along the chain
  p.eta_b = 3;
  p.eta_a = 10;
  Fixture f(p);
  // Linear chain long enough that genesis' child has an old parent; the
  // chain's margins equal its remaining length, kept below eta_a.
  BlockId prev = kGenesisId;
  for (int i = 1; i <= 5; ++i) {
    BlockId id = find_id(p, false, true, 5000 * i);
    f.add(id, prev);
    prev = id;
  }
  // max timer height 5; genesis (0) and first blocks are old; margin of every
  // pivot block is at most 5 < eta_a.
  CHECK(is_old(f.graph, kGenesisId, p));
  CHECK(adapt(f.graph, p) == Strategy::con);
}

TEST_CASE("adapt stays opt while margins dominate, goes con at eta_a - 1") {
  ProtocolParams p;
  p.eta_t = 1;
  p.eta_b = 2;
  p.eta_a = 4;
  // Chain g -> a -> b...: give a's child a dominance margin of exactly
  // eta_a - 1 by adding sibling weight.
  Fixture f(p);
  BlockId a = find_id(p, false, true, 100);
  f.add(a, kGenesisId);
  // children of a: main (subtree 5) and sib (subtree 2): margin 3 = eta_a - 1.
  BlockId main_c = find_id(p, false, true, 200);
  BlockId sib = find_id(p, false, true, 300);
  f.add(main_c, a);
  f.add(sib, a);
  BlockId prev = main_c;
  for (int i = 0; i < 4; ++i) {
    BlockId id = find_id(p, false, true, 400 + 100 * i);
    f.add(id, prev);
    prev = id;
  }
  BlockId sib2 = find_id(p, false, true, 900);
  f.add(sib2, sib);
  // Margins: main_c has subtree 6... extend sib until margin = eta_a - 1.
  auto margin = [&] {
    return f.graph.subtree_weight(main_c) - f.graph.sib_subtree_weight(main_c);
  };
  BlockId stem = sib2;
  while (margin() >= p.eta_a) {
    BlockId id = find_id(p, false, true, 10000 + static_cast<BlockId>(stem & 0xffff));
    f.add(id, stem);
    stem = id;
  }
  CHECK(margin() == p.eta_a - 1);
  CHECK(is_old(f.graph, a, p));
  CHECK(adapt(f.graph, p) == Strategy::con);
}

TEST_CASE("adapt agrees with the closure evaluator on random graphs") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 2;
  p.eta_a = 6;
  p.eta_b = 2;
  for (std::uint64_t seed : {5ull, 6ull, 7ull, 8ull}) {
    RandomGraphBuilder b(p, seed);
    TreeGraph g(b.store);
    g.insert(kGenesisId);
    std::vector<std::uint32_t> members{0};
    for (int i = 0; i < 150; ++i) {
      auto idx = b.add_random_block();
      g.insert_idx(idx);
      members.push_back(idx);
      Strategy fast = adapt(g, p);
      Strategy brute = adapt_of_closure(b.store, members, p);
      REQUIRE(fast == brute);
    }
  }
}

TEST_CASE("adapt output is insensitive to insertion order") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 2;
  p.eta_a = 6;
  p.eta_b = 2;
  RandomGraphBuilder b(p, 909);
  TreeGraph g1(b.store);
  g1.insert(kGenesisId);
  std::vector<std::uint32_t> idxs;
  for (int i = 0; i < 100; ++i) {
    auto idx = b.add_random_block();
    idxs.push_back(idx);
    g1.insert_idx(idx);
  }
  Strategy want = adapt(g1, p);
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 4; ++rep) {
    TreeGraph g2(b.store);
    g2.insert(kGenesisId);
    auto remaining = idxs;
    while (!remaining.empty()) {
      std::size_t at = rng() % remaining.size();
      if (g2.insert_idx(remaining[at]) == TreeGraph::Insert::ok)
        remaining.erase(remaining.begin() + at);
    }
    CHECK(adapt(g2, p) == want);
  }
}

TEST_CASE("block_weight follows the three branches") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 1;
  p.eta_b = 2;
  p.eta_a = 100;

  // Fresh graph: adapt = opt, weight 1 regardless of tag.
  Fixture fresh(p);
  Block heavy_block;
  heavy_block.id = find_id(p, true, true, 1);  // eta_t = 1: every id is a timer block
  CHECK(block_weight(heavy_block, fresh.graph, p) == 1);

  // Old graph under a liveness fork: adapt = con.
  Fixture stale(p);
  BlockId prev = kGenesisId;
  for (int i = 1; i <= 4; ++i) {
    BlockId id = find_id(p, false, true, 3000 * i);
    stale.add(id, prev);
    prev = id;
  }
  REQUIRE(adapt(stale.graph, p) == Strategy::con);
  Block hb;
  hb.id = find_id(p, true, true, 1);
  CHECK(block_weight(hb, stale.graph, p) == p.eta_w);
  Block lb;
  lb.id = find_id(p, false, true, 1);
  CHECK(block_weight(lb, stale.graph, p) == 0);
}

TEST_CASE("expected block weight under con stays near 1") {
  ProtocolParams p;
  p.eta_w = 600;
  std::mt19937_64 rng(2718);
  const int n = 100'000;
  double sum = 0;
  for (int i = 0; i < n; ++i)
    sum += weight_tag(rng(), p) == WeightTag::heavy ? static_cast<double>(p.eta_w) : 0.0;
  double mean = sum / n;
  double sigma = std::sqrt((600.0 - 1.0)) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean - 1.0) <= 3 * sigma);
}

TEST_CASE("validate_strategy accepts honest construction and rejects tampering") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 1;
  p.eta_b = 3;
  p.eta_a = 8;
  BlockStore store(p);
  DigestFactory digests(31);
  TreeGraph g(store);
  g.insert(kGenesisId);
  // Honest growth: every block's declared strategy comes from its view.
  for (int i = 0; i < 40; ++i) {
    Block b;
    b.parent = g.pivot_tip();
    for (auto t : g.dag_tips())
      if (t != b.parent) b.refs.push_back(t);
    b.strategy = adapt(g, p);
    b.id = digests.make(b.parent, b.refs, Creator::honest);
    auto idx = store.add(b, {g.size(), g.total_weight()});
    REQUIRE(idx);
    g.insert_idx(*idx);
    CHECK(validate_strategy(b, store, p) == StrategyCheck::ok);
  }
  // A block claiming opt while its past forces con is invalid.
  REQUIRE(adapt(g, p) == Strategy::con);  // chain of timer blocks got old
  Block cheat;
  cheat.parent = g.pivot_tip();
  for (auto t : g.dag_tips())
    if (t != cheat.parent) cheat.refs.push_back(t);
  cheat.strategy = Strategy::opt;
  cheat.creator = Creator::malicious;
  cheat.id = digests.make(cheat.parent, cheat.refs, Creator::malicious);
  store.add(cheat, {g.size(), g.total_weight()});
  CHECK(validate_strategy(cheat, store, p) == StrategyCheck::strategy_mismatch);

  // The same claim against a *declared* past that still looks fresh is fine:
  // dropping refs is allowed manipulation.
  Block trim;
  trim.parent = kGenesisId;
  trim.strategy = Strategy::opt;
  trim.creator = Creator::malicious;
  trim.id = digests.make(trim.parent, trim.refs, Creator::malicious);
  store.add(trim, {0, 0});
  CHECK(validate_strategy(trim, store, p) == StrategyCheck::ok);
}

TEST_CASE("timer height strictly increases along chains of timer blocks") {
  ProtocolParams p;
  p.eta_w = 4;
  p.eta_t = 2;
  RandomGraphBuilder b(p, 5150);
  TreeGraph g(b.store);
  g.insert(kGenesisId);
  for (int i = 0; i < 200; ++i) g.insert_idx(b.add_random_block());
  for (std::uint32_t idx = 1; idx < b.store.size(); ++idx) {
    if (!b.store.rec(idx).timer_tag) continue;
    // walk ancestors: any timer ancestor must have smaller height
    std::uint32_t cur = b.store.rec(idx).parent_idx;
    while (true) {
      if (b.store.rec(cur).timer_tag)
        CHECK(b.store.rec(cur).timer_height < b.store.rec(idx).timer_height);
      if (cur == 0) break;
      cur = b.store.rec(cur).parent_idx;
    }
  }
}
