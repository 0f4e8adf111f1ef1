#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "ghast/confirm.hpp"
#include "ghast/events.hpp"
#include "ghast/params.hpp"
#include "ghast/store.hpp"
#include "ghast/treegraph.hpp"

namespace ghast {

struct DeadlineViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HorizonExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AdversaryKind : std::uint8_t { none, withhold, balance };

struct SimConfig {
  std::uint32_t nodes = 8;
  double beta = 0.0;
  std::uint32_t delay = 1;  // maximum delivery delay d, in rounds
  std::int64_t horizon = 1000;
  std::uint64_t seed = 1;
  ProtocolParams proto;
  AdversaryKind adversary = AdversaryKind::none;
  bool oracle_enabled = false;
  bool confirm_enabled = true;
  ConfirmationConfig confirm;

  void validate() const;
  std::uint32_t adversary_budget() const;  // beta * nodes, exact
  std::uint32_t honest_nodes() const { return nodes - adversary_budget(); }
  double lambda() const { return nodes * (delay + 1.0) / proto.eta_d; }
  // Atomic rounds force a one-round floor on physical delivery.
  std::uint32_t eff_delay() const { return delay > 0 ? delay : 1; }
  // Resolve defaulted analysis thresholds (s_m = 1.5*lambda, s_h = 3*lambda).
  void resolve_analysis_thresholds();
};

struct CraftedBlock {
  std::uint32_t parent_idx = 0;
  std::vector<std::uint32_t> ref_idx;
  Strategy strategy = Strategy::opt;
  std::uint64_t past_blocks = 0;
  std::uint64_t past_weight = 0;
};

class World;

// An admissible adversary: chooses deliveries each round (the harness enforces
// the d-round deadline on top) and spends mining successes on crafted blocks.
// It observes every generated block immediately.
class Adversary {
 public:
  virtual ~Adversary() = default;
  virtual void attach(World&) {}
  // Voluntary phase-2 deliveries: (block index, honest-node mask).
  virtual void deliveries(World&, std::vector<std::pair<std::uint32_t, std::uint64_t>>& out) = 0;
  virtual std::optional<CraftedBlock> mine(World&) = 0;
  virtual void on_block(World&, std::uint32_t idx) { (void)idx; }
};

std::unique_ptr<Adversary> make_adversary(AdversaryKind kind);

// Per-block simulation-side state.
struct BlockMeta {
  std::int64_t first_exposure = -1;
  std::int64_t confirm_round = -1;
  std::uint64_t delivered_mask = 0;
  std::int32_t creator_node = -1;  // honest node index, -1 for the adversary
  bool exposed = false;
};

// Round-based execution of the model: phase 2 delivery (adversary-chosen,
// deadline-capped), phase 3(a) honest mining, phase 3(b) adversary mining.
class World {
 public:
  explicit World(SimConfig cfg);
  World(SimConfig cfg, std::unique_ptr<Adversary> adversary);
  ~World();

  // Runs one round; throws HorizonExceeded past the configured horizon.
  void run_round();
  void run();  // runs to the horizon

  const SimConfig& config() const { return cfg_; }
  std::int64_t round() const { return round_; }
  BlockStore& store() { return store_; }
  const BlockStore& store() const { return store_; }
  TreeGraph& node_view(std::uint32_t i) { return *views_[i]; }
  const TreeGraph& node_view(std::uint32_t i) const { return *views_[i]; }
  std::uint32_t honest_count() const { return honest_; }
  const std::vector<Event>& events() const { return events_; }
  const BlockMeta& meta(std::uint32_t idx) const { return meta_[idx]; }
  std::uint64_t all_nodes_mask() const { return honest_ == 64 ? ~0ull : (1ull << honest_) - 1; }
  BlockId observer_pivot_tip() const;
  Strategy observer_adapt() const;

  // Blocks exposed to some honest node but not yet held by all of them.
  std::vector<std::uint32_t> undelivered() const;

  // Adversary request to keep a block out of honest graphs until the given
  // round. Legal only within the admissibility deadline (first exposure + d);
  // the harness rejects anything later. Withholding an unexposed block needs
  // no request at all.
  void request_delay(std::uint32_t idx, std::int64_t until_round) const;

  // Event sink for the analysis oracle (consumes events as they are logged).
  using EventSink = std::function<void(const Event&)>;
  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }

  // Aggregated results; populated lazily by collect_metrics.
  struct RoundStats {
    std::uint64_t reorgs = 0;
    std::uint64_t deep_reorgs = 0;          // fork below the confirmed frontier - 1
    std::uint64_t confirmed_violations = 0; // confirmed block left the pivot
    std::int64_t adapt_con_rounds = 0;
    std::int64_t honest_blocks = 0;
    std::int64_t malicious_blocks = 0;
  };
  const RoundStats& stats() const { return stats_; }

 private:
  friend class NullAdversary;
  friend class WithholdAdversary;
  friend class BalanceAdversary;

  void expose(std::uint32_t idx);
  bool deliver(std::uint32_t idx, std::uint32_t node);  // true if inserted
  void apply_delivery_batch(std::vector<std::pair<std::uint32_t, std::uint64_t>>& batch);
  void honest_phase();
  void adversary_phase();
  void confirm_sweep();
  void mark_confirmed(std::uint32_t idx);
  void log(EventKind kind, std::uint32_t idx);
  std::uint64_t mine_threshold() const;

  SimConfig cfg_;
  BlockStore store_;
  DigestFactory digests_;
  std::mt19937_64 rng_;
  std::uint32_t honest_ = 0;
  std::int64_t round_ = -1;
  std::vector<std::unique_ptr<TreeGraph>> views_;
  std::unique_ptr<Adversary> adversary_;
  std::vector<BlockMeta> meta_;
  std::map<std::int64_t, std::vector<std::uint32_t>> deadlines_;
  std::vector<Event> events_;
  EventSink sink_;
  RoundStats stats_;
  std::size_t frontier_ = 1;  // observer confirmation frontier (pivot position)
  std::vector<std::uint32_t> longest_tip_;  // per view, nakamoto_ref mode
};

// Honest block construction over a node's current view; exposed for tests.
Block make_honest_block(TreeGraph& view, DigestFactory& digests, const ProtocolParams& p,
                        std::int64_t round);

// Post-run metrics.
struct BlockRow {
  BlockId id;
  Creator creator;
  std::int64_t born_round;
  std::int64_t first_exposure;
  std::int64_t confirm_round;  // -1 if never confirmed
};

struct MetricsRecord {
  std::int64_t rounds = 0;
  std::int64_t honest_blocks = 0;
  std::int64_t malicious_blocks = 0;
  std::uint64_t reorgs = 0;
  std::uint64_t deep_reorgs = 0;
  std::uint64_t confirmed_violations = 0;
  std::int64_t adapt_con_rounds = 0;
  double latency_p50 = -1;  // confirm_round - first_exposure over confirmed blocks
  double latency_p95 = -1;
  double confirmed_fraction = 0;
  std::vector<BlockRow> blocks;

  std::string to_csv() const;
  std::string to_json() const;
};

MetricsRecord collect_metrics(const World& w);

std::string export_event_log(const std::vector<Event>& events);

}  // namespace ghast
