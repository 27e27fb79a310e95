#pragma once

// Discrete-event simulation of the edge-level corruption process. Queries
// arrive as a Poisson stream, read K >= 2 edges instantaneously and then
// write one independently chosen edge. Distributed writes occupy a window of
// exponential length; a second write that starts at the remote end inside
// that window conflicts with it. State changes commit at completion.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "corrode/model.hpp"

namespace corrode {

using Rng = std::mt19937_64;

/// When a run ends. `AllCategoryOnsets` records U_gamma at the global
/// crossing but keeps going until every category has reached its own gamma
/// fraction of state-3 edges (or the horizon).
enum class StopRule : std::uint8_t { Gamma, AllCategoryOnsets };

struct SimConfig {
  std::uint64_t seed = 1;
  double horizon = 1e6;        ///< simulated seconds
  double sampleInterval = 1.0; ///< seconds between trajectory rows
  double gamma = 0.1;
  StopRule stopRule = StopRule::Gamma;
  bool checkTransitions = true;  ///< throw on any arc outside the diagram
  bool dirtyReads = true;        ///< false forces every query to count as clean

  void validate() const {
    if (!(horizon > 0.0)) throw InvalidInput("sim.horizon", "must be > 0");
    if (!(sampleInterval > 0.0)) throw InvalidInput("sim.sample_interval", "must be > 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("solver.gamma", "must lie in (0, 1)");
  }
};

enum class End : std::uint8_t { A, B };

inline constexpr End opposite(End e) noexcept { return e == End::A ? End::B : End::A; }

struct WriteInFlight {
  std::uint64_t edge = 0;
  double startTime = 0.0;
  double completionTime = 0.0;
  End remoteEnd = End::B;
  bool writerDirty = false;
  bool conflicted = false;
  bool partnerDirty = false;

  End startEnd() const noexcept { return opposite(remoteEnd); }
};

/// A newcomer conflicts with the incumbent when it starts at the end the
/// incumbent is still writing remotely, before that write lands.
inline bool conflicts(const WriteInFlight& incumbent, const WriteInFlight& newcomer) noexcept {
  return newcomer.edge == incumbent.edge && newcomer.startTime < incumbent.completionTime &&
         newcomer.startEnd() == incumbent.remoteEnd;
}

/// Marks both writes conflicted and records each other's dirtiness.
inline void markConflict(WriteInFlight& incumbent, WriteInFlight& newcomer) noexcept {
  incumbent.conflicted = newcomer.conflicted = true;
  incumbent.partnerDirty = incumbent.partnerDirty || newcomer.writerDirty;
  newcomer.partnerDirty = newcomer.partnerDirty || incumbent.writerDirty;
}

struct EdgeRecord {
  static constexpr std::int32_t kNoWrite = -1;

  EdgeState state = EdgeState::CleanLocal;
  bool isDistributed = false;
  std::uint8_t category = 0;
  std::int32_t inFlight = kNoWrite;  ///< most recent uncompleted write, index into the pool
};

enum class ReadOutcome : std::uint8_t { Clean, Corrupt };

/// K >= 2 with P(K = k) = r (1-r)^(k-2).
inline int sampleReadCount(Rng& rng, double r) {
  if (r >= 1.0) return 2;
  return 2 + std::geometric_distribution<int>(r)(rng);
}

/// State 2 edges yield their correct side with probability 1/2.
inline ReadOutcome executeRead(const EdgeRecord& edge, Rng& rng) {
  switch (edge.state) {
    case EdgeState::CleanLocal:
    case EdgeState::CleanDistributed: return ReadOutcome::Clean;
    case EdgeState::ReciprocallyInconsistent:
      return std::bernoulli_distribution(0.5)(rng) ? ReadOutcome::Clean : ReadOutcome::Corrupt;
    case EdgeState::SemanticallyCorrupt: return ReadOutcome::Corrupt;
  }
  return ReadOutcome::Corrupt;
}

/// Outcome of a completed write, in precedence order: any dirty participant
/// corrupts; a clean conflict leaves the edge inconsistent; a clean
/// conflict-free write leaves it consistent. State 3 absorbs everything.
inline EdgeState applyWriteOutcome(const EdgeRecord& edge, const WriteInFlight& write) noexcept {
  if (edge.state == EdgeState::SemanticallyCorrupt) return edge.state;
  if (write.writerDirty || (write.conflicted && write.partnerDirty)) return EdgeState::SemanticallyCorrupt;
  if (!edge.isDistributed) return edge.state;
  if (write.conflicted) return EdgeState::ReciprocallyInconsistent;
  return EdgeState::CleanDistributed;
}

/// Uniform edge choice (Complete) or category-then-uniform (ScaleFree).
/// Edges of category j occupy a contiguous index block.
class EdgeSampler {
 public:
  explicit EdgeSampler(const GraphSpec& graph) {
    if (const auto* sf = std::get_if<ScaleFree>(&graph.topology)) {
      std::vector<double> weights;
      std::uint64_t offset = 0;
      for (const auto& c : sf->categories) {
        offsets_.push_back(offset);
        sizes_.push_back(c.edges);
        weights.push_back(c.probability);
        offset += c.edges;
      }
      categoryPick_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
    } else {
      offsets_.push_back(0);
      sizes_.push_back(static_cast<std::uint64_t>(graph.n));
    }
  }

  std::uint64_t operator()(Rng& rng) {
    const std::size_t cat = sizes_.size() > 1 ? categoryPick_(rng) : 0;
    return offsets_[cat] + std::uniform_int_distribution<std::uint64_t>(0, sizes_[cat] - 1)(rng);
  }

  std::size_t categories() const noexcept { return sizes_.size(); }
  std::uint64_t categoryOffset(std::size_t j) const { return offsets_.at(j); }
  std::uint64_t categorySize(std::size_t j) const { return sizes_.at(j); }

 private:
  std::vector<std::uint64_t> offsets_;
  std::vector<std::uint64_t> sizes_;
  std::discrete_distribution<std::size_t> categoryPick_;
};

inline std::uint64_t sampleEdge(Rng& rng, EdgeSampler& sampler) { return sampler(rng); }

struct TrajectoryRow {
  double t = 0.0;
  std::array<std::uint64_t, 4> n{};

  std::uint64_t total() const noexcept { return n[0] + n[1] + n[2] + n[3]; }
  bool operator==(const TrajectoryRow&) const = default;
};

struct EventCounts {
  std::uint64_t queries = 0;
  std::uint64_t reads = 0;
  std::uint64_t dirtyQueries = 0;
  std::uint64_t localWrites = 0;
  std::uint64_t distributedWrites = 0;
  std::uint64_t conflicts = 0;      ///< conflicting pairs
  std::uint64_t corrections = 0;    ///< 2 -> 1
  std::uint64_t inconsistencies = 0;///< 1 -> 2
  std::array<std::uint64_t, 3> corruptions{};  ///< 0->3, 1->3, 2->3
  std::array<std::array<std::uint64_t, 4>, 4> transitions{};  ///< [from][to], changes only

  bool operator==(const EventCounts&) const = default;
};

struct SimResult {
  std::optional<double> uGammaEstimate;  ///< empty when the horizon was reached first
  double endTime = 0.0;
  std::vector<TrajectoryRow> trajectory;
  EventCounts events;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> categorySizes;
  std::vector<std::array<std::uint64_t, 4>> categoryCounts;  ///< final per-category state counts
  std::vector<std::optional<double>> categoryOnset;  ///< first time a category's own state-3 fraction >= gamma

  bool horizonExceeded() const noexcept { return !uGammaEstimate.has_value(); }
  std::uint64_t illegalTransitions() const noexcept {
    std::uint64_t bad = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        if (i != j && !isLegalTransition(EdgeState(i), EdgeState(j)))
          bad += events.transitions[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return bad;
  }
  bool operator==(const SimResult&) const = default;
};

/// One run. Single-threaded and fully determined by (graph, workload, config).
class Simulator {
 public:
  Simulator(GraphSpec graph, WorkloadSpec workload, SimConfig config)
      : graph_(std::move(graph)), workload_(workload), config_(config), rng_(config.seed),
        sampler_((validate(), graph_)) {
    const std::size_t cats = sampler_.categories();
    categoryCounts_.assign(cats, {});
    onset_.assign(cats, std::nullopt);
    edges_.resize(static_cast<std::size_t>(graph_.n));
    for (std::size_t j = 0; j < cats; ++j) {
      const std::uint64_t off = sampler_.categoryOffset(j), size = sampler_.categorySize(j);
      const auto distributed = static_cast<std::uint64_t>(std::llround(graph_.f * static_cast<double>(size)));
      for (std::uint64_t i = 0; i < size; ++i) {
        auto& e = edges_[off + i];
        e.category = static_cast<std::uint8_t>(j);
        e.isDistributed = i < distributed;
        e.state = e.isDistributed ? EdgeState::CleanDistributed : EdgeState::CleanLocal;
      }
      categoryCounts_[j] = {size - distributed, distributed, 0, 0};
      counts_[0] += size - distributed;
      counts_[1] += distributed;
    }
    target_ = config_.gamma * graph_.n;
  }

  SimResult run() {
    SimResult out;
    out.seed = config_.seed;
    std::exponential_distribution<double> interArrival(workload_.lambda);
    schedule(interArrival(rng_), EventKind::Arrival, 0);

    std::uint64_t sampleIndex = 0;
    auto sampleUpTo = [&](double t) {
      for (;;) {
        const double ts = static_cast<double>(sampleIndex) * config_.sampleInterval;
        if (ts > t || ts > config_.horizon) break;
        out.trajectory.push_back({ts, counts_});
        ++sampleIndex;
      }
    };

    while (!queue_.empty()) {
      const Event ev = queue_.top();
      if (ev.time > config_.horizon) break;
      queue_.pop();
      sampleUpTo(ev.time);
      now_ = ev.time;
      if (ev.kind == EventKind::Arrival) {
        arrival();
        schedule(now_ + interArrival(rng_), EventKind::Arrival, 0);
      } else {
        complete(static_cast<std::int32_t>(ev.id));
      }
      if (stopped_) break;
    }

    out.uGammaEstimate = crossing_;
    if (stopped_) {
      out.endTime = now_;
      if (out.trajectory.empty() || out.trajectory.back().t != now_) out.trajectory.push_back({now_, counts_});
    } else {
      sampleUpTo(config_.horizon);
      out.endTime = config_.horizon;
    }
    out.events = events_;
    for (std::size_t j = 0; j < sampler_.categories(); ++j) out.categorySizes.push_back(sampler_.categorySize(j));
    out.categoryCounts = categoryCounts_;
    out.categoryOnset = onset_;
    return out;
  }

  // Exposed for tests that drive single writes by hand.

  /// Starts a write by a query with the given dirtiness. Local writes (and
  /// zero-delay distributed writes) commit immediately; otherwise returns the
  /// pool index of the scheduled write.
  std::optional<std::int32_t> beginWrite(std::uint64_t edgeIndex, bool writerDirty) {
    auto& edge = edges_[edgeIndex];
    WriteInFlight w;
    w.edge = edgeIndex;
    w.startTime = now_;
    w.writerDirty = writerDirty;
    if (!edge.isDistributed || workload_.delta == 0.0) {
      edge.isDistributed ? ++events_.distributedWrites : ++events_.localWrites;
      w.completionTime = now_;
      commit(edge, w);
      return std::nullopt;
    }
    ++events_.distributedWrites;
    double d = std::exponential_distribution<double>(1.0 / workload_.delta)(rng_);
    w.completionTime = now_ + d;
    if (!(w.completionTime > now_)) w.completionTime = std::nextafter(now_, kInfinity);
    w.remoteEnd = std::bernoulli_distribution(0.5)(rng_) ? End::A : End::B;

    const std::int32_t id = allocate(w);
    if (edge.inFlight != EdgeRecord::kNoWrite) {
      auto& incumbent = pool_[static_cast<std::size_t>(edge.inFlight)];
      auto& fresh = pool_[static_cast<std::size_t>(id)];
      if (conflicts(incumbent, fresh)) {
        markConflict(incumbent, fresh);
        ++events_.conflicts;
      }
    }
    edge.inFlight = id;
    schedule(w.completionTime, EventKind::Completion, static_cast<std::uint64_t>(id));
    return id;
  }

  void setTime(double t) noexcept { now_ = t; }
  const WriteInFlight& write(std::int32_t id) const { return pool_.at(static_cast<std::size_t>(id)); }
  const EdgeRecord& edge(std::uint64_t i) const { return edges_.at(i); }
  void forceState(std::uint64_t i, EdgeState s) {
    auto& e = edges_.at(i);
    adjustCounts(e, e.state, s);
    e.state = s;
  }
  const std::array<std::uint64_t, 4>& counts() const noexcept { return counts_; }
  const EventCounts& events() const noexcept { return events_; }

  /// Commits a scheduled write as if its completion event fired now.
  void completeWrite(std::int32_t id) { complete(id); }

 private:
  enum class EventKind : std::uint8_t { Arrival, Completion };

  struct Event {
    double time;
    std::uint64_t seq;
    EventKind kind;
    std::uint64_t id;

    bool operator>(const Event& o) const noexcept {
      return time != o.time ? time > o.time : seq > o.seq;
    }
  };

  void validate() const {
    graph_.validate();
    workload_.validate();
    config_.validate();
    if (graph_.n != std::floor(graph_.n)) throw InvalidInput("graph.n", "must be an integer to simulate");
    if (graph_.n > 2e8) throw InvalidInput("graph.n", "too large to simulate (limit 2e8 edges)");
    if (const auto* sf = std::get_if<ScaleFree>(&graph_.topology); sf && sf->categories.size() > 255)
      throw InvalidInput("graph.topology.categories", "at most 255 categories");
  }

  void schedule(double t, EventKind kind, std::uint64_t id) { queue_.push(Event{t, seq_++, kind, id}); }

  std::int32_t allocate(const WriteInFlight& w) {
    if (!free_.empty()) {
      const auto id = free_.back();
      free_.pop_back();
      pool_[static_cast<std::size_t>(id)] = w;
      return id;
    }
    pool_.push_back(w);
    return static_cast<std::int32_t>(pool_.size() - 1);
  }

  void arrival() {
    ++events_.queries;
    const int k = sampleReadCount(rng_, workload_.r);
    bool dirty = false;
    for (int i = 0; i < k; ++i) {
      const auto e = sampler_(rng_);
      if (executeRead(edges_[e], rng_) == ReadOutcome::Corrupt) dirty = true;
    }
    events_.reads += static_cast<std::uint64_t>(k);
    if (!config_.dirtyReads) dirty = false;
    if (dirty) ++events_.dirtyQueries;
    beginWrite(sampler_(rng_), dirty);
  }

  void complete(std::int32_t id) {
    const WriteInFlight w = pool_[static_cast<std::size_t>(id)];
    auto& edge = edges_[w.edge];
    if (edge.inFlight == id) edge.inFlight = EdgeRecord::kNoWrite;
    free_.push_back(id);
    commit(edge, w);
  }

  void commit(EdgeRecord& edge, const WriteInFlight& w) {
    const EdgeState from = edge.state;
    const EdgeState to = applyWriteOutcome(edge, w);
    if (from == to) return;
    if (config_.checkTransitions) (void)Transition::make(from, to);
    ++events_.transitions[static_cast<std::size_t>(index(from))][static_cast<std::size_t>(index(to))];
    if (to == EdgeState::SemanticallyCorrupt && index(from) < 3) ++events_.corruptions[static_cast<std::size_t>(index(from))];
    if (from == EdgeState::ReciprocallyInconsistent && to == EdgeState::CleanDistributed) ++events_.corrections;
    if (from == EdgeState::CleanDistributed && to == EdgeState::ReciprocallyInconsistent) ++events_.inconsistencies;
    adjustCounts(edge, from, to);
    edge.state = to;
  }

  void adjustCounts(const EdgeRecord& edge, EdgeState from, EdgeState to) {
    --counts_[static_cast<std::size_t>(index(from))];
    ++counts_[static_cast<std::size_t>(index(to))];
    auto& cat = categoryCounts_[edge.category];
    --cat[static_cast<std::size_t>(index(from))];
    ++cat[static_cast<std::size_t>(index(to))];
    if (to == EdgeState::SemanticallyCorrupt) {
      const double size = static_cast<double>(sampler_.categorySize(edge.category));
      if (!onset_[edge.category] && static_cast<double>(cat[3]) >= config_.gamma * size)
        onset_[edge.category] = now_;
      if (!crossing_ && static_cast<double>(counts_[3]) >= target_) {
        crossing_ = now_;
        if (config_.stopRule == StopRule::Gamma) stopped_ = true;
      }
      if (crossing_ && config_.stopRule == StopRule::AllCategoryOnsets) {
        bool all = true;
        for (const auto& o : onset_) all = all && o.has_value();
        stopped_ = all;
      }
    }
  }

  GraphSpec graph_;
  WorkloadSpec workload_;
  SimConfig config_;
  Rng rng_;
  EdgeSampler sampler_;
  std::vector<EdgeRecord> edges_;
  std::vector<WriteInFlight> pool_;
  std::vector<std::int32_t> free_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double target_ = 0.0;
  bool stopped_ = false;
  std::optional<double> crossing_;
  std::array<std::uint64_t, 4> counts_{};
  std::vector<std::array<std::uint64_t, 4>> categoryCounts_;
  std::vector<std::optional<double>> onset_;
  EventCounts events_;
};

inline SimResult runSimulation(const GraphSpec& graph, const WorkloadSpec& workload, const SimConfig& sim) {
  return Simulator(graph, workload, sim).run();
}

}  // namespace corrode
