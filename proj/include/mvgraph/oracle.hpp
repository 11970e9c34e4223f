#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvgraph/core.hpp"
#include "mvgraph/subgraph.hpp"

namespace mvgraph::oracle {

/// Plain adjacency: a present flag and an ordered neighbour map per vertex.
struct Adjacency {
  std::vector<char> present;
  std::vector<std::map<VertexId, Weight>> out;
  std::uint64_t edges = 0;

  Adjacency() = default;
  Adjacency(VertexId max_vertices, VertexId present_below);

  ScanChecksum checksum() const;
  /// Sorted (v, w) list of u.
  std::vector<std::pair<VertexId, Weight>> neighbors(VertexId u) const;
};

/// Applies ops with the engine's rules (duplicate insert and absent delete
/// are no-ops, edge ops need a present source, deleting a vertex needs
/// degree 0). All or nothing: throws and leaves `g` untouched on error.
/// Returns the sources whose partition changed.
std::vector<VertexId> apply_batch(Adjacency& g, std::span<const UpdateOp> ops, bool weights);

class SerialStore {
 public:
  SerialStore(VertexId max_vertices, VertexId present_below, bool weights = false);

  /// Appends a committed batch; timestamps must increase.
  void apply(std::span<const UpdateOp> batch, Timestamp t);

  /// Incrementally maintained state after the newest batch.
  const Adjacency& current() const { return cur_; }
  Timestamp last_ts() const { return log_.empty() ? 0 : log_.back().first; }

  /// Rebuilt from scratch: every batch with timestamp <= t.
  Adjacency state_at(Timestamp t) const;

  /// One incremental pass; f(t, state) for each t of `cuts` (ascending).
  void for_each_state(std::span<const Timestamp> cuts,
                      const std::function<void(Timestamp, const Adjacency&)>& f) const;

  const std::vector<std::pair<Timestamp, std::vector<UpdateOp>>>& log() const { return log_; }

 private:
  VertexId max_vertices_;
  VertexId present_below_;
  bool weights_;
  Adjacency cur_;
  std::vector<std::pair<Timestamp, std::vector<UpdateOp>>> log_;
};

// ---------------------------------------------------------------------------
// Histories

struct HistoryHeader {
  VertexId max_vertices = 0;
  std::uint32_t partition_size = 1;
  std::uint32_t tracer_slots = 1;
  VertexId present_below = 0;
  bool weights = false;
};

struct Event {
  enum class Kind { kBegin, kCommit, kEnd, kRegister, kObserve, kUnregister, kChainSample };
  std::uint64_t seq = 0;
  Kind kind = Kind::kBegin;
  std::uint32_t actor = 0;
  Timestamp ts = 0;  // commit ts or reader start ts
  std::vector<UpdateOp> ops;             // kCommit
  std::uint64_t edge_count = 0;          // kObserve
  std::uint64_t checksum = 0;            // kObserve
  std::vector<Timestamp> version_ts;     // kObserve: per partition
  std::uint32_t partition = 0;           // kChainSample
  std::uint32_t length = 0;              // kChainSample
};

const char* kind_name(Event::Kind k);

/// Per-thread event buffer; sequence numbers come from a shared counter so
/// merged logs are totally ordered without locking.
class EventLog {
 public:
  explicit EventLog(std::atomic<std::uint64_t>& seq, std::uint32_t actor) : seq_(&seq), actor_(actor) {}
  Event& add(Event::Kind kind, Timestamp ts = 0);
  std::vector<Event>& events() { return events_; }

 private:
  std::atomic<std::uint64_t>* seq_;
  std::uint32_t actor_;
  std::vector<Event> events_;
};

struct History {
  HistoryHeader header;
  std::vector<Event> events;  // ascending seq

  /// Merges thread logs by sequence number.
  static History merge(HistoryHeader h, std::vector<EventLog>& logs);

  void write_ndjson(std::ostream& os) const;
  /// Throws std::invalid_argument on malformed input.
  static History read_ndjson(std::istream& is);
};

struct Verdict {
  bool ok = true;
  std::string message;
  std::optional<std::uint64_t> seq;  // offending event
  std::uint64_t observations = 0;
  std::uint64_t commits = 0;
};

/// Checks observations against replayed state, commit timestamp density,
/// chain-length samples against k + 1, and per-partition version choice.
Verdict check_history(const History& h);

}  // namespace mvgraph::oracle
