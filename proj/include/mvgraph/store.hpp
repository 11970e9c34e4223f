#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "mvgraph/cart.hpp"
#include "mvgraph/core.hpp"
#include "mvgraph/instrument.hpp"
#include "mvgraph/mvcc.hpp"
#include "mvgraph/subgraph.hpp"

namespace mvgraph {

struct StoreOptions {
  // Edges are stored in both directions by the loader; vertex deletion then
  // also removes the reverse entries held by the neighbours' partitions.
  bool mirrored = false;
};

/// Snapshot of the whole graph at one start timestamp. Move-only.
class ReadHandle {
 public:
  ReadHandle() = default;
  ReadHandle(ReadHandle&&) noexcept = default;
  ReadHandle& operator=(ReadHandle&&) noexcept = default;

  bool valid() const { return view_.valid(); }
  Timestamp start_ts() const { return view_.start_ts(); }
  VertexId max_vertices() const { return max_vertices_; }
  bool weights_enabled() const { return weights_; }

  bool present(VertexId u) const;
  /// Throws VertexNotFound when u is absent.
  std::uint32_t degree(VertexId u) const;
  SubgraphSnapshot::Lookup search(VertexId u, VertexId v) const;

  /// Visits N(u) ascending as f(v, weight). Throws VertexNotFound.
  template <class F>
  void scan(VertexId u, F&& f) const {
    ReaderScope scope;
    part(u).scan(u, f);
  }

  /// Every edge ascending by (u, v) as f(u, v, weight).
  template <class F>
  void scan_all(F&& f) const {
    ReaderScope scope;
    for (std::size_t p = 0; p < view_.partitions(); ++p) view_.at(p).scan_all(f);
  }

  /// Ascending N(u1) ∩ N(u2).
  std::vector<VertexId> intersect(VertexId u1, VertexId u2,
                                  cart::IntersectStrategy strategy = cart::IntersectStrategy::kAuto,
                                  cart::IntersectStrategy* used = nullptr) const;

  std::uint64_t edge_count() const;
  /// Order-sensitive checksum of scan_all.
  ScanChecksum checksum() const;

  const SnapshotView& view() const { return view_; }
  const SubgraphSnapshot& partition(PartitionId p) const { return view_.at(p.index); }

  void close() { view_.close(); }

 private:
  friend class GraphStore;
  const SubgraphSnapshot& part(VertexId u) const;

  SnapshotView view_;
  std::uint32_t partition_size_ = 1;
  VertexId max_vertices_ = 0;
  std::uint32_t ratio_threshold_ = 10;
  bool weights_ = false;
};

class GraphStore {
 public:
  explicit GraphStore(const Config& cfg, StoreOptions opts = {});
  GraphStore(const GraphStore&) = delete;
  GraphStore& operator=(const GraphStore&) = delete;

  const Config& config() const { return cfg_; }
  const StoreOptions& options() const { return opts_; }
  std::uint32_t partition_count() const { return engine_.partition_count(); }

  /// One transaction over all ops; returns its commit timestamp. Ops are
  /// applied in order within each partition.
  Timestamp txn_write(std::span<const UpdateOp> ops);
  Timestamp txn_write(std::initializer_list<UpdateOp> ops) {
    return txn_write(std::span(ops.begin(), ops.size()));
  }

  /// Removes u's edges (and their mirrors when mirrored) and clears the
  /// present flag in one transaction; u becomes reusable.
  Timestamp txn_delete_vertex(VertexId u);
  /// Reuses a deleted ID when one is queued, else takes the next fresh one.
  std::pair<VertexId, Timestamp> txn_insert_vertex();

  ReadHandle read_open();

  MvccEngine& engine() { return engine_; }
  const MvccEngine& engine() const { return engine_; }

  /// Structure statistics of the newest versions. Quiescent use only.
  SubgraphStats stats() const;

 private:
  std::vector<PartitionId> partitions_of(std::span<const UpdateOp> ops) const;
  Timestamp run(std::span<const UpdateOp> ops, const std::vector<PartitionId>& parts);

  Config cfg_;
  StoreOptions opts_;
  MvccEngine engine_;

  std::mutex id_mu_;  // writer side only
  std::deque<VertexId> reuse_;
  VertexId next_id_ = 0;
};

}  // namespace mvgraph
