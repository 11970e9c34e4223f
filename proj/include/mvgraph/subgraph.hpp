#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "mvgraph/cart.hpp"
#include "mvgraph/clustered_index.hpp"
#include "mvgraph/core.hpp"

namespace mvgraph {

enum class Storage : std::uint8_t { kClustered, kCart };

struct VertexSlot {
  bool present = false;
  Storage tag = Storage::kClustered;
  std::uint32_t degree = 0;
  ci::Locator loc;  // start of N(u) in the clustered index (kClustered, degree > 0)
  cart::Tree tree;  // kCart only
};

struct UpdateOp {
  enum class Kind : std::uint8_t { kInsertEdge, kDeleteEdge, kInsertVertex, kDeleteVertexLocal };
  Kind kind = Kind::kInsertEdge;
  VertexId u = 0;
  VertexId v = 0;
  Weight w = 0;

  static UpdateOp insert_edge(VertexId u, VertexId v, Weight w = 0) {
    return {Kind::kInsertEdge, u, v, w};
  }
  static UpdateOp delete_edge(VertexId u, VertexId v) { return {Kind::kDeleteEdge, u, v, 0}; }
  static UpdateOp insert_vertex(VertexId u) { return {Kind::kInsertVertex, u, 0, 0}; }
  static UpdateOp delete_vertex_local(VertexId u) { return {Kind::kDeleteVertexLocal, u, 0, 0}; }
};

struct SubgraphStats {
  cart::TreeStats cart;  // summed over the partition's C-ARTs
  ci::Stats ci;
  std::uint64_t cart_vertices = 0;
  std::uint64_t clustered_vertices = 0;
  std::uint64_t edges = 0;
};

class SnapshotRef;

/// Immutable adjacency of one partition at one version.
class SubgraphSnapshot {
 public:
  struct Lookup {
    bool found = false;
    Weight weight = 0;
    explicit operator bool() const { return found; }
  };

  PartitionId partition() const { return partition_; }
  VertexId base() const { return base_; }
  std::uint32_t width() const { return static_cast<std::uint32_t>(slots_.size()); }
  std::uint64_t edge_count() const { return edge_count_; }

  bool owns(VertexId u) const { return u >= base_ && u - base_ < slots_.size(); }
  bool present(VertexId u) const { return owns(u) && slot(u).present; }
  const VertexSlot& slot(VertexId u) const { return slots_[u - base_]; }

  /// Throws VertexNotFound for absent (or foreign) vertices.
  std::uint32_t degree(VertexId u) const { return checked(u).degree; }
  Lookup search(VertexId u, VertexId v) const;

  /// Visits N(u) ascending as f(v, weight).
  template <class F>
  void scan(VertexId u, F&& f) const {
    const VertexSlot& s = checked(u);
    if (s.tag == Storage::kCart) {
      s.tree.scan(f);
    } else if (s.degree > 0) {
      ci::scan_from(ci_leaves_, s.loc, u, f);
    }
  }

  /// Visits every edge of the partition as f(u, v, weight), ascending by (u, v).
  template <class F>
  void scan_all(F&& f) const {
    for (std::uint32_t i = 0; i < slots_.size(); ++i) {
      const VertexSlot& s = slots_[i];
      if (!s.present || s.degree == 0) continue;
      const VertexId u = base_ + i;
      scan(u, [&](VertexId v, Weight w) { f(u, v, w); });
    }
  }

  SubgraphStats stats() const;

  const ci::Tree& clustered() const { return ci_; }

  void retain() const noexcept { refcount_.fetch_add(1, std::memory_order_relaxed); }
  /// Frees the snapshot (and releases its structures) when the count hits 0.
  void release() const noexcept;
  std::uint32_t refcount() const noexcept { return refcount_.load(); }

  /// Version 0 of a partition: `present_below` bounds the present vertices.
  static SnapshotRef make_empty(PartitionId p, const Config& cfg, VertexId present_below);

  struct ApplyResult;
  /// Copy-on-write application of `ops` (all sourced in this partition).
  ApplyResult apply(std::span<const UpdateOp> ops, const Config& cfg) const;

 private:
  SubgraphSnapshot();
  ~SubgraphSnapshot();
  SubgraphSnapshot(const SubgraphSnapshot&) = delete;

  const VertexSlot& checked(VertexId u) const {
    if (!owns(u) || !slots_[u - base_].present) throw VertexNotFound(u);
    return slots_[u - base_];
  }
  void refresh_locators();

  mutable std::atomic<std::uint32_t> refcount_{1};
  PartitionId partition_;
  VertexId base_ = 0;
  std::vector<VertexSlot> slots_;
  ci::Tree ci_;
  std::vector<const ci::Leaf*> ci_leaves_;
  std::uint64_t edge_count_ = 0;
};

/// Owning handle: copy retains, destruction releases.
class SnapshotRef {
 public:
  SnapshotRef() = default;
  /// Adopts one existing reference.
  static SnapshotRef adopt(const SubgraphSnapshot* s) {
    SnapshotRef r;
    r.p_ = s;
    return r;
  }
  SnapshotRef(const SnapshotRef& o) : p_(o.p_) {
    if (p_) p_->retain();
  }
  SnapshotRef(SnapshotRef&& o) noexcept : p_(o.p_) { o.p_ = nullptr; }
  SnapshotRef& operator=(SnapshotRef o) noexcept {
    std::swap(p_, o.p_);
    return *this;
  }
  ~SnapshotRef() {
    if (p_) p_->release();
  }

  /// Gives up ownership without releasing.
  const SubgraphSnapshot* detach() noexcept {
    const SubgraphSnapshot* p = p_;
    p_ = nullptr;
    return p;
  }

  const SubgraphSnapshot* get() const { return p_; }
  const SubgraphSnapshot* operator->() const { return p_; }
  const SubgraphSnapshot& operator*() const { return *p_; }
  explicit operator bool() const { return p_ != nullptr; }

 private:
  const SubgraphSnapshot* p_ = nullptr;
};

struct SubgraphSnapshot::ApplyResult {
  SnapshotRef snapshot;
  bool changed = false;         // false: nothing to publish
  std::uint32_t promotions = 0; // vertices moved into a C-ART
  std::int64_t edge_delta = 0;
};

}  // namespace mvgraph
