#include "mvgraph/store.hpp"

#include <algorithm>
#include <string>

namespace mvgraph {

namespace {

std::vector<SnapshotRef> version_zero(const Config& cfg) {
  cfg.validate();
  std::vector<SnapshotRef> out;
  const std::uint32_t p = partition_count(cfg);
  out.reserve(p);
  for (std::uint32_t i = 0; i < p; ++i)
    out.push_back(SubgraphSnapshot::make_empty(PartitionId{i}, cfg, cfg.present_at_open()));
  return out;
}

// Applies ops grouped by source partition (order kept within a group).
void stage_all(WriteTxn& t, std::span<const UpdateOp> ops, const Config& cfg) {
  std::vector<UpdateOp> sorted(ops.begin(), ops.end());
  std::stable_sort(sorted.begin(), sorted.end(), [&](const UpdateOp& a, const UpdateOp& b) {
    return a.u / cfg.partition_size < b.u / cfg.partition_size;
  });
  std::size_t i = 0;
  while (i < sorted.size()) {
    const PartitionId p = partition_of(sorted[i].u, cfg);
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].u / cfg.partition_size == p.index) ++j;
    auto r = t.current(p).apply(std::span(sorted).subspan(i, j - i), cfg);
    if (r.changed) t.stage(p, std::move(r.snapshot));
    i = j;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ReadHandle

const SubgraphSnapshot& ReadHandle::part(VertexId u) const {
  if (u >= max_vertices_) throw RangeError("vertex " + std::to_string(u) + " >= max_vertices");
  return view_.at(u / partition_size_);
}

bool ReadHandle::present(VertexId u) const {
  ReaderScope scope;
  return u < max_vertices_ && part(u).present(u);
}

std::uint32_t ReadHandle::degree(VertexId u) const {
  ReaderScope scope;
  return part(u).degree(u);
}

SubgraphSnapshot::Lookup ReadHandle::search(VertexId u, VertexId v) const {
  ReaderScope scope;
  return part(u).search(u, v);
}

std::vector<VertexId> ReadHandle::intersect(VertexId u1, VertexId u2,
                                            cart::IntersectStrategy strategy,
                                            cart::IntersectStrategy* used) const {
  ReaderScope scope;
  const SubgraphSnapshot& s1 = part(u1);
  const SubgraphSnapshot& s2 = part(u2);
  const std::uint32_t d1 = s1.degree(u1), d2 = s2.degree(u2);
  if (s1.slot(u1).tag == Storage::kCart && s2.slot(u2).tag == Storage::kCart)
    return cart::intersect(s1.slot(u1).tree, s2.slot(u2).tree, ratio_threshold_, strategy, used);

  if (strategy == cart::IntersectStrategy::kAuto)
    strategy = cart::choose_strategy(d1, d2, ratio_threshold_);
  if (used) *used = strategy;

  const bool swap = d2 < d1;
  const SubgraphSnapshot& small = swap ? s2 : s1;
  const SubgraphSnapshot& large = swap ? s1 : s2;
  const VertexId us = swap ? u2 : u1, ul = swap ? u1 : u2;
  std::vector<VertexId> out;
  if (strategy == cart::IntersectStrategy::kProbe) {
    small.scan(us, [&](VertexId v, Weight) {
      if (large.search(ul, v)) out.push_back(v);
    });
    return out;
  }
  std::vector<VertexId> a;
  a.reserve(std::min(d1, d2));
  small.scan(us, [&](VertexId v, Weight) { a.push_back(v); });
  std::size_t i = 0;
  large.scan(ul, [&](VertexId v, Weight) {
    while (i < a.size() && a[i] < v) ++i;
    if (i < a.size() && a[i] == v) out.push_back(v);
  });
  return out;
}

std::uint64_t ReadHandle::edge_count() const {
  ReaderScope scope;
  std::uint64_t n = 0;
  for (std::size_t p = 0; p < view_.partitions(); ++p) n += view_.at(p).edge_count();
  return n;
}

ScanChecksum ReadHandle::checksum() const {
  ScanChecksum c;
  scan_all([&](VertexId u, VertexId v, Weight) { c.add(u, v); });
  return c;
}

// ---------------------------------------------------------------------------
// GraphStore

GraphStore::GraphStore(const Config& cfg, StoreOptions opts)
    : cfg_(cfg), opts_(opts), engine_(cfg, version_zero(cfg)), next_id_(cfg.present_at_open()) {}

std::vector<PartitionId> GraphStore::partitions_of(std::span<const UpdateOp> ops) const {
  std::vector<PartitionId> parts;
  parts.reserve(ops.size());
  for (const UpdateOp& op : ops) {
    if (op.u >= cfg_.max_vertices)
      throw RangeError("vertex " + std::to_string(op.u) + " >= max_vertices");
    if ((op.kind == UpdateOp::Kind::kInsertEdge || op.kind == UpdateOp::Kind::kDeleteEdge) &&
        op.v >= cfg_.max_vertices)
      throw RangeError("vertex " + std::to_string(op.v) + " >= max_vertices");
    parts.push_back(partition_of(op.u, cfg_));
  }
  return parts;
}

Timestamp GraphStore::run(std::span<const UpdateOp> ops, const std::vector<PartitionId>& parts) {
  WriteTxn t = engine_.begin(parts);
  stage_all(t, ops, cfg_);
  const Timestamp ts = t.commit();
  t.gc();
  t.end();
  return ts;
}

Timestamp GraphStore::txn_write(std::span<const UpdateOp> ops) {
  return run(ops, partitions_of(ops));
}

Timestamp GraphStore::txn_delete_vertex(VertexId u) {
  if (u >= cfg_.max_vertices) throw RangeError("vertex " + std::to_string(u) + " >= max_vertices");
  const PartitionId pu = partition_of(u, cfg_);
  std::vector<PartitionId> parts{pu};
  while (true) {
    WriteTxn t = engine_.begin(parts);
    const SubgraphSnapshot& cur = t.current(pu);
    if (!cur.present(u)) throw VertexNotFound(u);
    std::vector<VertexId> nbrs;
    cur.scan(u, [&](VertexId v, Weight) { nbrs.push_back(v); });

    std::vector<PartitionId> need{pu};
    if (opts_.mirrored)
      for (VertexId v : nbrs) need.push_back(partition_of(v, cfg_));
    std::sort(need.begin(), need.end());
    need.erase(std::unique(need.begin(), need.end()), need.end());
    if (!std::includes(t.partitions().begin(), t.partitions().end(), need.begin(), need.end())) {
      // Neighbours moved into partitions we do not hold; retry with more locks.
      parts.insert(parts.end(), need.begin(), need.end());
      std::sort(parts.begin(), parts.end());
      parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
      continue;
    }

    std::vector<UpdateOp> ops;
    for (VertexId v : nbrs) {
      ops.push_back(UpdateOp::delete_edge(u, v));
      if (opts_.mirrored && v != u && t.current(partition_of(v, cfg_)).present(v))
        ops.push_back(UpdateOp::delete_edge(v, u));
    }
    ops.push_back(UpdateOp::delete_vertex_local(u));
    stage_all(t, ops, cfg_);
    const Timestamp ts = t.commit();
    t.gc();
    {
      std::lock_guard g(id_mu_);
      reuse_.push_back(u);
    }
    t.end();
    return ts;
  }
}

std::pair<VertexId, Timestamp> GraphStore::txn_insert_vertex() {
  while (true) {
    VertexId u;
    {
      std::lock_guard g(id_mu_);
      if (!reuse_.empty()) {
        u = reuse_.front();
        reuse_.pop_front();
      } else if (next_id_ < cfg_.max_vertices) {
        u = next_id_++;
      } else {
        throw CapacityError("no free vertex ID below max_vertices");
      }
    }
    const PartitionId p = partition_of(u, cfg_);
    WriteTxn t = engine_.begin({p});
    // Made present by an explicit InsertVertex in the meantime.
    if (t.current(p).present(u)) continue;
    const UpdateOp op = UpdateOp::insert_vertex(u);
    t.stage(p, t.current(p).apply(std::span(&op, 1), cfg_).snapshot);
    const Timestamp ts = t.commit();
    t.gc();
    return {u, ts};
  }
}

ReadHandle GraphStore::read_open() {
  ReadHandle h;
  h.view_ = engine_.open_view();
  h.partition_size_ = cfg_.partition_size;
  h.max_vertices_ = cfg_.max_vertices;
  h.ratio_threshold_ = cfg_.intersect_ratio_threshold;
  h.weights_ = cfg_.weights_enabled;
  return h;
}

SubgraphStats GraphStore::stats() const {
  SubgraphStats total;
  for (std::uint32_t i = 0; i < engine_.partition_count(); ++i) {
    const SubgraphStats s = engine_.head(PartitionId{i})->stats();
    total.cart.merge(s.cart);
    total.ci.entries += s.ci.entries;
    total.ci.leaves += s.ci.leaves;
    total.ci.inner += s.ci.inner;
    total.ci.bytes += s.ci.bytes;
    total.ci.height = std::max(total.ci.height, s.ci.height);
    total.cart_vertices += s.cart_vertices;
    total.clustered_vertices += s.clustered_vertices;
    total.edges += s.edges;
  }
  return total;
}

}  // namespace mvgraph
