#include "mvgraph/subgraph.hpp"

#include <algorithm>
#include <string>

#include "mvgraph/instrument.hpp"

namespace mvgraph {

SubgraphSnapshot::SubgraphSnapshot() { metrics::add_live(LiveKind::kSnapshot, 1); }
SubgraphSnapshot::~SubgraphSnapshot() { metrics::add_live(LiveKind::kSnapshot, -1); }

void SubgraphSnapshot::release() const noexcept {
  if (refcount_.fetch_sub(1, std::memory_order_acq_rel) == 1) delete this;
}

SnapshotRef SubgraphSnapshot::make_empty(PartitionId p, const Config& cfg,
                                         VertexId present_below) {
  auto* s = new SubgraphSnapshot;
  s->partition_ = p;
  s->base_ = partition_base(p, cfg);
  const std::uint32_t width = std::min(cfg.partition_size, cfg.max_vertices - s->base_);
  s->slots_.resize(width);
  for (std::uint32_t i = 0; i < width; ++i) s->slots_[i].present = s->base_ + i < present_below;
  return SnapshotRef::adopt(s);
}

SubgraphSnapshot::Lookup SubgraphSnapshot::search(VertexId u, VertexId v) const {
  const VertexSlot& s = checked(u);
  if (s.tag == Storage::kCart) {
    const auto r = s.tree.find(v);
    return {r.found, r.weight};
  }
  if (s.degree == 0) return {};
  // Binary search inside the run that starts at the locator.
  std::uint32_t li = s.loc.leaf, off = s.loc.offset;
  const ci::Key k = ci::make_key(u, v);
  while (li < ci_leaves_.size()) {
    const ci::Leaf* l = ci_leaves_[li];
    const ci::Key* keys = l->keys();
    if (keys[l->count - 1] >= k) {
      const ci::Key* it = std::lower_bound(keys + off, keys + l->count, k);
      if (it != keys + l->count && *it == k)
        return {true, l->weight(static_cast<std::uint32_t>(it - keys))};
      return {};
    }
    if (ci::key_src(keys[l->count - 1]) != u) return {};
    ++li;
    off = 0;
  }
  return {};
}

void SubgraphSnapshot::refresh_locators() {
  ci_leaves_ = ci_.leaves();
  ci::for_each_run(ci_leaves_, [&](VertexId u, ci::Locator loc) {
    if (owns(u)) slots_[u - base_].loc = loc;
  });
}

SubgraphSnapshot::ApplyResult SubgraphSnapshot::apply(std::span<const UpdateOp> ops,
                                                      const Config& cfg) const {
  ApplyResult res;
  if (ops.empty()) {
    retain();
    res.snapshot = SnapshotRef::adopt(this);
    return res;
  }

  auto* next = new SubgraphSnapshot;
  SnapshotRef guard = SnapshotRef::adopt(next);
  next->partition_ = partition_;
  next->base_ = base_;
  next->slots_ = slots_;
  next->ci_ = ci_;
  next->edge_count_ = edge_count_;

  const cart::Params cp = cart::Params::from(cfg);
  const ci::Params ip = ci::Params::from(cfg);
  bool changed = false;
  bool ci_changed = false;
  std::vector<std::pair<VertexId, Weight>> moved;

  for (const UpdateOp& op : ops) {
    if (!owns(op.u))
      throw ProtocolError("update for vertex " + std::to_string(op.u) + " outside partition " +
                          std::to_string(partition_.index));
    VertexSlot& s = next->slots_[op.u - base_];
    switch (op.kind) {
      case UpdateOp::Kind::kInsertEdge: {
        if (op.v >= cfg.max_vertices)
          throw RangeError("vertex " + std::to_string(op.v) + " >= max_vertices");
        if (!s.present) throw VertexNotFound(op.u);
        bool ch = false;
        const Weight w = cfg.weights_enabled ? op.w : 0;
        if (s.tag == Storage::kCart) {
          s.tree = s.tree.insert(op.v, w, cp, &ch);
        } else {
          next->ci_ = next->ci_.insert(op.u, op.v, w, ip, &ch);
          ci_changed |= ch;
        }
        if (!ch) break;
        changed = true;
        ++s.degree;
        ++next->edge_count_;
        ++res.edge_delta;
        if (s.tag == Storage::kClustered && s.degree > cfg.promote_threshold) {
          moved.clear();
          next->ci_ = next->ci_.extract(op.u, ip, moved);
          std::vector<VertexId> keys(moved.size());
          std::vector<Weight> weights;
          for (std::size_t i = 0; i < moved.size(); ++i) keys[i] = moved[i].first;
          if (cfg.weights_enabled) {
            weights.resize(moved.size());
            for (std::size_t i = 0; i < moved.size(); ++i) weights[i] = moved[i].second;
          }
          s.tree = cart::Tree::build(keys, weights, cp);
          s.tag = Storage::kCart;
          s.loc = {};
          ++res.promotions;
        }
        break;
      }
      case UpdateOp::Kind::kDeleteEdge: {
        if (!s.present) throw VertexNotFound(op.u);
        bool ch = false;
        if (s.tag == Storage::kCart) {
          s.tree = s.tree.erase(op.v, cp, &ch);
        } else {
          next->ci_ = next->ci_.erase(op.u, op.v, ip, &ch);
          ci_changed |= ch;
        }
        if (!ch) break;
        changed = true;
        --s.degree;
        --next->edge_count_;
        --res.edge_delta;
        break;
      }
      case UpdateOp::Kind::kInsertVertex:
        if (!s.present) {
          s.present = true;
          changed = true;
        }
        break;
      case UpdateOp::Kind::kDeleteVertexLocal:
        if (!s.present) break;
        if (s.degree != 0)
          throw ProtocolError("vertex " + std::to_string(op.u) + " still has " +
                              std::to_string(s.degree) + " edges");
        s.present = false;
        s.tree = cart::Tree{};
        changed = true;
        break;
    }
  }

  if (!changed) {
    retain();
    res.snapshot = SnapshotRef::adopt(this);
    return res;
  }
  if (ci_changed || res.promotions > 0)
    next->refresh_locators();
  else
    next->ci_leaves_ = ci_leaves_;
  res.changed = true;
  res.snapshot = std::move(guard);
  return res;
}

SubgraphStats SubgraphSnapshot::stats() const {
  SubgraphStats st;
  for (const VertexSlot& s : slots_) {
    if (s.tag == Storage::kCart) {
      ++st.cart_vertices;
      st.cart.merge(s.tree.stats());
    } else if (s.present) {
      ++st.clustered_vertices;
    }
  }
  st.ci = ci_.stats();
  st.edges = edge_count_;
  return st;
}

}  // namespace mvgraph
