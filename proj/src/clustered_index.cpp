#include "mvgraph/clustered_index.hpp"

#include <algorithm>
#include <cassert>
#include <new>
#include <unordered_map>

#include "mvgraph/block_pool.hpp"
#include "mvgraph/instrument.hpp"

namespace mvgraph::ci {
namespace {

struct Entry {
  Key key;
  Weight weight;
};

struct Child {
  Key low;
  Node* node;
  bool owned;  // reference already held for the node being built
};

Leaf* make_leaf(const Entry* e, std::size_t n, bool weights) {
  assert(n >= 1 && n <= 65535);
  const std::size_t bytes = sizeof(Leaf) + n * sizeof(Key) + (weights ? n * sizeof(Weight) : 0);
  auto* l = new (pool_allocate(bytes)) Leaf;
  l->leaf = true;
  l->has_weights = weights;
  l->count = static_cast<std::uint16_t>(n);
  l->bytes = static_cast<std::uint32_t>(bytes);
  for (std::size_t i = 0; i < n; ++i) l->keys()[i] = e[i].key;
  if (weights)
    for (std::size_t i = 0; i < n; ++i) l->weights()[i] = e[i].weight;
  metrics::add_live(LiveKind::kCiLeaf, 1);
  return l;
}

// Takes over one reference per child: owned children already carry it,
// borrowed ones are retained here.
Inner* make_inner(const Child* c, std::size_t n) {
  assert(n >= 1 && n <= 65535);
  const std::size_t bytes = sizeof(Inner) + n * (sizeof(Key) + sizeof(Node*));
  auto* in = new (pool_allocate(bytes)) Inner;
  in->leaf = false;
  in->count = static_cast<std::uint16_t>(n);
  in->bytes = static_cast<std::uint32_t>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    in->lows()[i] = c[i].low;
    in->children()[i] = c[i].node;
    if (!c[i].owned) retain(c[i].node);
  }
  metrics::add_live(LiveKind::kCiInner, 1);
  return in;
}

void free_node(const Node* n) {
  auto* m = const_cast<Node*>(n);
  const std::size_t bytes = m->bytes;
  const bool leaf = m->leaf;
  m->~Node();
  pool_deallocate(m, bytes);
  metrics::add_live(leaf ? LiveKind::kCiLeaf : LiveKind::kCiInner, -1);
}

const Leaf* as_leaf(const Node* n) { return static_cast<const Leaf*>(n); }
const Inner* as_inner(const Node* n) { return static_cast<const Inner*>(n); }

Key low_of(const Node* n) {
  return n->leaf ? as_leaf(n)->keys()[0] : as_inner(n)->lows()[0];
}

std::vector<Entry> entries_of(const Leaf* l) {
  std::vector<Entry> e(l->count);
  for (std::uint32_t i = 0; i < l->count; ++i) e[i] = {l->keys()[i], l->weight(i)};
  return e;
}

std::vector<Child> children_of(const Inner* in) {
  std::vector<Child> c(in->count);
  for (std::uint32_t i = 0; i < in->count; ++i)
    c[i] = {in->lows()[i], in->children()[i], false};
  return c;
}

// Index of the child whose range holds k.
std::uint32_t route(const Inner* in, Key k) {
  const Key* lows = in->lows();
  const Key* it = std::upper_bound(lows, lows + in->count, k);
  return it == lows ? 0 : static_cast<std::uint32_t>(it - lows - 1);
}

std::uint32_t lower_index(const Leaf* l, Key k) {
  return static_cast<std::uint32_t>(std::lower_bound(l->keys(), l->keys() + l->count, k) -
                                    l->keys());
}

// Replacement nodes for one subtree: one, two after a split, none if emptied.
struct Result {
  Node* a = nullptr;
  Node* b = nullptr;
  bool changed = false;
};

// Splits into one node or two near-equal halves.
template <class T, class Make>
Result pack(const std::vector<T>& items, std::uint32_t max, Make make) {
  Result r;
  r.changed = true;
  if (items.empty()) return r;
  if (items.size() <= max) {
    r.a = make(items.data(), items.size());
    return r;
  }
  const std::size_t half = items.size() / 2;
  r.a = make(items.data(), half);
  r.b = make(items.data() + half, items.size() - half);
  return r;
}

Result insert_rec(const Node* n, Entry e, const Params& p) {
  if (n->leaf) {
    const Leaf* l = as_leaf(n);
    const std::uint32_t i = lower_index(l, e.key);
    if (i < l->count && l->keys()[i] == e.key) return {};
    auto es = entries_of(l);
    es.insert(es.begin() + i, e);
    return pack(es, p.leaf_fanout,
                [&](const Entry* d, std::size_t k) { return make_leaf(d, k, p.weights); });
  }
  const Inner* in = as_inner(n);
  const std::uint32_t idx = route(in, e.key);
  Result sub = insert_rec(in->children()[idx], e, p);
  if (!sub.changed) return {};
  auto cs = children_of(in);
  cs[idx] = {low_of(sub.a), sub.a, true};
  if (sub.b) cs.insert(cs.begin() + idx + 1, Child{low_of(sub.b), sub.b, true});
  return pack(cs, p.inner_fanout, [](const Child* c, std::size_t k) { return make_inner(c, k); });
}

std::uint32_t min_fill(std::uint32_t max) { return (max + 1) / 2; }

// Merges or rebalances an underfull child at `idx` with a neighbour. The
// fresh child at `idx` is owned by `cs`; its own references move to the
// combined nodes and it is released.
void fix_underflow(std::vector<Child>& cs, std::size_t idx, const Params& p) {
  if (cs.size() < 2) return;
  const std::size_t lo = idx > 0 ? idx - 1 : idx;
  const std::size_t hi = lo + 1;
  Node* x = cs[lo].node;
  Node* y = cs[hi].node;
  Result r;
  if (x->leaf) {
    auto es = entries_of(as_leaf(x));
    auto more = entries_of(as_leaf(y));
    es.insert(es.end(), more.begin(), more.end());
    r = pack(es, p.leaf_fanout,
             [&](const Entry* d, std::size_t k) { return make_leaf(d, k, p.weights); });
  } else {
    auto gs = children_of(as_inner(x));
    auto more = children_of(as_inner(y));
    gs.insert(gs.end(), more.begin(), more.end());
    r = pack(gs, p.inner_fanout, [](const Child* c, std::size_t k) { return make_inner(c, k); });
  }
  if (cs[lo].owned) release(x);
  if (cs[hi].owned) release(y);
  cs[lo] = {low_of(r.a), r.a, true};
  if (r.b)
    cs[hi] = {low_of(r.b), r.b, true};
  else
    cs.erase(cs.begin() + static_cast<std::ptrdiff_t>(hi));
}

Result erase_rec(const Node* n, Key k, const Params& p) {
  if (n->leaf) {
    const Leaf* l = as_leaf(n);
    const std::uint32_t i = lower_index(l, k);
    if (i >= l->count || l->keys()[i] != k) return {};
    auto es = entries_of(l);
    es.erase(es.begin() + i);
    return pack(es, p.leaf_fanout,
                [&](const Entry* d, std::size_t m) { return make_leaf(d, m, p.weights); });
  }
  const Inner* in = as_inner(n);
  const std::uint32_t idx = route(in, k);
  Result sub = erase_rec(in->children()[idx], k, p);
  if (!sub.changed) return {};
  auto cs = children_of(in);
  if (sub.a == nullptr) {
    cs.erase(cs.begin() + idx);
  } else {
    cs[idx] = {low_of(sub.a), sub.a, true};
    const std::uint32_t cap = sub.a->leaf ? p.leaf_fanout : p.inner_fanout;
    if (sub.a->count < min_fill(cap)) fix_underflow(cs, idx, p);
  }
  return pack(cs, p.inner_fanout, [](const Child* c, std::size_t m) { return make_inner(c, m); });
}

Node* grow_root(Result r) {
  if (r.b == nullptr) return r.a;
  const Child cs[2] = {{low_of(r.a), r.a, true}, {low_of(r.b), r.b, true}};
  return make_inner(cs, 2);
}

Node* shrink_root(Node* r) {
  while (r != nullptr && !r->leaf && r->count == 1) {
    Node* only = as_inner(r)->children()[0];
    retain(only);
    release(r);
    r = only;
  }
  return r;
}

void collect_leaves(const Node* n, std::vector<const Leaf*>& out) {
  if (n->leaf) {
    out.push_back(as_leaf(n));
    return;
  }
  const Inner* in = as_inner(n);
  for (std::uint32_t i = 0; i < in->count; ++i) collect_leaves(in->children()[i], out);
}

}  // namespace

void retain(const Node* n) noexcept { n->refcount.fetch_add(1, std::memory_order_relaxed); }

void release(const Node* n) noexcept {
  const std::uint32_t prev = n->refcount.fetch_sub(1, std::memory_order_acq_rel);
  assert(prev >= 1 && "release of a node with refcount 0");
  if (prev != 1) return;
  if (!n->leaf) {
    const Inner* in = as_inner(n);
    for (std::uint32_t i = 0; i < in->count; ++i) release(in->children()[i]);
  }
  free_node(n);
}

const Leaf* Tree::lower_leaf(Key k, std::uint32_t& offset) const {
  const Node* n = root_;
  std::optional<Key> next_low;
  while (!n->leaf) {
    const Inner* in = as_inner(n);
    const std::uint32_t idx = route(in, k);
    if (idx + 1 < in->count) next_low = in->lows()[idx + 1];
    n = in->children()[idx];
  }
  const Leaf* l = as_leaf(n);
  offset = lower_index(l, k);
  if (offset < l->count) return l;
  if (!next_low) return nullptr;
  return lower_leaf(*next_low, offset);
}

Lookup Tree::find(VertexId u, VertexId v) const {
  if (root_ == nullptr) return {};
  const Key k = make_key(u, v);
  std::uint32_t off = 0;
  const Leaf* l = lower_leaf(k, off);
  if (l == nullptr || l->keys()[off] != k) return {};
  return {true, l->weight(off)};
}

Tree Tree::insert(VertexId u, VertexId v, Weight w, const Params& p, bool* changed) const {
  const Entry e{make_key(u, v), p.weights ? w : 0};
  if (root_ == nullptr) {
    if (changed) *changed = true;
    return Tree(make_leaf(&e, 1, p.weights), 1);
  }
  Result r = insert_rec(root_, e, p);
  if (changed) *changed = r.changed;
  if (!r.changed) return *this;
  return Tree(grow_root(r), size_ + 1);
}

Tree Tree::erase(VertexId u, VertexId v, const Params& p, bool* changed) const {
  if (root_ == nullptr) {
    if (changed) *changed = false;
    return {};
  }
  Result r = erase_rec(root_, make_key(u, v), p);
  if (changed) *changed = r.changed;
  if (!r.changed) return *this;
  return Tree(shrink_root(grow_root(r)), size_ - 1);
}

Tree Tree::extract(VertexId u, const Params& p,
                   std::vector<std::pair<VertexId, Weight>>& out) const {
  const std::size_t first = out.size();
  scan(u, [&](VertexId v, Weight w) { out.emplace_back(v, w); });
  Tree t = *this;
  for (std::size_t i = first; i < out.size(); ++i) t = t.erase(u, out[i].first, p);
  return t;
}

std::vector<const Leaf*> Tree::leaves() const {
  std::vector<const Leaf*> out;
  if (root_) collect_leaves(root_, out);
  return out;
}

Stats Tree::stats() const {
  Stats st;
  if (root_ == nullptr) return st;
  std::vector<std::pair<const Node*, std::uint32_t>> stack{{root_, 1}};
  while (!stack.empty()) {
    auto [n, level] = stack.back();
    stack.pop_back();
    st.height = std::max(st.height, level);
    st.bytes += n->bytes;
    if (n->leaf) {
      ++st.leaves;
      st.entries += n->count;
      continue;
    }
    ++st.inner;
    const Inner* in = as_inner(n);
    for (std::uint32_t i = 0; i < in->count; ++i) stack.emplace_back(in->children()[i], level + 1);
  }
  return st;
}

namespace debug {
namespace {

// Returns subtree height, or -1 after recording an error.
int check_rec(const Node* n, const Params& p, bool is_root, std::string& err, std::size_t& total,
              std::optional<Key>& prev) {
  if (n->refcount.load() == 0) {
    err = "reachable node with refcount 0";
    return -1;
  }
  const std::uint32_t cap = n->leaf ? p.leaf_fanout : p.inner_fanout;
  if (n->count > cap) {
    err = "node over capacity";
    return -1;
  }
  if (!is_root && n->count < min_fill(cap)) {
    err = "non-root node below minimum occupancy";
    return -1;
  }
  if (is_root && !n->leaf && n->count < 2) {
    err = "inner root with a single child";
    return -1;
  }
  if (n->leaf) {
    const Leaf* l = as_leaf(n);
    if (l->count == 0) {
      err = "empty leaf";
      return -1;
    }
    for (std::uint32_t i = 0; i < l->count; ++i) {
      if (prev && *prev >= l->keys()[i]) {
        err = "keys not strictly ascending";
        return -1;
      }
      prev = l->keys()[i];
    }
    total += l->count;
    return 1;
  }
  const Inner* in = as_inner(n);
  int h = -2;
  for (std::uint32_t i = 0; i < in->count; ++i) {
    const Node* c = in->children()[i];
    if (in->lows()[i] != low_of(c)) {
      err = "inner low key differs from child's first key";
      return -1;
    }
    const int ch = check_rec(c, p, false, err, total, prev);
    if (ch < 0) return -1;
    if (h != -2 && ch != h) {
      err = "leaves at different depths";
      return -1;
    }
    h = ch;
  }
  return h + 1;
}

}  // namespace

std::string check(const Tree& t, const Params& p) {
  if (t.empty()) return t.size() == 0 ? "" : "empty root with nonzero size";
  std::string err;
  std::size_t total = 0;
  std::optional<Key> prev;
  check_rec(t.root(), p, true, err, total, prev);
  if (!err.empty()) return err;
  if (total != t.size()) return "cached size differs from entry count";
  return "";
}

std::vector<NodeRef> reachable(std::span<const Node* const> roots) {
  std::unordered_map<const Node*, std::uint32_t> parents;
  std::vector<const Node*> order, stack;
  auto visit = [&](const Node* n) {
    if (parents[n]++ == 0) {
      order.push_back(n);
      stack.push_back(n);
    }
  };
  for (const Node* r : roots)
    if (r) visit(r);
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n->leaf) continue;
    const Inner* in = as_inner(n);
    for (std::uint32_t i = 0; i < in->count; ++i) visit(in->children()[i]);
  }
  std::vector<NodeRef> out;
  for (const Node* n : order) out.push_back({n, parents[n]});
  return out;
}

}  // namespace debug

}  // namespace mvgraph::ci
