#include "mvgraph/cart.hpp"

#include <algorithm>
#include <new>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "mvgraph/block_pool.hpp"
#include "mvgraph/instrument.hpp"

namespace mvgraph::cart {
namespace {

struct Entry {
  VertexId key;
  Weight weight;
};

using Entries = std::vector<Entry>;

// ---------------------------------------------------------------------------
// Allocation

Leaf* make_leaf(const Entry* e, std::size_t n, bool weights) {
  assert(n >= 1);
  const unsigned lcp_len = std::min(common_prefix_len(e[0].key, e[n - 1].key), 3u);
  const std::size_t sbytes = Leaf::suffix_area_bytes(static_cast<std::uint32_t>(n), lcp_len);
  const std::size_t bytes = sizeof(Leaf) + sbytes + (weights ? sizeof(Weight) * n : 0);
  auto* leaf = new (pool_allocate(bytes)) Leaf;
  leaf->kind = NodeKind::kLeaf;
  leaf->lcp_len = static_cast<std::uint8_t>(lcp_len);
  leaf->bitmap = lcp_len == 3;
  leaf->has_weights = weights;
  leaf->lcp = e[0].key & prefix_mask(lcp_len);
  leaf->count = static_cast<std::uint32_t>(n);
  leaf->bytes = static_cast<std::uint32_t>(bytes);

  unsigned char* p = leaf->payload();
  std::memset(p, 0, sbytes);
  const VertexId smask = ~prefix_mask(lcp_len);
  if (leaf->bitmap) {
    auto* bits = reinterpret_cast<std::uint64_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t s = e[i].key & 0xffu;
      bits[s >> 6] |= std::uint64_t{1} << (s & 63);
    }
  } else {
    const unsigned w = leaf->suffix_width();
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t s = e[i].key & smask;
      switch (w) {
        case 1:
          p[i] = static_cast<unsigned char>(s);
          break;
        case 2: {
          const auto x = static_cast<std::uint16_t>(s);
          std::memcpy(p + 2 * i, &x, 2);
          break;
        }
        case 3:
          p[3 * i] = static_cast<unsigned char>(s);
          p[3 * i + 1] = static_cast<unsigned char>(s >> 8);
          p[3 * i + 2] = static_cast<unsigned char>(s >> 16);
          break;
        default:
          std::memcpy(p + 4 * i, &s, 4);
      }
    }
  }
  if (weights) {
    auto* wp = reinterpret_cast<Weight*>(p + sbytes);
    for (std::size_t i = 0; i < n; ++i) wp[i] = e[i].weight;
  }
  metrics::add_live(LiveKind::kCartLeaf, 1);
  return leaf;
}

Leaf* make_leaf(const Entries& e, bool weights) { return make_leaf(e.data(), e.size(), weights); }

std::size_t inner_bytes(NodeKind k) {
  switch (k) {
    case NodeKind::kN4:
      return sizeof(N4);
    case NodeKind::kN16:
      return sizeof(N16);
    case NodeKind::kN48:
      return sizeof(N48);
    default:
      return sizeof(N256);
  }
}

Inner* alloc_inner(NodeKind k) {
  void* mem = pool_allocate(inner_bytes(k));
  Inner* n;
  switch (k) {
    case NodeKind::kN4:
      n = new (mem) N4;
      break;
    case NodeKind::kN16:
      n = new (mem) N16;
      break;
    case NodeKind::kN48: {
      auto* m = new (mem) N48;
      std::memset(m->index, 0, sizeof(m->index));
      n = m;
      break;
    }
    default: {
      auto* m = new (mem) N256;
      std::memset(m->presence, 0, sizeof(m->presence));
      std::memset(m->child, 0, sizeof(m->child));
      n = m;
    }
  }
  n->kind = k;
  metrics::add_live(LiveKind::kCartInner, 1);
  return n;
}

void free_node(const Node* n) {
  auto* m = const_cast<Node*>(n);
  if (m->is_leaf()) {
    auto* leaf = static_cast<Leaf*>(m);
    const std::size_t bytes = leaf->bytes;
    leaf->~Leaf();
    pool_deallocate(leaf, bytes);
    metrics::add_live(LiveKind::kCartLeaf, -1);
    return;
  }
  const std::size_t bytes = inner_bytes(m->kind);
  static_cast<Inner*>(m)->~Inner();
  pool_deallocate(m, bytes);
  metrics::add_live(LiveKind::kCartInner, -1);
}

const Leaf* as_leaf(const Node* n) { return static_cast<const Leaf*>(n); }
const Inner* as_inner(const Node* n) { return static_cast<const Inner*>(n); }

void decode(const Leaf* leaf, Entries& out) {
  out.clear();
  out.reserve(leaf->count + 1);
  auto push = [&](VertexId v, Weight w) { out.push_back({v, w}); };
  scan_leaf(leaf, push);
}

// ---------------------------------------------------------------------------
// Slot lists: the mutable working form of one inner node during a rebuild.
// `owned` slots carry a reference created by this rebuild; the others are
// borrowed from the source node and get retained only if they survive.

struct Slot {
  std::uint8_t key;
  bool owned;
  Node* child;
};

struct SlotList {
  std::array<Slot, 256> s;
  int n = 0;

  Slot& operator[](int i) { return s[static_cast<std::size_t>(i)]; }

  int lower_bound(std::uint8_t k) const {
    int lo = 0, hi = n;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (s[static_cast<std::size_t>(mid)].key < k)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }
  void insert_at(int i, Slot x) {
    std::memmove(&s[static_cast<std::size_t>(i) + 1], &s[static_cast<std::size_t>(i)],
                 sizeof(Slot) * static_cast<std::size_t>(n - i));
    s[static_cast<std::size_t>(i)] = x;
    ++n;
  }
  // Removes [lo, hi].
  void erase_range(int lo, int hi) {
    std::memmove(&s[static_cast<std::size_t>(lo)], &s[static_cast<std::size_t>(hi) + 1],
                 sizeof(Slot) * static_cast<std::size_t>(n - hi - 1));
    n -= hi - lo + 1;
  }
  int run_begin(int i) const {
    while (i > 0 && s[static_cast<std::size_t>(i) - 1].child == s[static_cast<std::size_t>(i)].child) --i;
    return i;
  }
  int run_end(int i) const {
    while (i + 1 < n && s[static_cast<std::size_t>(i) + 1].child == s[static_cast<std::size_t>(i)].child) ++i;
    return i;
  }
  void assign(int lo, int hi, Node* child) {
    for (int i = lo; i <= hi; ++i) {
      s[static_cast<std::size_t>(i)].child = child;
      s[static_cast<std::size_t>(i)].owned = true;
    }
  }
};

void collect(const Inner* n, SlotList& out) {
  out.n = 0;
  for (int pos = first_pos(n); pos >= 0; pos = next_pos(n, pos)) {
    out.s[static_cast<std::size_t>(out.n++)] = {key_at(n, pos), false,
                                               const_cast<Node*>(child_at(n, pos))};
  }
}

void drop(const Slot& s) {
  if (s.owned) release(s.child);
}

// Replaces the adjacent leaf runs starting at `a` and `b` (a < b) with one
// merged leaf.
void merge_runs(SlotList& s, int a, int b, const Params& p) {
  const int a_end = s.run_end(a);
  const int b_end = s.run_end(b);
  Entries left, right;
  decode(as_leaf(s[a].child), left);
  decode(as_leaf(s[b].child), right);
  left.insert(left.end(), right.begin(), right.end());
  Leaf* merged = make_leaf(left, p.weights);
  drop(s[a]);
  drop(s[b]);
  s.assign(a, b_end, merged);
  (void)a_end;
}

// Merges neighbouring leaves that are both under half full and fit together.
void normalize(SlotList& s, const Params& p) {
  const std::uint32_t half = p.leaf_capacity / 2;
  int i = 0;
  while (i < s.n) {
    const int ie = s.run_end(i);
    const Node* c = s[i].child;
    if (c->is_leaf() && as_leaf(c)->count < half && ie + 1 < s.n) {
      const Node* d = s[ie + 1].child;
      if (d->is_leaf() && as_leaf(d)->count < half &&
          as_leaf(c)->count + as_leaf(d)->count <= p.leaf_capacity) {
        merge_runs(s, i, ie + 1, p);
        continue;
      }
    }
    i = ie + 1;
  }
}

NodeKind kind_for(int slots) {
  if (slots <= 4) return NodeKind::kN4;
  if (slots <= 16) return NodeKind::kN16;
  if (slots <= 48) return NodeKind::kN48;
  return NodeKind::kN256;
}

// Materializes a slot list as a node. Returns an owned reference, nullptr for
// no slots, or the sole child when every slot points at the same node.
Node* build_inner(unsigned depth, VertexId prefix, SlotList& s, const Params& p) {
  normalize(s, p);
  if (s.n == 0) return nullptr;
  if (s[0].child == s[s.n - 1].child) {
    Node* c = s[0].child;
    if (!s[0].owned) retain(c);
    return c;
  }
  for (int i = 0; i < s.n; i = s.run_end(i) + 1) {
    if (!s[i].owned) retain(s[i].child);
  }
  Inner* n = alloc_inner(kind_for(s.n));
  n->depth = static_cast<std::uint8_t>(depth);
  n->prefix = prefix & prefix_mask(depth);
  n->count = static_cast<std::uint16_t>(s.n);
  switch (n->kind) {
    case NodeKind::kN4: {
      auto* m = static_cast<N4*>(n);
      for (int i = 0; i < s.n; ++i) {
        m->keys[i] = s[i].key;
        m->child[i] = s[i].child;
      }
      break;
    }
    case NodeKind::kN16: {
      auto* m = static_cast<N16*>(n);
      for (int i = 0; i < s.n; ++i) {
        m->keys[i] = s[i].key;
        m->child[i] = s[i].child;
      }
      break;
    }
    case NodeKind::kN48: {
      auto* m = static_cast<N48*>(n);
      for (int i = 0; i < s.n; ++i) {
        m->keys[i] = s[i].key;
        m->child[i] = s[i].child;
        m->index[s[i].key] = static_cast<std::uint8_t>(i + 1);
      }
      break;
    }
    default: {
      auto* m = static_cast<N256*>(n);
      for (int i = 0; i < s.n; ++i) {
        m->child[s[i].key] = s[i].child;
        m->presence[s[i].key >> 6] |= std::uint64_t{1} << (s[i].key & 63);
      }
    }
  }
  return n;
}

// Split offset for a full leaf's entries grouped by key byte `d`: the first
// group starting at offset >= B/2, else the last group start. 0 means all
// entries share one group.
std::size_t split_offset(const Entries& e, unsigned d, const Params& p) {
  const std::size_t half = p.leaf_capacity / 2;
  std::size_t fallback = 0;
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (key_byte(e[i].key, d) != key_byte(e[i - 1].key, d)) {
      if (i >= half) return i;
      fallback = i;
    }
  }
  return fallback;
}

// New inner node over `e` (>= 2 distinct keys) whose prefix is their LCP,
// with the entries split into two leaves.
Node* split_to_node(const Entries& e, const Params& p) {
  const unsigned depth = common_prefix_len(e.front().key, e.back().key);
  assert(depth < 4);
  const std::size_t cut = split_offset(e, depth, p);
  assert(cut > 0);
  Leaf* left = make_leaf(e.data(), cut, p.weights);
  Leaf* right = make_leaf(e.data() + cut, e.size() - cut, p.weights);
  const std::uint8_t split_key = key_byte(e[cut].key, depth);
  SlotList s;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const std::uint8_t k = key_byte(e[i].key, depth);
    if (s.n > 0 && s[s.n - 1].key == k) continue;
    s[s.n++] = {k, true, k < split_key ? static_cast<Node*>(left) : right};
  }
  return build_inner(depth, e.front().key, s, p);
}

// Handles a full leaf referenced by slots [lo, hi] of a node at `depth`.
// Case 2: the entries span several key groups, so the leaf splits at a group
// boundary. Case 3: one group only, so a new inner node with the entries' LCP
// as prefix takes over that key.
Node* restructure_full_leaf(unsigned depth, VertexId prefix, SlotList& s, int lo, int hi,
                            const Params& p) {
  Entries e;
  decode(as_leaf(s[lo].child), e);
  const std::size_t cut = split_offset(e, depth, p);
  if (cut > 0) {
    Leaf* left = make_leaf(e.data(), cut, p.weights);
    Leaf* right = make_leaf(e.data() + cut, e.size() - cut, p.weights);
    const std::uint8_t split_key = key_byte(e[cut].key, depth);
    for (int i = lo; i <= hi; ++i) {
      s[i].child = s[i].key < split_key ? static_cast<Node*>(left) : right;
      s[i].owned = true;
    }
  } else {
    const std::uint8_t group = key_byte(e.front().key, depth);
    Node* sub = split_to_node(e, p);
    int keep = lo;
    while (s[keep].key != group) ++keep;
    if (keep < hi) s.erase_range(keep + 1, hi);
    if (keep > lo) s.erase_range(lo, keep - 1);
    s[lo] = {group, true, sub};
  }
  return build_inner(depth, prefix, s, p);
}

Leaf* leaf_with(const Leaf* leaf, Entry e, const Params& p) {
  Entries es;
  decode(leaf, es);
  auto it = std::lower_bound(es.begin(), es.end(), e.key,
                             [](const Entry& a, VertexId k) { return a.key < k; });
  es.insert(it, e);
  return make_leaf(es, p.weights);
}

Node* insert_node(const Node* n, Entry e, const Params& p, bool& changed);

Node* insert_inner(const Inner* n, Entry e, const Params& p, bool& changed) {
  const unsigned m = common_prefix_len(e.key, n->prefix);
  if (m < n->depth) {
    // Path-compressed prefix diverges: new node at the divergence byte.
    changed = true;
    SlotList s;
    Slot old{key_byte(n->prefix, m), false, const_cast<Inner*>(n)};
    Slot fresh{key_byte(e.key, m), true, make_leaf(&e, 1, p.weights)};
    if (old.key < fresh.key) {
      s[0] = old;
      s[1] = fresh;
    } else {
      s[0] = fresh;
      s[1] = old;
    }
    s.n = 2;
    return build_inner(m, e.key, s, p);
  }

  const std::uint8_t k = key_byte(e.key, n->depth);
  SlotList s;
  collect(n, s);
  int idx = s.lower_bound(k);
  bool found = idx < s.n && s[idx].key == k;
  if (!found && idx > 0 && idx < s.n && s[idx - 1].child == s[idx].child) {
    // k sits inside a leaf's key range: reference that leaf from k too.
    s.insert_at(idx, {k, false, s[idx].child});
    found = true;
  }

  if (found) {
    Node* c = s[idx].child;
    if (!c->is_leaf()) {
      Node* nc = insert_inner(as_inner(c), e, p, changed);
      if (!changed) {
        release(nc);
        retain(n);
        return const_cast<Inner*>(n);
      }
      s[idx] = {k, true, nc};
      return build_inner(n->depth, n->prefix, s, p);
    }
    const Leaf* leaf = as_leaf(c);
    if (leaf_find(leaf, e.key)) {
      changed = false;
      retain(n);
      return const_cast<Inner*>(n);
    }
    changed = true;
    const int lo = s.run_begin(idx);
    const int hi = s.run_end(idx);
    if (leaf->count < p.leaf_capacity) {
      s.assign(lo, hi, leaf_with(leaf, e, p));
      return build_inner(n->depth, n->prefix, s, p);
    }
    Node* reshaped = restructure_full_leaf(n->depth, n->prefix, s, lo, hi, p);
    Node* out = insert_node(reshaped, e, p, changed);
    release(reshaped);
    changed = true;
    return out;
  }

  // No child for k: join a neighbouring leaf with room, else a fresh leaf.
  changed = true;
  auto has_room = [&](int i) {
    return i >= 0 && i < s.n && s[i].child->is_leaf() &&
           as_leaf(s[i].child)->count < p.leaf_capacity;
  };
  if (has_room(idx - 1) || has_room(idx)) {
    const int j = has_room(idx - 1) ? idx - 1 : idx;
    Leaf* nl = leaf_with(as_leaf(s[j].child), e, p);
    s.assign(s.run_begin(j), s.run_end(j), nl);
    s.insert_at(idx, {k, true, nl});
  } else {
    s.insert_at(idx, {k, true, make_leaf(&e, 1, p.weights)});
  }
  return build_inner(n->depth, n->prefix, s, p);
}

Node* insert_node(const Node* n, Entry e, const Params& p, bool& changed) {
  if (!n->is_leaf()) return insert_inner(as_inner(n), e, p, changed);
  const Leaf* leaf = as_leaf(n);
  if (leaf_find(leaf, e.key)) {
    changed = false;
    retain(n);
    return const_cast<Node*>(n);
  }
  changed = true;
  if (leaf->count < p.leaf_capacity) return leaf_with(leaf, e, p);
  // A root leaf is associated with a single key: Case 3.
  Entries es;
  decode(leaf, es);
  Node* sub = split_to_node(es, p);
  Node* out = insert_node(sub, e, p, changed);
  release(sub);
  changed = true;
  return out;
}

Node* erase_node(const Node* n, VertexId v, const Params& p, bool& changed) {
  if (n->is_leaf()) {
    const Leaf* leaf = as_leaf(n);
    if (!leaf_find(leaf, v)) {
      changed = false;
      retain(n);
      return const_cast<Node*>(n);
    }
    changed = true;
    if (leaf->count == 1) return nullptr;
    Entries es;
    decode(leaf, es);
    std::erase_if(es, [v](const Entry& x) { return x.key == v; });
    return make_leaf(es, p.weights);
  }

  const Inner* in = as_inner(n);
  auto unchanged = [&]() {
    changed = false;
    retain(n);
    return const_cast<Node*>(n);
  };
  if (((v ^ in->prefix) & prefix_mask(in->depth)) != 0) return unchanged();
  const std::uint8_t k = key_byte(v, in->depth);
  SlotList s;
  collect(in, s);
  const int idx = s.lower_bound(k);
  if (idx >= s.n || s[idx].key != k) return unchanged();

  Node* c = s[idx].child;
  if (!c->is_leaf()) {
    Node* nc = erase_node(c, v, p, changed);
    if (!changed) {
      release(nc);
      return unchanged();
    }
    if (nc == nullptr)
      s.erase_range(idx, idx);
    else
      s[idx] = {k, true, nc};
    return build_inner(in->depth, in->prefix, s, p);
  }

  const Leaf* leaf = as_leaf(c);
  if (!leaf_find(leaf, v)) return unchanged();
  changed = true;
  const int lo = s.run_begin(idx);
  const int hi = s.run_end(idx);
  if (leaf->count == 1) {
    s.erase_range(lo, hi);
    return build_inner(in->depth, in->prefix, s, p);
  }
  Entries es;
  decode(leaf, es);
  std::erase_if(es, [v](const Entry& x) { return x.key == v; });
  Leaf* nl = make_leaf(es, p.weights);
  s.assign(lo, hi, nl);
  if (nl->count < p.leaf_capacity / 2) {
    // Underfull: merge with an adjacent sibling leaf when both fit.
    auto fits = [&](int j) {
      return j >= 0 && j < s.n && s[j].child->is_leaf() &&
             as_leaf(s[j].child)->count + nl->count <= p.leaf_capacity;
    };
    if (fits(lo - 1))
      merge_runs(s, s.run_begin(lo - 1), lo, p);
    else if (fits(hi + 1))
      merge_runs(s, lo, hi + 1, p);
  }
  return build_inner(in->depth, in->prefix, s, p);
}

// Bulk construction: groups that fit are packed greedily into full leaves.
Node* bulk(const Entry* e, std::size_t n, const Params& p) {
  if (n <= p.leaf_capacity) return make_leaf(e, n, p.weights);
  const unsigned depth = common_prefix_len(e[0].key, e[n - 1].key);
  SlotList s;
  std::size_t acc_begin = 0, acc_end = 0;
  int acc_first_slot = 0;
  auto flush = [&]() {
    if (acc_end == acc_begin) return;
    Leaf* leaf = make_leaf(e + acc_begin, acc_end - acc_begin, p.weights);
    for (int i = acc_first_slot; i < s.n; ++i) s[i].child = leaf;
    acc_begin = acc_end;
  };
  std::size_t i = 0;
  while (i < n) {
    const std::uint8_t k = key_byte(e[i].key, depth);
    std::size_t j = i + 1;
    while (j < n && key_byte(e[j].key, depth) == k) ++j;
    const std::size_t size = j - i;
    if (size > p.leaf_capacity) {
      flush();
      s[s.n++] = {k, true, bulk(e + i, size, p)};
      acc_begin = acc_end = j;
      acc_first_slot = s.n;
    } else {
      if ((acc_end - acc_begin) + size > p.leaf_capacity) {
        flush();
        acc_first_slot = s.n;
      }
      s[s.n++] = {k, true, nullptr};
      acc_end = j;
    }
    i = j;
  }
  flush();
  return build_inner(depth, e[0].key, s, p);
}

void stats_rec(const Node* n, TreeStats& st, std::uint32_t level) {
  st.height = std::max(st.height, level + 1);
  if (n->is_leaf()) {
    const Leaf* l = as_leaf(n);
    ++st.leaves;
    st.entries += l->count;
    st.bytes += l->bytes;
    if (l->bitmap) ++st.bitmap_leaves;
    return;
  }
  const Inner* in = as_inner(n);
  st.inner[static_cast<int>(in->kind) - 1]++;
  st.bytes += inner_bytes(in->kind);
  const Node* last = nullptr;
  for (int pos = first_pos(in); pos >= 0; pos = next_pos(in, pos)) {
    const Node* c = child_at(in, pos);
    if (c != last) stats_rec(c, st, level + 1);
    last = c;
  }
}

int next_set_bit(const std::uint64_t* words, int from) {
  if (from >= 256) return -1;
  int w = from >> 6;
  std::uint64_t x = words[w] & (~std::uint64_t{0} << (from & 63));
  while (true) {
    if (x != 0) return w * 64 + std::countr_zero(x);
    if (++w == 4) return -1;
    x = words[w];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Inner node navigation

int first_pos(const Inner* n) {
  if (n->kind == NodeKind::kN256) return next_set_bit(static_cast<const N256*>(n)->presence, 0);
  return n->count > 0 ? 0 : -1;
}

int next_pos(const Inner* n, int pos) {
  if (n->kind == NodeKind::kN256)
    return next_set_bit(static_cast<const N256*>(n)->presence, pos + 1);
  return pos + 1 < n->count ? pos + 1 : -1;
}

std::uint8_t key_at(const Inner* n, int pos) {
  switch (n->kind) {
    case NodeKind::kN4:
      return static_cast<const N4*>(n)->keys[pos];
    case NodeKind::kN16:
      return static_cast<const N16*>(n)->keys[pos];
    case NodeKind::kN48:
      return static_cast<const N48*>(n)->keys[pos];
    default:
      return static_cast<std::uint8_t>(pos);
  }
}

const Node* child_at(const Inner* n, int pos) {
  switch (n->kind) {
    case NodeKind::kN4:
      return static_cast<const N4*>(n)->child[pos];
    case NodeKind::kN16:
      return static_cast<const N16*>(n)->child[pos];
    case NodeKind::kN48:
      return static_cast<const N48*>(n)->child[pos];
    default:
      return static_cast<const N256*>(n)->child[pos];
  }
}

const Node* find_child(const Inner* n, std::uint8_t key) {
  switch (n->kind) {
    case NodeKind::kN4: {
      const auto* m = static_cast<const N4*>(n);
      for (int i = 0; i < m->count; ++i)
        if (m->keys[i] == key) return m->child[i];
      return nullptr;
    }
    case NodeKind::kN16: {
      const auto* m = static_cast<const N16*>(n);
      for (int i = 0; i < m->count; ++i)
        if (m->keys[i] == key) return m->child[i];
      return nullptr;
    }
    case NodeKind::kN48: {
      const auto* m = static_cast<const N48*>(n);
      const int slot = m->index[key];
      return slot == 0 ? nullptr : m->child[slot - 1];
    }
    default:
      return static_cast<const N256*>(n)->child[key];
  }
}

// ---------------------------------------------------------------------------
// Lookup

namespace {

template <unsigned W>
std::uint32_t load_suffix(const unsigned char* p, std::uint32_t i) {
  if constexpr (W == 1) {
    return p[i];
  } else if constexpr (W == 2) {
    std::uint16_t x;
    std::memcpy(&x, p + 2 * i, 2);
    return x;
  } else if constexpr (W == 3) {
    const unsigned char* q = p + 3 * i;
    return std::uint32_t{q[0]} | (std::uint32_t{q[1]} << 8) | (std::uint32_t{q[2]} << 16);
  } else {
    std::uint32_t x;
    std::memcpy(&x, p + 4 * i, 4);
    return x;
  }
}

template <unsigned W>
std::int64_t search_suffix(const unsigned char* p, std::uint32_t count, std::uint32_t s) {
  std::uint32_t lo = 0, hi = count;
  while (lo < hi) {
    const std::uint32_t mid = (lo + hi) / 2;
    const std::uint32_t x = load_suffix<W>(p, mid);
    if (x < s)
      lo = mid + 1;
    else if (x > s)
      hi = mid;
    else
      return mid;
  }
  return -1;
}

}  // namespace

Lookup leaf_find(const Leaf* leaf, VertexId v) {
  if (((v ^ leaf->lcp) & prefix_mask(leaf->lcp_len)) != 0) return {};
  const std::uint32_t s = v & ~prefix_mask(leaf->lcp_len);
  if (leaf->bitmap) {
    const std::uint64_t* bits = leaf->bits();
    const std::uint32_t word = s >> 6, bit = s & 63;
    if (((bits[word] >> bit) & 1) == 0) return {};
    if (!leaf->has_weights) return {true, 0};
    std::uint32_t rank = 0;
    for (std::uint32_t w = 0; w < word; ++w) rank += static_cast<std::uint32_t>(std::popcount(bits[w]));
    rank += static_cast<std::uint32_t>(std::popcount(bits[word] & ((std::uint64_t{1} << bit) - 1)));
    return {true, leaf->weights()[rank]};
  }
  std::int64_t pos;
  switch (leaf->suffix_width()) {
    case 1:
      pos = search_suffix<1>(leaf->payload(), leaf->count, s);
      break;
    case 2:
      pos = search_suffix<2>(leaf->payload(), leaf->count, s);
      break;
    case 3:
      pos = search_suffix<3>(leaf->payload(), leaf->count, s);
      break;
    default:
      pos = search_suffix<4>(leaf->payload(), leaf->count, s);
  }
  if (pos < 0) return {};
  return {true, leaf->has_weights ? leaf->weights()[pos] : Weight{0}};
}

Lookup node_find(const Node* n, VertexId v) {
  while (!n->is_leaf()) {
    const Inner* in = as_inner(n);
    if (((v ^ in->prefix) & prefix_mask(in->depth)) != 0) return {};
    n = find_child(in, key_byte(v, in->depth));
    if (n == nullptr) return {};
  }
  return leaf_find(as_leaf(n), v);
}

// ---------------------------------------------------------------------------
// Reference counting

void retain(const Node* n) noexcept { n->refcount.fetch_add(1, std::memory_order_relaxed); }

void release(const Node* n) noexcept {
  const std::uint32_t prev = n->refcount.fetch_sub(1, std::memory_order_acq_rel);
  assert(prev >= 1 && "release of a node with refcount 0");
  if (prev != 1) return;
  if (!n->is_leaf()) {
    const Inner* in = as_inner(n);
    const Node* last = nullptr;
    for (int pos = first_pos(in); pos >= 0; pos = next_pos(in, pos)) {
      const Node* c = child_at(in, pos);
      if (c != last) release(c);
      last = c;
    }
  }
  free_node(n);
}

void TreeStats::merge(const TreeStats& o) {
  entries += o.entries;
  leaves += o.leaves;
  bitmap_leaves += o.bitmap_leaves;
  for (std::size_t i = 0; i < inner.size(); ++i) inner[i] += o.inner[i];
  bytes += o.bytes;
  height = std::max(height, o.height);
}

// ---------------------------------------------------------------------------
// Tree

std::vector<VertexId> Tree::to_vector() const {
  std::vector<VertexId> out;
  out.reserve(size_);
  scan([&](VertexId v, Weight) { out.push_back(v); });
  return out;
}

Tree Tree::insert(VertexId v, Weight w, const Params& p, bool* changed) const {
  const Entry e{v, p.weights ? w : 0};
  bool ch = true;
  Node* r;
  if (root_ == nullptr)
    r = make_leaf(&e, 1, p.weights);
  else
    r = insert_node(root_, e, p, ch);
  if (changed) *changed = ch;
  return Tree(r, size_ + (ch ? 1 : 0));
}

Tree Tree::erase(VertexId v, const Params& p, bool* changed) const {
  bool ch = false;
  Node* r = nullptr;
  if (root_ != nullptr) r = erase_node(root_, v, p, ch);
  if (changed) *changed = ch;
  return Tree(r, size_ - (ch ? 1 : 0));
}

Tree Tree::build(std::span<const VertexId> keys, std::span<const Weight> weights,
                 const Params& p) {
  if (keys.empty()) return {};
  Entries es(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    assert(i == 0 || keys[i - 1] < keys[i]);
    es[i] = {keys[i], (p.weights && !weights.empty()) ? weights[i] : Weight{0}};
  }
  return Tree(bulk(es.data(), es.size(), p), es.size());
}

double Tree::filling_ratio(std::uint32_t leaf_capacity) const {
  if (root_ == nullptr) throw std::domain_error("filling ratio of an empty tree");
  const TreeStats st = stats();
  return static_cast<double>(st.entries) / (static_cast<double>(st.leaves) * leaf_capacity);
}

TreeStats Tree::stats() const {
  TreeStats st;
  if (root_ != nullptr) stats_rec(root_, st, 0);
  return st;
}

// ---------------------------------------------------------------------------
// Cursor

Cursor::Cursor(const Node* root) {
  if (root != nullptr) descend(root);
}

void Cursor::descend(const Node* n) {
  while (!n->is_leaf()) {
    const Inner* in = as_inner(n);
    const int pos = first_pos(in);
    stack_[static_cast<std::size_t>(top_++)] = {in, pos};
    n = child_at(in, pos);
  }
  enter_leaf(as_leaf(n));
}

void Cursor::enter_leaf(const Leaf* leaf) {
  leaf_ = leaf;
  idx_ = 0;
  if (leaf->bitmap) {
    bit_ = next_set_bit(leaf->bits(), 0);
    key_ = leaf->lcp | static_cast<VertexId>(bit_);
  } else {
    key_ = leaf->lcp | leaf->suffix(0);
  }
}

Weight Cursor::weight() const { return leaf_->has_weights ? leaf_->weights()[idx_] : 0; }

void Cursor::next() {
  if (++idx_ < leaf_->count) {
    if (leaf_->bitmap) {
      bit_ = next_set_bit(leaf_->bits(), bit_ + 1);
      key_ = leaf_->lcp | static_cast<VertexId>(bit_);
    } else {
      key_ = leaf_->lcp | leaf_->suffix(idx_);
    }
    return;
  }
  pop_to_next_leaf();
}

void Cursor::pop_to_next_leaf() {
  while (top_ > 0) {
    Frame& f = stack_[static_cast<std::size_t>(top_ - 1)];
    const Node* cur = child_at(f.node, f.pos);
    int pos = next_pos(f.node, f.pos);
    while (pos >= 0 && child_at(f.node, pos) == cur) pos = next_pos(f.node, pos);
    if (pos >= 0) {
      f.pos = pos;
      descend(child_at(f.node, pos));
      return;
    }
    --top_;
  }
  leaf_ = nullptr;
}

// ---------------------------------------------------------------------------
// Intersection

IntersectStrategy choose_strategy(std::size_t d1, std::size_t d2, std::uint32_t threshold) {
  const std::size_t lo = std::min(d1, d2), hi = std::max(d1, d2);
  if (lo == 0) return IntersectStrategy::kMerge;
  return hi < static_cast<std::size_t>(threshold) * lo ? IntersectStrategy::kMerge
                                                       : IntersectStrategy::kProbe;
}

std::vector<VertexId> intersect(const Tree& a, const Tree& b, std::uint32_t ratio_threshold,
                                IntersectStrategy strategy, IntersectStrategy* used) {
  if (strategy == IntersectStrategy::kAuto)
    strategy = choose_strategy(a.size(), b.size(), ratio_threshold);
  if (used) *used = strategy;
  std::vector<VertexId> out;
  if (a.empty() || b.empty()) return out;
  if (strategy == IntersectStrategy::kMerge) {
    Cursor x(a), y(b);
    while (x.valid() && y.valid()) {
      if (x.key() < y.key()) {
        x.next();
      } else if (y.key() < x.key()) {
        y.next();
      } else {
        out.push_back(x.key());
        x.next();
        y.next();
      }
    }
    return out;
  }
  const Tree& small = a.size() <= b.size() ? a : b;
  const Tree& large = a.size() <= b.size() ? b : a;
  small.scan([&](VertexId v, Weight) {
    if (large.contains(v)) out.push_back(v);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Debug helpers

namespace debug {
namespace {

void check_rec(const Node* n, const Params& p, int parent_depth, VertexId path_prefix,
               std::string& err, std::vector<VertexId>& keys) {
  if (!err.empty()) return;
  if (n->refcount.load() == 0) {
    err = "reachable node with refcount 0";
    return;
  }
  if (n->is_leaf()) {
    const Leaf* l = as_leaf(n);
    if (l->count < 1 || l->count > p.leaf_capacity) {
      err = "leaf count out of bounds: " + std::to_string(l->count);
      return;
    }
    if (l->bitmap != (l->lcp_len == 3)) err = "bitmap mode mismatch";
    std::vector<VertexId> ks;
    auto push = [&](VertexId v, Weight) { ks.push_back(v); };
    scan_leaf(l, push);
    const unsigned lcp = std::min(common_prefix_len(ks.front(), ks.back()), 3u);
    if (lcp != l->lcp_len) err = "leaf lcp is not the longest common prefix";
    if (static_cast<int>(l->lcp_len) < parent_depth) err = "leaf lcp shorter than parent path";
    for (std::size_t i = 1; i < ks.size(); ++i)
      if (ks[i - 1] >= ks[i]) err = "leaf entries not strictly ascending";
    keys.insert(keys.end(), ks.begin(), ks.end());
    return;
  }
  const Inner* in = as_inner(n);
  if (in->depth >= 4 || static_cast<int>(in->depth) <= parent_depth) {
    err = "inner depth not increasing";
    return;
  }
  if ((in->prefix & ~prefix_mask(in->depth)) != 0) err = "prefix has bytes beyond depth";
  if (parent_depth >= 0 && ((in->prefix ^ path_prefix) & prefix_mask(parent_depth + 1)) != 0)
    err = "inner prefix disagrees with parent path";
  static constexpr int kCap[] = {0, 4, 16, 48, 256};
  if (in->count > kCap[static_cast<int>(in->kind)]) err = "node over capacity";
  if (kind_for(in->count) != in->kind) err = "node kind not the smallest fitting kind";
  if (in->kind == NodeKind::kN256) {
    const auto* m = static_cast<const N256*>(in);
    int pop = 0, nonnull = 0;
    for (auto w : m->presence) pop += std::popcount(w);
    for (auto* c : m->child) nonnull += c != nullptr;
    if (pop != in->count || nonnull != in->count) err = "N256 presence bitmap inconsistent";
  }
  std::vector<std::pair<std::uint8_t, const Node*>> slots;
  for (int pos = first_pos(in); pos >= 0; pos = next_pos(in, pos))
    slots.emplace_back(key_at(in, pos), child_at(in, pos));
  if (static_cast<int>(slots.size()) != in->count) err = "slot count mismatch";
  if (err.empty()) {
    bool distinct = false;
    for (auto& s : slots) distinct |= s.second != slots.front().second;
    if (!distinct) err = "inner node with a single distinct child";
  }
  const std::uint32_t half = p.leaf_capacity / 2;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (i > 0 && slots[i - 1].first >= slots[i].first) err = "keys not ascending";
    for (std::size_t j = i + 2; j < slots.size(); ++j)
      if (slots[j].second == slots[i].second && slots[j - 1].second != slots[i].second)
        err = "leaf referenced by non-contiguous keys";
  }
  if (!err.empty()) return;
  const Node* prev_child = nullptr;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Node* c = slots[i].second;
    if (c == prev_child) continue;
    // Each entry under this child must route through one of its keys.
    std::vector<std::uint8_t> routes;
    for (std::size_t j = i; j < slots.size() && slots[j].second == c; ++j)
      routes.push_back(slots[j].first);
    const std::size_t before = keys.size();
    const VertexId child_path = in->prefix | (VertexId{routes.front()} << (8 * (3 - in->depth)));
    check_rec(c, p, in->depth, child_path, err, keys);
    for (std::size_t k = before; k < keys.size(); ++k) {
      if (((keys[k] ^ in->prefix) & prefix_mask(in->depth)) != 0) err = "entry outside node prefix";
      if (std::find(routes.begin(), routes.end(), key_byte(keys[k], in->depth)) == routes.end())
        err = "entry not reachable through its key byte";
    }
    if (prev_child != nullptr && prev_child->is_leaf() && c->is_leaf()) {
      const auto a = as_leaf(prev_child)->count, b = as_leaf(c)->count;
      if (a < half && b < half && a + b <= p.leaf_capacity) err = "adjacent underfull leaves not merged";
    }
    prev_child = c;
  }
}

}  // namespace

std::string check(const Tree& t, const Params& p) {
  if (t.empty()) return t.size() == 0 ? "" : "empty root with nonzero size";
  std::string err;
  std::vector<VertexId> keys;
  check_rec(t.root(), p, -1, 0, err, keys);
  if (!err.empty()) return err;
  if (keys.size() != t.size()) return "cached cardinality differs from entry count";
  for (std::size_t i = 1; i < keys.size(); ++i)
    if (keys[i - 1] >= keys[i]) return "scan not strictly ascending";
  return "";
}

std::vector<NodeRef> reachable(std::span<const Node* const> roots) {
  std::unordered_map<const Node*, std::uint32_t> parents;
  std::vector<const Node*> order, stack;
  for (const Node* r : roots) {
    if (r == nullptr) continue;
    if (parents[r]++ == 0) {
      order.push_back(r);
      stack.push_back(r);
    }
  }
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (n->is_leaf()) continue;
    const Inner* in = as_inner(n);
    const Node* last = nullptr;
    for (int pos = first_pos(in); pos >= 0; pos = next_pos(in, pos)) {
      const Node* c = child_at(in, pos);
      if (c == last) continue;
      last = c;
      if (parents[c]++ == 0) {
        order.push_back(c);
        stack.push_back(c);
      }
    }
  }
  std::vector<NodeRef> out;
  out.reserve(order.size());
  for (const Node* n : order) out.push_back({n, parents[n]});
  return out;
}

std::vector<std::pair<const Leaf*, std::uint32_t>> leaves(const Tree& t) {
  std::vector<std::pair<const Leaf*, std::uint32_t>> out;
  std::vector<const Node*> stack;
  if (t.root()) stack.push_back(t.root());
  // Iterative DFS preserving ascending order.
  auto visit = [&](auto&& self, const Node* n) -> void {
    if (n->is_leaf()) {
      out.emplace_back(as_leaf(n), as_leaf(n)->count);
      return;
    }
    const Inner* in = as_inner(n);
    const Node* last = nullptr;
    for (int pos = first_pos(in); pos >= 0; pos = next_pos(in, pos)) {
      const Node* c = child_at(in, pos);
      if (c != last) self(self, c);
      last = c;
    }
  };
  if (t.root()) visit(visit, t.root());
  return out;
}

}  // namespace debug

}  // namespace mvgraph::cart
