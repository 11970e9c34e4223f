#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvgraph/core.hpp"

/// Copy-on-write B+-tree over (src, dst) pairs. One per partition; holds the
/// neighbour sets of its low-degree vertices back to back in key order.
namespace mvgraph::ci {

using Key = std::uint64_t;

constexpr Key make_key(VertexId u, VertexId v) { return (Key{u} << 32) | v; }
constexpr VertexId key_src(Key k) { return static_cast<VertexId>(k >> 32); }
constexpr VertexId key_dst(Key k) { return static_cast<VertexId>(k); }

struct Params {
  std::uint32_t leaf_fanout = 64;
  std::uint32_t inner_fanout = 64;
  bool weights = false;

  static Params from(const Config& cfg) {
    return {cfg.ci_leaf_fanout, cfg.ci_inner_fanout, cfg.weights_enabled};
  }
};

struct alignas(8) Node {
  mutable std::atomic<std::uint32_t> refcount{1};
  bool leaf = true;
  bool has_weights = false;
  std::uint16_t count = 0;
  std::uint32_t bytes = 0;
};

/// keys[count], then weights[count] when present.
struct alignas(8) Leaf : Node {
  const Key* keys() const { return reinterpret_cast<const Key*>(this + 1); }
  Key* keys() { return reinterpret_cast<Key*>(this + 1); }
  const Weight* weights() const { return reinterpret_cast<const Weight*>(keys() + count); }
  Weight* weights() { return reinterpret_cast<Weight*>(keys() + count); }
  Weight weight(std::uint32_t i) const { return has_weights ? weights()[i] : 0; }
};

/// lows[count] (smallest key under each child), then children[count].
struct alignas(8) Inner : Node {
  const Key* lows() const { return reinterpret_cast<const Key*>(this + 1); }
  Key* lows() { return reinterpret_cast<Key*>(this + 1); }
  Node* const* children() const { return reinterpret_cast<Node* const*>(lows() + count); }
  Node** children() { return reinterpret_cast<Node**>(lows() + count); }
};

void retain(const Node* n) noexcept;
void release(const Node* n) noexcept;

/// Start of N(u) inside a snapshot's ordered leaf list.
struct Locator {
  std::uint32_t leaf = 0;
  std::uint32_t offset = 0;
};

struct Lookup {
  bool found = false;
  Weight weight = 0;
  explicit operator bool() const { return found; }
};

struct Stats {
  std::uint64_t entries = 0;
  std::uint64_t leaves = 0;
  std::uint64_t inner = 0;
  std::uint64_t bytes = 0;
  std::uint32_t height = 0;
};

class Tree {
 public:
  Tree() = default;
  Tree(const Tree& o) : root_(o.root_), size_(o.size_) {
    if (root_) retain(root_);
  }
  Tree(Tree&& o) noexcept : root_(o.root_), size_(o.size_) {
    o.root_ = nullptr;
    o.size_ = 0;
  }
  Tree& operator=(Tree o) noexcept {
    std::swap(root_, o.root_);
    std::swap(size_, o.size_);
    return *this;
  }
  ~Tree() {
    if (root_) release(root_);
  }

  bool empty() const { return root_ == nullptr; }
  std::size_t size() const { return size_; }
  const Node* root() const { return root_; }

  Lookup find(VertexId u, VertexId v) const;

  Tree insert(VertexId u, VertexId v, Weight w, const Params& p, bool* changed = nullptr) const;
  Tree erase(VertexId u, VertexId v, const Params& p, bool* changed = nullptr) const;

  /// Removes N(u), appending its (dst, weight) pairs ascending to `out`.
  Tree extract(VertexId u, const Params& p,
               std::vector<std::pair<VertexId, Weight>>& out) const;

  /// Leaves in key order; locators index into this list.
  std::vector<const Leaf*> leaves() const;

  /// Visits N(u) ascending as f(dst, weight) with a root-to-leaf descent.
  template <class F>
  void scan(VertexId u, F&& f) const;

  /// Visits every entry as f(src, dst, weight).
  template <class F>
  void scan_all(F&& f) const;

  Stats stats() const;

 private:
  Tree(Node* root, std::size_t size) : root_(root), size_(size) {}

  const Leaf* lower_leaf(Key k, std::uint32_t& offset) const;

  Node* root_ = nullptr;
  std::size_t size_ = 0;
};

/// Visits N(u) starting at `loc` in `leaves` and stopping at the first
/// entry with another source.
template <class F>
void scan_from(std::span<const Leaf* const> leaves, Locator loc, VertexId u, F&& f) {
  std::uint32_t off = loc.offset;
  for (std::size_t li = loc.leaf; li < leaves.size(); ++li, off = 0) {
    const Leaf* l = leaves[li];
    const Key* keys = l->keys();
    for (; off < l->count; ++off) {
      if (key_src(keys[off]) != u) return;
      f(key_dst(keys[off]), l->weight(off));
    }
  }
}

/// Walks `leaves` once and reports, for each distinct source, the locator of
/// its first entry as f(src, Locator).
template <class F>
void for_each_run(std::span<const Leaf* const> leaves, F&& f) {
  bool have = false;
  VertexId last = 0;
  for (std::uint32_t li = 0; li < leaves.size(); ++li) {
    const Key* keys = leaves[li]->keys();
    for (std::uint32_t i = 0; i < leaves[li]->count; ++i) {
      const VertexId s = key_src(keys[i]);
      if (!have || s != last) {
        f(s, Locator{li, i});
        have = true;
        last = s;
      }
    }
  }
}

template <class F>
void Tree::scan(VertexId u, F&& f) const {
  if (root_ == nullptr) return;
  std::uint32_t off = 0;
  const Leaf* l = lower_leaf(make_key(u, 0), off);
  // Entries of u may continue into following leaves; walk forward via re-descent.
  while (l != nullptr) {
    const Key* keys = l->keys();
    for (; off < l->count; ++off) {
      if (key_src(keys[off]) != u) return;
      f(key_dst(keys[off]), l->weight(off));
    }
    const Key next = keys[l->count - 1] + 1;
    if (key_src(next) != u) return;
    l = lower_leaf(next, off);
  }
}

template <class F>
void Tree::scan_all(F&& f) const {
  for (const Leaf* l : leaves()) {
    for (std::uint32_t i = 0; i < l->count; ++i)
      f(key_src(l->keys()[i]), key_dst(l->keys()[i]), l->weight(i));
  }
}

namespace debug {

/// Empty string when ordering, occupancy, low-key and uniform-depth
/// invariants all hold.
std::string check(const Tree& t, const Params& p);

struct NodeRef {
  const Node* node;
  std::uint32_t parents;
};
std::vector<NodeRef> reachable(std::span<const Node* const> roots);

}  // namespace debug

}  // namespace mvgraph::ci
