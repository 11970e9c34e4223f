#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <cassert>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "mvgraph/core.hpp"

/// Compressed Adaptive Radix Tree: an ordered, immutable-once-published set of
/// 4-byte vertex IDs. Inner nodes follow ART (N4/N16/N48/N256, path
/// compression). Leaves hold up to B sorted entries sharing a longest common
/// prefix; several consecutive keys of one inner node may point at the same
/// leaf. Mutations copy the root-to-leaf path and share everything else
/// through reference counts.
namespace mvgraph::cart {

enum class NodeKind : std::uint8_t { kLeaf, kN4, kN16, kN48, kN256 };

struct Params {
  std::uint32_t leaf_capacity = 256;
  bool weights = false;

  static Params from(const Config& cfg) { return {cfg.leaf_capacity, cfg.weights_enabled}; }
};

struct alignas(8) Node {
  mutable std::atomic<std::uint32_t> refcount{1};
  NodeKind kind;

  bool is_leaf() const { return kind == NodeKind::kLeaf; }
};

/// Leaf segment. Payload (suffixes or a 256-bit bitmap, then optional
/// weights) follows the header in the same allocation.
struct alignas(8) Leaf : Node {
  std::uint8_t lcp_len = 0;  // bytes shared by every entry, 0..3
  bool bitmap = false;       // lcp_len == 3: entries are bits of a 256-bit set
  bool has_weights = false;
  std::uint32_t lcp = 0;     // shared prefix, low bytes zero
  std::uint32_t count = 0;
  std::uint32_t bytes = 0;   // allocation size

  unsigned suffix_width() const { return 4u - lcp_len; }
  const unsigned char* payload() const { return reinterpret_cast<const unsigned char*>(this + 1); }
  unsigned char* payload() { return reinterpret_cast<unsigned char*>(this + 1); }
  const std::uint64_t* bits() const { return reinterpret_cast<const std::uint64_t*>(payload()); }
  std::size_t suffix_bytes() const { return suffix_area_bytes(count, lcp_len); }
  const Weight* weights() const {
    return reinterpret_cast<const Weight*>(payload() + suffix_bytes());
  }

  static std::size_t suffix_area_bytes(std::uint32_t count, unsigned lcp_len) {
    if (lcp_len == 3) return 32;
    const std::size_t w = 4u - lcp_len;
    const std::size_t raw = count * w + (w == 3 ? 1 : 0);
    return (raw + 7) & ~std::size_t{7};
  }

  /// Suffix of entry i (array mode only).
  std::uint32_t suffix(std::uint32_t i) const {
    const unsigned char* p = payload();
    switch (suffix_width()) {
      case 1:
        return p[i];
      case 2: {
        std::uint16_t x;
        std::memcpy(&x, p + 2 * i, 2);
        return x;
      }
      case 3: {
        const unsigned char* q = p + 3 * i;
        return std::uint32_t{q[0]} | (std::uint32_t{q[1]} << 8) | (std::uint32_t{q[2]} << 16);
      }
      default: {
        std::uint32_t x;
        std::memcpy(&x, p + 4 * i, 4);
        return x;
      }
    }
  }
};

struct alignas(8) Inner : Node {
  std::uint8_t depth = 0;   // key byte this node discriminates on
  std::uint16_t count = 0;  // number of key slots
  std::uint32_t prefix = 0; // first `depth` key bytes, rest zero
};

struct N4 : Inner {
  std::uint8_t keys[4];
  Node* child[4];
};
struct N16 : Inner {
  std::uint8_t keys[16];
  Node* child[16];
};
struct N48 : Inner {
  std::uint8_t index[256];  // slot + 1, 0 = empty
  std::uint8_t keys[48];    // slot order == key order
  Node* child[48];
};
struct N256 : Inner {
  std::uint64_t presence[4];
  Node* child[256];
};

/// Slot position inside an inner node, in ascending key order. For N256 the
/// position is the key itself; end is -1.
int first_pos(const Inner* n);
int next_pos(const Inner* n, int pos);
std::uint8_t key_at(const Inner* n, int pos);
const Node* child_at(const Inner* n, int pos);
const Node* find_child(const Inner* n, std::uint8_t key);

struct Lookup {
  bool found = false;
  Weight weight = 0;
  explicit operator bool() const { return found; }
};

Lookup leaf_find(const Leaf* leaf, VertexId v);
Lookup node_find(const Node* root, VertexId v);

template <class F>
void scan_leaf(const Leaf* leaf, F& f) {
  const Weight* w = leaf->has_weights ? leaf->weights() : nullptr;
  if (leaf->bitmap) {
    std::uint32_t rank = 0;
    const std::uint64_t* bits = leaf->bits();
    for (int word = 0; word < 4; ++word) {
      std::uint64_t x = bits[word];
      while (x != 0) {
        const int b = std::countr_zero(x);
        x &= x - 1;
        f(leaf->lcp | static_cast<VertexId>(word * 64 + b), w ? w[rank] : Weight{0});
        ++rank;
      }
    }
    return;
  }
  const unsigned char* p = leaf->payload();
  const VertexId base = leaf->lcp;
  switch (leaf->suffix_width()) {
    case 1:
      for (std::uint32_t i = 0; i < leaf->count; ++i) f(base | p[i], w ? w[i] : Weight{0});
      break;
    case 2:
      for (std::uint32_t i = 0; i < leaf->count; ++i) {
        std::uint16_t x;
        std::memcpy(&x, p + 2 * i, 2);
        f(base | x, w ? w[i] : Weight{0});
      }
      break;
    default:
      for (std::uint32_t i = 0; i < leaf->count; ++i) f(base | leaf->suffix(i), w ? w[i] : Weight{0});
  }
}

template <class F>
void scan_node(const Node* n, F& f) {
  if (n->is_leaf()) {
    scan_leaf(static_cast<const Leaf*>(n), f);
    return;
  }
  const auto* in = static_cast<const Inner*>(n);
  const Node* last = nullptr;
  for (int pos = first_pos(in); pos >= 0; pos = next_pos(in, pos)) {
    const Node* c = child_at(in, pos);
    if (c != last) {
      scan_node(c, f);
      last = c;
    }
  }
}

void retain(const Node* n) noexcept;
/// Drops one reference; reclaims the node and recursively releases its
/// children when the count reaches zero.
void release(const Node* n) noexcept;

struct TreeStats {
  std::uint64_t entries = 0;
  std::uint64_t leaves = 0;
  std::uint64_t bitmap_leaves = 0;
  std::array<std::uint64_t, 4> inner{};  // N4, N16, N48, N256
  std::uint64_t bytes = 0;
  std::uint32_t height = 0;

  std::uint64_t inner_total() const { return inner[0] + inner[1] + inner[2] + inner[3]; }
  void merge(const TreeStats& o);
};

/// Owning handle to one version of a C-ART. Copying retains, destruction releases.
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

  Lookup find(VertexId v) const { return root_ ? node_find(root_, v) : Lookup{}; }
  bool contains(VertexId v) const { return find(v).found; }

  /// Visits every member ascending as f(VertexId, Weight).
  template <class F>
  void scan(F&& f) const {
    if (root_) scan_node(root_, f);
  }

  std::vector<VertexId> to_vector() const;

  /// Copy-on-write insert. The receiver is left untouched. `changed` is set
  /// false when v was already a member (the result then shares the root).
  Tree insert(VertexId v, Weight w, const Params& p, bool* changed = nullptr) const;
  Tree erase(VertexId v, const Params& p, bool* changed = nullptr) const;

  /// Bulk load from strictly ascending keys; `weights` empty or aligned with keys.
  static Tree build(std::span<const VertexId> keys, std::span<const Weight> weights,
                    const Params& p);

  /// entries / (leaves * B). Throws std::domain_error on an empty tree.
  double filling_ratio(std::uint32_t leaf_capacity) const;
  TreeStats stats() const;

 private:
  Tree(Node* root, std::size_t size) : root_(root), size_(size) {}

  Node* root_ = nullptr;
  std::size_t size_ = 0;
};

/// Forward iterator over a tree's members, ascending.
class Cursor {
 public:
  explicit Cursor(const Tree& t) : Cursor(t.root()) {}
  explicit Cursor(const Node* root);

  bool valid() const { return leaf_ != nullptr; }
  VertexId key() const { return key_; }
  Weight weight() const;
  void next();

 private:
  struct Frame {
    const Inner* node;
    int pos;
  };

  void descend(const Node* n);
  void enter_leaf(const Leaf* leaf);
  void pop_to_next_leaf();

  std::array<Frame, 6> stack_{};
  int top_ = 0;
  const Leaf* leaf_ = nullptr;
  std::uint32_t idx_ = 0;  // entry ordinal inside the leaf
  int bit_ = 0;            // bitmap position (bitmap leaves)
  VertexId key_ = 0;
};

enum class IntersectStrategy { kAuto, kMerge, kProbe };

/// Picks merge when max/min cardinality < threshold, probe otherwise.
IntersectStrategy choose_strategy(std::size_t d1, std::size_t d2, std::uint32_t threshold);

/// Ascending common members of a and b.
std::vector<VertexId> intersect(const Tree& a, const Tree& b, std::uint32_t ratio_threshold,
                                IntersectStrategy strategy = IntersectStrategy::kAuto,
                                IntersectStrategy* used = nullptr);

namespace debug {

/// Structural self-check; returns an empty string when all invariants hold.
std::string check(const Tree& t, const Params& p);

struct NodeRef {
  const Node* node;
  std::uint32_t parents;  // distinct parent nodes among the visited set
};

/// Distinct nodes reachable from `roots`, each with its in-degree from
/// distinct reachable parents plus one per root handle.
std::vector<NodeRef> reachable(std::span<const Node* const> roots);

/// Leaves in DFS order with their entry counts, for white-box tests.
std::vector<std::pair<const Leaf*, std::uint32_t>> leaves(const Tree& t);

}  // namespace debug

}  // namespace mvgraph::cart
