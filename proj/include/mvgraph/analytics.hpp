#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "mvgraph/cart.hpp"
#include "mvgraph/store.hpp"

namespace mvgraph::analytics {

// Kernels see the present vertices of a handle; edges whose destination is
// absent are ignored.

inline constexpr std::uint32_t kUnreached = std::numeric_limits<std::uint32_t>::max();
inline constexpr std::uint64_t kInfinity = std::numeric_limits<std::uint64_t>::max();

/// One value per present vertex, in ascending vertex order.
template <class T>
struct KernelResult {
  std::vector<VertexId> vertices;
  std::vector<T> values;
  double seconds = 0;

  std::size_t size() const { return vertices.size(); }
  /// Value of vertex u; throws VertexNotFound when u was not considered.
  const T& at(VertexId u) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), u);
    if (it == vertices.end() || *it != u) throw VertexNotFound(u);
    return values[static_cast<std::size_t>(it - vertices.begin())];
  }
};

struct Options {
  unsigned threads = 1;
};

/// Hop distances from `source`; kUnreached when unreachable.
KernelResult<std::uint32_t> bfs(const ReadHandle& h, VertexId source, Options o = {});

/// Synchronous power iteration from 1/n with dangling mass spread evenly.
KernelResult<double> pagerank(const ReadHandle& h, int iters = 10, double damping = 0.85,
                              Options o = {});

/// Exact shortest path weights (stored weights, or fallback_weight when the
/// store has none); kInfinity when unreachable.
KernelResult<std::uint64_t> sssp(const ReadHandle& h, VertexId source, Options o = {});

/// Component label per vertex: the smallest vertex ID of its weak component.
KernelResult<VertexId> wcc(const ReadHandle& h, Options o = {});

struct TriangleResult {
  std::uint64_t triangles = 0;
  double seconds = 0;
};

/// Triangles u < v < w of a store holding both directions of every edge.
TriangleResult triangle_count(const ReadHandle& h,
                              cart::IntersectStrategy strategy = cart::IntersectStrategy::kAuto,
                              Options o = {});

}  // namespace mvgraph::analytics
