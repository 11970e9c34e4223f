#include "mvgraph/analytics.hpp"

#include <atomic>
#include <chrono>
#include <queue>
#include <stdexcept>
#include <thread>

namespace mvgraph::analytics {

namespace {

constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Present vertices and their dense positions.
struct Universe {
  std::vector<VertexId> ids;
  std::vector<std::uint32_t> pos;

  explicit Universe(const ReadHandle& h) : pos(h.max_vertices(), kNone) {
    for (VertexId u = 0; u < h.max_vertices(); ++u)
      if (h.present(u)) {
        pos[u] = static_cast<std::uint32_t>(ids.size());
        ids.push_back(u);
      }
  }
  std::size_t size() const { return ids.size(); }
  std::uint32_t at(VertexId v) const { return v < pos.size() ? pos[v] : kNone; }
};

// f(begin, end, worker) over [0, n) split into contiguous blocks.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  threads = std::max(1u, threads);
  if (threads == 1 || n < 2 * threads) {
    f(std::size_t{0}, n, 0u);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
    pool.emplace_back([&f, b, e, t] { f(b, e, t); });
  }
  for (auto& th : pool) th.join();
}

template <class T>
KernelResult<T> result_of(Universe& u, std::vector<T> values, Clock::time_point t0) {
  KernelResult<T> r;
  r.vertices = std::move(u.ids);
  r.values = std::move(values);
  r.seconds = since(t0);
  return r;
}

}  // namespace

KernelResult<std::uint32_t> bfs(const ReadHandle& h, VertexId source, Options o) {
  const auto t0 = Clock::now();
  Universe U(h);
  const std::uint32_t s = U.at(source);
  if (s == kNone) throw VertexNotFound(source);

  std::vector<std::atomic<std::uint32_t>> dist(U.size());
  for (auto& d : dist) d.store(kUnreached, std::memory_order_relaxed);
  dist[s].store(0);
  std::vector<std::uint32_t> frontier{s};
  const unsigned threads = std::max(1u, o.threads);
  std::vector<std::vector<std::uint32_t>> next(threads);
  for (std::uint32_t level = 1; !frontier.empty(); ++level) {
    parallel_for(frontier.size(), threads, [&](std::size_t b, std::size_t e, unsigned w) {
      auto& out = next[w];
      for (std::size_t i = b; i < e; ++i)
        h.scan(U.ids[frontier[i]], [&](VertexId v, Weight) {
          const std::uint32_t j = U.at(v);
          if (j == kNone) return;
          std::uint32_t expected = kUnreached;
          if (dist[j].load(std::memory_order_relaxed) == kUnreached &&
              dist[j].compare_exchange_strong(expected, level, std::memory_order_relaxed))
            out.push_back(j);
        });
    });
    frontier.clear();
    for (auto& n : next) {
      frontier.insert(frontier.end(), n.begin(), n.end());
      n.clear();
    }
  }
  std::vector<std::uint32_t> out(U.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dist[i].load();
  return result_of(U, std::move(out), t0);
}

KernelResult<double> pagerank(const ReadHandle& h, int iters, double damping, Options o) {
  if (iters < 1) throw std::invalid_argument("pagerank needs at least one iteration");
  const auto t0 = Clock::now();
  Universe U(h);
  const std::size_t n = U.size();
  if (n == 0) throw std::invalid_argument("pagerank on an empty graph");

  // Out-degree counting only present destinations.
  std::vector<std::uint32_t> outdeg(n, 0);
  const unsigned threads = std::max(1u, o.threads);
  parallel_for(n, threads, [&](std::size_t b, std::size_t e, unsigned) {
    for (std::size_t i = b; i < e; ++i)
      h.scan(U.ids[i], [&](VertexId v, Weight) { outdeg[i] += U.at(v) != kNone; });
  });

  std::vector<double> rank(n, 1.0 / static_cast<double>(n));
  std::vector<std::vector<double>> acc(threads, std::vector<double>(n));
  std::vector<double> dangling(threads);
  for (int it = 0; it < iters; ++it) {
    parallel_for(n, threads, [&](std::size_t b, std::size_t e, unsigned w) {
      auto& a = acc[w];
      std::fill(a.begin(), a.end(), 0.0);
      double dm = 0;
      for (std::size_t i = b; i < e; ++i) {
        if (outdeg[i] == 0) {
          dm += rank[i];
          continue;
        }
        const double share = rank[i] / outdeg[i];
        h.scan(U.ids[i], [&](VertexId v, Weight) {
          const std::uint32_t j = U.at(v);
          if (j != kNone) a[j] += share;
        });
      }
      dangling[w] = dm;
    });
    double dm = 0;
    for (unsigned w = 0; w < threads; ++w) dm += dangling[w];
    const double base = (1.0 - damping) / static_cast<double>(n) +
                        damping * dm / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      double in = 0;
      for (unsigned w = 0; w < threads; ++w) in += acc[w][j];
      rank[j] = base + damping * in;
    }
  }
  return result_of(U, std::move(rank), t0);
}

KernelResult<std::uint64_t> sssp(const ReadHandle& h, VertexId source, Options) {
  const auto t0 = Clock::now();
  Universe U(h);
  const std::uint32_t s = U.at(source);
  if (s == kNone) throw VertexNotFound(source);
  const bool stored = h.weights_enabled();

  std::vector<std::uint64_t> dist(U.size(), kInfinity);
  using Item = std::pair<std::uint64_t, std::uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[s] = 0;
  pq.emplace(0, s);
  while (!pq.empty()) {
    const auto [d, i] = pq.top();
    pq.pop();
    if (d != dist[i]) continue;
    const VertexId u = U.ids[i];
    h.scan(u, [&](VertexId v, Weight w) {
      const std::uint32_t j = U.at(v);
      if (j == kNone) return;
      const std::uint64_t nd = d + (stored ? w : fallback_weight(u, v));
      if (nd < dist[j]) {
        dist[j] = nd;
        pq.emplace(nd, j);
      }
    });
  }
  return result_of(U, std::move(dist), t0);
}

KernelResult<VertexId> wcc(const ReadHandle& h, Options o) {
  const auto t0 = Clock::now();
  Universe U(h);
  const std::size_t n = U.size();
  // Min-label propagation along edges in both directions, to a fixpoint.
  std::vector<std::atomic<std::uint32_t>> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i].store(static_cast<std::uint32_t>(i));
  auto lower = [&](std::uint32_t j, std::uint32_t l) {
    std::uint32_t cur = label[j].load(std::memory_order_relaxed);
    while (l < cur && !label[j].compare_exchange_weak(cur, l, std::memory_order_relaxed)) {
    }
    return l < cur;
  };
  std::atomic<bool> changed{true};
  while (changed.load()) {
    changed.store(false);
    parallel_for(n, o.threads, [&](std::size_t b, std::size_t e, unsigned) {
      bool local = false;
      for (std::size_t i = b; i < e; ++i) {
        h.scan(U.ids[i], [&](VertexId v, Weight) {
          const std::uint32_t j = U.at(v);
          if (j == kNone) return;
          const std::uint32_t li = label[i].load(std::memory_order_relaxed);
          const std::uint32_t lj = label[j].load(std::memory_order_relaxed);
          if (li < lj) local |= lower(j, li);
          else if (lj < li) local |= lower(static_cast<std::uint32_t>(i), lj);
        });
        // Pointer jumping shortens long chains of labels.
        std::uint32_t l = label[i].load(std::memory_order_relaxed);
        const std::uint32_t ll = label[l].load(std::memory_order_relaxed);
        if (ll < l) local |= lower(static_cast<std::uint32_t>(i), ll);
      }
      if (local) changed.store(true);
    });
  }
  std::vector<VertexId> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = U.ids[label[i].load()];
  return result_of(U, std::move(out), t0);
}

TriangleResult triangle_count(const ReadHandle& h, cart::IntersectStrategy strategy, Options o) {
  const auto t0 = Clock::now();
  Universe U(h);
  const unsigned threads = std::max(1u, o.threads);
  std::vector<std::uint64_t> partial(threads, 0);
  parallel_for(U.size(), threads, [&](std::size_t b, std::size_t e, unsigned w) {
    std::uint64_t count = 0;
    std::vector<VertexId> higher;
    for (std::size_t i = b; i < e; ++i) {
      const VertexId u = U.ids[i];
      higher.clear();
      h.scan(u, [&](VertexId v, Weight) {
        if (v > u && U.at(v) != kNone) higher.push_back(v);
      });
      for (VertexId v : higher)
        for (VertexId x : h.intersect(u, v, strategy))
          count += x > v && U.at(x) != kNone;
    }
    partial[w] = count;
  });
  TriangleResult r;
  for (auto c : partial) r.triangles += c;
  r.seconds = since(t0);
  return r;
}

}  // namespace mvgraph::analytics
