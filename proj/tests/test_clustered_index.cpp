#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>
#include <set>

#include "mvgraph/clustered_index.hpp"
#include "mvgraph/instrument.hpp"

using namespace mvgraph;
using ci::Params;
using ci::Tree;

namespace {

using Adjacency = std::map<VertexId, std::map<VertexId, Weight>>;

std::int64_t live_ci() {
  return metrics::live(LiveKind::kCiInner) + metrics::live(LiveKind::kCiLeaf);
}

std::vector<VertexId> scan_vec(const Tree& t, VertexId u) {
  std::vector<VertexId> out;
  t.scan(u, [&](VertexId v, Weight) { out.push_back(v); });
  return out;
}

std::vector<VertexId> oracle_vec(const Adjacency& a, VertexId u) {
  std::vector<VertexId> out;
  if (auto it = a.find(u); it != a.end())
    for (auto& [v, w] : it->second) out.push_back(v);
  return out;
}

void expect_equal(const Tree& t, const Adjacency& a, VertexId lo, VertexId hi) {
  std::size_t total = 0;
  for (auto& [u, ns] : a) total += ns.size();
  REQUIRE(t.size() == total);
  const auto leaves = t.leaves();
  std::map<VertexId, ci::Locator> locs;
  ci::for_each_run(leaves, [&](VertexId u, ci::Locator l) { locs[u] = l; });
  for (VertexId u = lo; u < hi; ++u) {
    const auto expect = oracle_vec(a, u);
    REQUIRE(scan_vec(t, u) == expect);
    std::vector<VertexId> via_loc;
    if (auto it = locs.find(u); it != locs.end())
      ci::scan_from(leaves, it->second, u, [&](VertexId v, Weight) { via_loc.push_back(v); });
    REQUIRE(via_loc == expect);
  }
}

}  // namespace

TEST_CASE("empty index") {
  Tree t;
  CHECK_FALSE(t.find(0, 0));
  CHECK(scan_vec(t, 3).empty());
  CHECK(t.leaves().empty());
  CHECK(ci::debug::check(t, Params{}).empty());
}

TEST_CASE("insert then search and scan") {
  const auto base = live_ci();
  {
    Params p;
    Tree t = Tree{}.insert(3, 7, 0, p);
    CHECK(t.root()->leaf);
    CHECK(t.root()->count == 1);
    CHECK(t.find(3, 7));
    CHECK_FALSE(t.find(3, 8));
    CHECK_FALSE(t.find(7, 3));
    t = t.insert(3, 9, 0, p).insert(3, 1, 0, p);
    CHECK(scan_vec(t, 3) == std::vector<VertexId>{1, 7, 9});
    CHECK(scan_vec(t, 2).empty());
    CHECK(scan_vec(t, 4).empty());
    bool changed = true;
    Tree same = t.insert(3, 7, 0, p, &changed);
    CHECK_FALSE(changed);
    CHECK(same.size() == 3);
    same = t.erase(3, 8, p, &changed);
    CHECK_FALSE(changed);
    CHECK(same.size() == 3);
  }
  CHECK(live_ci() == base);
}

TEST_CASE("leaf overflow splits under a new root") {
  Params p{8, 8, false};
  Tree t;
  for (VertexId v = 0; v < 8; ++v) t = t.insert(1, v, 0, p);
  CHECK(t.root()->leaf);
  t = t.insert(1, 8, 0, p);
  REQUIRE_FALSE(t.root()->leaf);
  CHECK(t.root()->count == 2);
  CHECK(t.leaves().size() == 2);
  CHECK(t.leaves()[0]->count == 4);
  CHECK(t.leaves()[1]->count == 5);
  CHECK(ci::debug::check(t, p).empty());
  for (VertexId v = 0; v < 9; ++v) t = t.erase(1, v, p);
  CHECK(t.empty());
}

TEST_CASE("weights are kept per entry") {
  Params p{4, 4, true};
  Tree t;
  for (VertexId v = 0; v < 50; ++v) t = t.insert(v % 5, v, v * 10 + 1, p);
  for (VertexId v = 0; v < 50; ++v) {
    const auto r = t.find(v % 5, v);
    REQUIRE(r.found);
    CHECK(r.weight == v * 10 + 1);
  }
  std::vector<Weight> ws;
  t.scan(2, [&](VertexId v, Weight w) {
    CHECK(w == v * 10 + 1);
    ws.push_back(w);
  });
  CHECK(ws.size() == 10);
}

TEST_CASE("random insert/delete replay against map-of-sets") {
  const auto base = live_ci();
  for (auto fan : {4u, 7u, 64u}) {
    Params p{fan, fan, false};
    std::mt19937_64 rng(fan);
    std::vector<Tree> versions{Tree{}};
    std::vector<Adjacency> states{{}};
    Adjacency oracle;
    for (int i = 0; i < 10000; ++i) {
      const VertexId u = 100 + static_cast<VertexId>(rng() % 64);
      const VertexId v = static_cast<VertexId>(rng() % 200);
      Tree next;
      if (rng() % 3 != 0) {
        next = versions.back().insert(u, v, 0, p);
        oracle[u][v] = 0;
      } else {
        next = versions.back().erase(u, v, p);
        if (auto it = oracle.find(u); it != oracle.end()) {
          it->second.erase(v);
          if (it->second.empty()) oracle.erase(it);
        }
      }
      versions.push_back(std::move(next));
      states.push_back(oracle);
      if (versions.size() > 40) {
        versions.erase(versions.begin());
        states.erase(states.begin());
      }
      if (i % 500 == 0) {
        INFO("fanout " << fan << " op " << i);
        REQUIRE(ci::debug::check(versions.back(), p) == "");
        for (std::size_t j = 0; j < versions.size(); j += 9) expect_equal(versions[j], states[j], 99, 165);
      }
    }
    expect_equal(versions.back(), oracle, 99, 165);
    for (auto& [u, ns] : oracle)
      for (auto& [v, w] : ns) REQUIRE(versions.back().find(u, v));
    std::vector<const ci::Node*> roots;
    for (auto& v : versions)
      if (v.root()) roots.push_back(v.root());
    for (auto& r : ci::debug::reachable(roots)) REQUIRE(r.node->refcount.load() == r.parents);
  }
  CHECK(live_ci() == base);
}

TEST_CASE("full scan is globally sorted") {
  Params p{5, 5, false};
  std::mt19937_64 rng(1);
  Tree t;
  for (int i = 0; i < 3000; ++i)
    t = t.insert(static_cast<VertexId>(rng() % 64), static_cast<VertexId>(rng()), 0, p);
  std::optional<ci::Key> prev;
  std::size_t n = 0;
  t.scan_all([&](VertexId u, VertexId v, Weight) {
    const auto k = ci::make_key(u, v);
    if (prev) CHECK(*prev < k);
    prev = k;
    ++n;
  });
  CHECK(n == t.size());
}

TEST_CASE("extract removes exactly one neighbour set") {
  const auto base = live_ci();
  {
    Params p{6, 6, true};
    std::mt19937_64 rng(9);
    Tree t;
    Adjacency oracle;
    for (int i = 0; i < 800; ++i) {
      const VertexId u = static_cast<VertexId>(rng() % 16);
      const VertexId v = static_cast<VertexId>(rng() % 500);
      const Weight w = static_cast<Weight>(rng() % 9 + 1);
      bool changed;
      t = t.insert(u, v, w, p, &changed);
      if (changed) oracle[u][v] = w;
    }
    std::vector<std::pair<VertexId, Weight>> got;
    Tree same = t.extract(99, p, got);
    CHECK(got.empty());
    CHECK(same.root() == t.root());

    Tree cut = t.extract(5, p, got);
    REQUIRE(got.size() == oracle[5].size());
    CHECK(got == std::vector<std::pair<VertexId, Weight>>(oracle[5].begin(), oracle[5].end()));
    CHECK(scan_vec(cut, 5).empty());
    CHECK(scan_vec(t, 5) == oracle_vec(oracle, 5));
    CHECK(ci::debug::check(cut, p).empty());
    Adjacency rest = oracle;
    rest.erase(5);
    expect_equal(cut, rest, 0, 17);

    Tree back = cut;
    for (auto [v, w] : got) back = back.insert(5, v, w, p);
    expect_equal(back, oracle, 0, 17);
    for (auto [v, w] : got) CHECK(back.find(5, v).weight == w);
  }
  CHECK(live_ci() == base);
}

TEST_CASE("default sizing stays two levels deep") {
  Params p;
  Tree t;
  std::mt19937_64 rng(2);
  // A 64-vertex partition whose vertices all sit at the promotion threshold.
  for (VertexId u = 0; u < 64; ++u)
    for (VertexId j = 0; j < 64; ++j) t = t.insert(u, static_cast<VertexId>(rng()), 0, p);
  CHECK(t.stats().height <= 3);
  CHECK(ci::debug::check(t, p).empty());
}
