#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>
#include <set>

#include "mvgraph/instrument.hpp"
#include "mvgraph/subgraph.hpp"

using namespace mvgraph;

namespace {

using Adjacency = std::map<VertexId, std::set<VertexId>>;

std::int64_t live_structs() {
  return metrics::live(LiveKind::kCartInner) + metrics::live(LiveKind::kCartLeaf) +
         metrics::live(LiveKind::kCiInner) + metrics::live(LiveKind::kCiLeaf) +
         metrics::live(LiveKind::kSnapshot);
}

std::vector<VertexId> scan_vec(const SubgraphSnapshot& s, VertexId u) {
  std::vector<VertexId> out;
  s.scan(u, [&](VertexId v, Weight) { out.push_back(v); });
  return out;
}

Config small_cfg(std::uint32_t psize = 64, std::uint32_t promote = 64) {
  Config c;
  c.partition_size = psize;
  c.max_vertices = 4096;
  c.promote_threshold = promote;
  c.leaf_capacity = 16;
  c.ci_leaf_fanout = 8;
  c.ci_inner_fanout = 8;
  return c;
}

void expect_matches(const SubgraphSnapshot& s, const Adjacency& a) {
  std::uint64_t total = 0;
  for (VertexId u = s.base(); u < s.base() + s.width(); ++u) {
    std::vector<VertexId> expect;
    if (auto it = a.find(u); it != a.end()) expect.assign(it->second.begin(), it->second.end());
    const auto got = scan_vec(s, u);
    REQUIRE(got == expect);
    REQUIRE(s.degree(u) == got.size());
    for (VertexId v : expect) REQUIRE(s.search(u, v));
    total += expect.size();
  }
  REQUIRE(s.edge_count() == total);
}

}  // namespace

TEST_CASE("empty partition") {
  const auto base = live_structs();
  {
    const Config cfg = small_cfg();
    auto s = SubgraphSnapshot::make_empty(PartitionId{2}, cfg, cfg.max_vertices);
    CHECK(s->base() == 128);
    CHECK(s->width() == 64);
    CHECK(s->edge_count() == 0);
    for (VertexId u = 128; u < 192; ++u) {
      CHECK(s->present(u));
      CHECK(s->degree(u) == 0);
      CHECK(scan_vec(*s, u).empty());
      CHECK_FALSE(s->search(u, 0));
    }
    CHECK_THROWS_AS(s->degree(0), VertexNotFound);

    auto dyn = SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 0);
    CHECK_FALSE(dyn->present(5));
    CHECK_THROWS_AS(dyn->degree(5), VertexNotFound);
    CHECK_THROWS_AS(scan_vec(*dyn, 5), VertexNotFound);
    CHECK_THROWS_AS(dyn->search(5, 1), VertexNotFound);
  }
  CHECK(live_structs() == base);
}

TEST_CASE("last partition is clipped to max_vertices") {
  Config cfg = small_cfg(64);
  cfg.max_vertices = 100;
  auto s = SubgraphSnapshot::make_empty(PartitionId{1}, cfg, 100);
  CHECK(s->width() == 36);
  CHECK_FALSE(s->owns(100));
}

TEST_CASE("inserting e(1, 6) leaves the old version untouched") {
  const auto base = live_structs();
  {
    const Config cfg = small_cfg(3);
    auto s0 = SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 9);
    const UpdateOp init[] = {UpdateOp::insert_edge(1, 0), UpdateOp::insert_edge(1, 2),
                             UpdateOp::insert_edge(0, 1), UpdateOp::insert_edge(2, 1)};
    auto v1 = s0->apply(init, cfg);
    REQUIRE(v1.changed);
    const UpdateOp ins[] = {UpdateOp::insert_edge(1, 6)};
    auto v3 = v1.snapshot->apply(ins, cfg);
    CHECK(v3.changed);
    CHECK(scan_vec(*v3.snapshot, 1) == std::vector<VertexId>{0, 2, 6});
    CHECK(scan_vec(*v1.snapshot, 1) == std::vector<VertexId>{0, 2});
    CHECK(v3.snapshot->edge_count() == 5);
    CHECK(v1.snapshot->edge_count() == 4);
    CHECK(scan_vec(*s0, 1).empty());
  }
  CHECK(live_structs() == base);
}

TEST_CASE("empty and no-op batches carry the zero-change marker") {
  const Config cfg = small_cfg();
  auto s = SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 64);
  auto r = s->apply({}, cfg);
  CHECK_FALSE(r.changed);
  CHECK(r.snapshot.get() == s.get());
  const UpdateOp ins[] = {UpdateOp::insert_edge(3, 4)};
  auto a = s->apply(ins, cfg);
  auto b = a.snapshot->apply(ins, cfg);
  CHECK_FALSE(b.changed);
  const UpdateOp del[] = {UpdateOp::delete_edge(3, 9), UpdateOp::insert_vertex(3)};
  CHECK_FALSE(a.snapshot->apply(del, cfg).changed);
}

TEST_CASE("promotion happens exactly once and keeps the contract") {
  const auto base = live_structs();
  {
    const Config cfg = small_cfg(64, 64);
    auto s = SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 64);
    std::mt19937_64 rng(4);
    std::set<VertexId> oracle;
    std::vector<UpdateOp> batch;
    while (batch.size() < 1000) {
      const VertexId v = static_cast<VertexId>(rng() % 4096);
      batch.push_back(UpdateOp::insert_edge(7, v));
      oracle.insert(v);
    }
    // Unrelated low-degree neighbours share the clustered index.
    for (VertexId v = 0; v < 20; ++v) batch.push_back(UpdateOp::insert_edge(8, v * 3));
    auto r = s->apply(batch, cfg);
    CHECK(r.promotions == 1);
    CHECK(r.snapshot->slot(7).tag == Storage::kCart);
    CHECK(r.snapshot->slot(8).tag == Storage::kClustered);
    CHECK(scan_vec(*r.snapshot, 7) == std::vector<VertexId>(oracle.begin(), oracle.end()));
    CHECK(r.snapshot->degree(7) == oracle.size());
    CHECK(r.snapshot->degree(8) == 20);
    CHECK(r.snapshot->edge_count() == oracle.size() + 20);
    // Shrinking below the threshold does not demote.
    std::vector<UpdateOp> dels;
    for (VertexId v : oracle) dels.push_back(UpdateOp::delete_edge(7, v));
    auto d = r.snapshot->apply(dels, cfg);
    CHECK(d.snapshot->slot(7).tag == Storage::kCart);
    CHECK(d.snapshot->degree(7) == 0);
    CHECK(d.snapshot->edge_count() == 20);
  }
  CHECK(live_structs() == base);
}

TEST_CASE("clustered and C-ART storage answer identically") {
  std::mt19937_64 rng(8);
  for (int round = 0; round < 10; ++round) {
    std::set<VertexId> set;
    const std::size_t n = 1 + rng() % 60;
    while (set.size() < n) set.insert(static_cast<VertexId>(rng() % 100000));
    std::vector<UpdateOp> ops;
    for (VertexId v : set) ops.push_back(UpdateOp::insert_edge(5, v));
    Config clustered = small_cfg(64, 1000);
    Config forced = small_cfg(64, 0);
    clustered.max_vertices = forced.max_vertices = 100000;
    auto a = SubgraphSnapshot::make_empty(PartitionId{0}, clustered, 64)->apply(ops, clustered);
    auto b = SubgraphSnapshot::make_empty(PartitionId{0}, forced, 64)->apply(ops, forced);
    REQUIRE(a.snapshot->slot(5).tag == Storage::kClustered);
    REQUIRE(b.snapshot->slot(5).tag == Storage::kCart);
    CHECK(scan_vec(*a.snapshot, 5) == scan_vec(*b.snapshot, 5));
    CHECK(a.snapshot->degree(5) == b.snapshot->degree(5));
    for (int i = 0; i < 200; ++i) {
      const VertexId v = static_cast<VertexId>(rng() % 100000);
      CHECK(a.snapshot->search(5, v).found == b.snapshot->search(5, v).found);
    }
  }
}

TEST_CASE("random batches replay against a map-of-sets oracle") {
  const auto base = live_structs();
  {
    Config cfg = small_cfg(32, 12);
    cfg.weights_enabled = true;
    std::mt19937_64 rng(21);
    const PartitionId pid{3};
    const VertexId lo = 96, hi = 128;
    std::vector<SnapshotRef> versions{SubgraphSnapshot::make_empty(pid, cfg, cfg.max_vertices)};
    std::vector<Adjacency> states{{}};
    Adjacency oracle;
    std::map<std::pair<VertexId, VertexId>, Weight> weights;
    for (int step = 0; step < 400; ++step) {
      std::vector<UpdateOp> batch;
      const int n = 1 + static_cast<int>(rng() % 40);
      for (int i = 0; i < n; ++i) {
        const VertexId u = lo + static_cast<VertexId>(rng() % (hi - lo));
        // Skewed destinations so some vertices cross the promotion threshold.
        const VertexId v = static_cast<VertexId>(rng() % (u % 4 == 0 ? 400 : 30));
        if (rng() % 3 == 0) {
          batch.push_back(UpdateOp::delete_edge(u, v));
          oracle[u].erase(v);
        } else {
          const Weight w = static_cast<Weight>(1 + rng() % 50);
          batch.push_back(UpdateOp::insert_edge(u, v, w));
          if (oracle[u].insert(v).second) weights[{u, v}] = w;
        }
      }
      auto r = versions.back()->apply(batch, cfg);
      versions.push_back(std::move(r.snapshot));
      states.push_back(oracle);
      if (step % 40 == 0) {
        for (std::size_t j = 0; j < versions.size(); j += 13) expect_matches(*versions[j], states[j]);
      }
    }
    expect_matches(*versions.back(), oracle);
    for (auto& [u, ns] : oracle)
      for (VertexId v : ns) CHECK(versions.back()->search(u, v).weight == weights[{u, v}]);
    std::vector<std::pair<VertexId, VertexId>> all;
    versions.back()->scan_all([&](VertexId u, VertexId v, Weight) { all.emplace_back(u, v); });
    CHECK(std::is_sorted(all.begin(), all.end()));
    CHECK(all.size() == versions.back()->edge_count());
    const auto st = versions.back()->stats();
    CHECK(st.cart_vertices > 0);
    CHECK(st.cart_vertices + st.clustered_vertices == hi - lo);
    CHECK(st.cart.entries + st.ci.entries == st.edges);
    // Promotion monotonicity along the lineage.
    for (std::size_t j = 1; j < versions.size(); ++j)
      for (VertexId u = lo; u < hi; ++u)
        if (versions[j - 1]->slot(u).tag == Storage::kCart)
          REQUIRE(versions[j]->slot(u).tag == Storage::kCart);
  }
  CHECK(live_structs() == base);
}

TEST_CASE("vertex flags and delete protocol") {
  const Config cfg = small_cfg();
  auto s = SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 0);
  const UpdateOp add[] = {UpdateOp::insert_vertex(4), UpdateOp::insert_edge(4, 9)};
  auto a = s->apply(add, cfg);
  CHECK(a.snapshot->present(4));
  CHECK(a.snapshot->degree(4) == 1);
  const UpdateOp bad[] = {UpdateOp::delete_vertex_local(4)};
  CHECK_THROWS_AS(a.snapshot->apply(bad, cfg), ProtocolError);
  const UpdateOp orphan[] = {UpdateOp::insert_edge(5, 1)};
  CHECK_THROWS_AS(a.snapshot->apply(orphan, cfg), VertexNotFound);
  const UpdateOp foreign[] = {UpdateOp::insert_edge(70, 1)};
  CHECK_THROWS_AS(a.snapshot->apply(foreign, cfg), ProtocolError);
  const UpdateOp range[] = {UpdateOp::insert_edge(4, cfg.max_vertices)};
  CHECK_THROWS_AS(a.snapshot->apply(range, cfg), RangeError);
  const UpdateOp good[] = {UpdateOp::delete_edge(4, 9), UpdateOp::delete_vertex_local(4)};
  auto b = a.snapshot->apply(good, cfg);
  CHECK_FALSE(b.snapshot->present(4));
  CHECK(a.snapshot->present(4));
}

TEST_CASE("shared structures survive releasing one of two snapshots") {
  const auto base = live_structs();
  {
    const Config cfg = small_cfg(64, 4);
    auto s = SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 64);
    std::vector<UpdateOp> ops;
    for (VertexId u = 0; u < 10; ++u)
      for (VertexId v = 0; v < 30; ++v) ops.push_back(UpdateOp::insert_edge(u, v * 7));
    auto a = s->apply(ops, cfg);
    const UpdateOp one[] = {UpdateOp::insert_edge(3, 1)};
    auto b = a.snapshot->apply(one, cfg);
    CHECK(b.snapshot->slot(5).tree.root() == a.snapshot->slot(5).tree.root());
    const auto before = scan_vec(*b.snapshot, 5);
    a.snapshot = SnapshotRef{};
    s = SnapshotRef{};
    CHECK(scan_vec(*b.snapshot, 5) == before);
    CHECK(b.snapshot->slot(5).tree.root()->refcount.load() == 1);
  }
  CHECK(live_structs() == base);

  {
    const Config cfg = small_cfg(64, 8);
    std::mt19937_64 rng(6);
    std::vector<SnapshotRef> chain{SubgraphSnapshot::make_empty(PartitionId{0}, cfg, 64)};
    for (int i = 0; i < 50; ++i) {
      std::vector<UpdateOp> ops;
      for (int j = 0; j < 10; ++j)
        ops.push_back(UpdateOp::insert_edge(static_cast<VertexId>(rng() % 64),
                                            static_cast<VertexId>(rng() % 300)));
      chain.push_back(chain.back()->apply(ops, cfg).snapshot);
    }
    std::shuffle(chain.begin(), chain.end(), rng);
    chain.clear();
  }
  CHECK(live_structs() == base);
}
