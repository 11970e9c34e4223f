#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "mvgraph/oracle.hpp"

using namespace mvgraph;
using namespace mvgraph::oracle;

namespace {

bool same(const Adjacency& a, const Adjacency& b) {
  return a.present == b.present && a.out == b.out && a.edges == b.edges;
}

std::vector<UpdateOp> random_batch(std::mt19937& rng, VertexId n, int len) {
  std::vector<UpdateOp> b;
  for (int i = 0; i < len; ++i) {
    const VertexId u = rng() % n, v = rng() % n;
    b.push_back(rng() % 3 ? UpdateOp::insert_edge(u, v, rng() % 100)
                          : UpdateOp::delete_edge(u, v));
  }
  return b;
}

// Builds a history by running batches through a serial store and recording
// what a correct reader would observe.
History synthetic(int commits, std::uint32_t readers_every) {
  HistoryHeader hd{20, 4, 2, 20, false};
  std::atomic<std::uint64_t> seq{0};
  std::vector<EventLog> logs;
  logs.emplace_back(seq, 0);
  logs.emplace_back(seq, 1);
  SerialStore s(hd.max_vertices, hd.present_below);
  std::vector<Timestamp> last(5, 0);
  std::mt19937 rng(11);
  for (int t = 1; t <= commits; ++t) {
    auto ops = random_batch(rng, 20, 3);
    logs[0].add(Event::Kind::kBegin);
    Adjacency probe = s.current();
    for (VertexId u : apply_batch(probe, ops, false)) last[u / 4] = t;
    s.apply(ops, t);
    logs[0].add(Event::Kind::kCommit, t).ops = ops;
    logs[0].add(Event::Kind::kChainSample).length = 1 + t % 3;
    logs[0].add(Event::Kind::kEnd);
    if (t % readers_every == 0) {
      logs[1].add(Event::Kind::kRegister, t);
      Event& o = logs[1].add(Event::Kind::kObserve, t);
      o.edge_count = s.current().edges;
      o.checksum = s.current().checksum().value();
      o.version_ts = last;
      logs[1].add(Event::Kind::kUnregister, t);
    }
  }
  return History::merge(hd, logs);
}

}  // namespace

TEST_CASE("empty log gives the initial graph at any time") {
  SerialStore s(10, 4);
  for (Timestamp t : {0, 1, 100}) {
    const Adjacency g = s.state_at(t);
    CHECK(g.edges == 0);
    CHECK(g.present[3] == 1);
    CHECK(g.present[4] == 0);
  }
}

TEST_CASE("a single committed insert") {
  SerialStore s(8, 8);
  const UpdateOp op = UpdateOp::insert_edge(1, 6);
  s.apply(std::span(&op, 1), 1);
  CHECK(s.state_at(0).edges == 0);
  CHECK(s.state_at(1).out[1].count(6) == 1);
  CHECK(s.state_at(7).out[1].count(6) == 1);
  CHECK_THROWS_AS(s.apply(std::span(&op, 1), 1), std::invalid_argument);
}

TEST_CASE("apply_batch semantics") {
  Adjacency g(6, 3);
  std::vector<UpdateOp> ok{UpdateOp::insert_edge(0, 1, 5), UpdateOp::insert_edge(0, 1, 9),
                           UpdateOp::delete_edge(2, 4), UpdateOp::insert_vertex(4),
                           UpdateOp::insert_edge(4, 0)};
  const auto changed = apply_batch(g, ok, true);
  CHECK(changed == std::vector<VertexId>{0, 4, 4});
  CHECK(g.out[0].at(1) == 5);
  CHECK(g.edges == 2);

  const Adjacency before = g;
  // Fails on the third op; the first two must be rolled back.
  std::vector<UpdateOp> bad{UpdateOp::insert_edge(1, 2), UpdateOp::delete_edge(0, 1),
                            UpdateOp::insert_edge(5, 0)};
  CHECK_THROWS_AS(apply_batch(g, bad, true), VertexNotFound);
  CHECK(same(g, before));
  std::vector<UpdateOp> busy{UpdateOp::delete_vertex_local(0)};
  CHECK_THROWS_AS(apply_batch(g, busy, true), ProtocolError);
  std::vector<UpdateOp> range{UpdateOp::insert_edge(0, 6)};
  CHECK_THROWS_AS(apply_batch(g, range, true), RangeError);
  CHECK(same(g, before));

  std::vector<UpdateOp> del{UpdateOp::delete_edge(4, 0), UpdateOp::delete_vertex_local(4),
                            UpdateOp::delete_vertex_local(4)};
  apply_batch(g, del, true);
  CHECK(g.present[4] == 0);
}

TEST_CASE("rebuild and incremental replay agree at 20 cut points") {
  std::mt19937 rng(5);
  SerialStore s(300, 300);
  Timestamp t = 0;
  int ops = 0;
  while (ops < 10000) {
    auto b = random_batch(rng, 300, 1 + rng() % 20);
    ops += static_cast<int>(b.size());
    t += 1 + rng() % 3;
    s.apply(b, t);
  }
  std::vector<Timestamp> cuts;
  for (int i = 0; i < 20; ++i) cuts.push_back(rng() % (t + 2));
  std::sort(cuts.begin(), cuts.end());
  int visited = 0;
  s.for_each_state(cuts, [&](Timestamp c, const Adjacency& g) {
    CHECK(same(g, s.state_at(c)));
    ++visited;
  });
  CHECK(visited == 20);
  CHECK(same(s.current(), s.state_at(t)));

  // Against a third, independent representation: a set of pairs.
  std::set<std::pair<VertexId, VertexId>> edges;
  for (const auto& [ts, batch] : s.log())
    for (const UpdateOp& op : batch) {
      if (op.kind == UpdateOp::Kind::kInsertEdge) edges.emplace(op.u, op.v);
      if (op.kind == UpdateOp::Kind::kDeleteEdge) edges.erase({op.u, op.v});
    }
  ScanChecksum c;
  for (const auto& [u, v] : edges) c.add(u, v);
  CHECK(c.value() == s.current().checksum().value());
  CHECK(edges.size() == s.current().edges);
}

TEST_CASE("history checker: clean record passes") {
  const History h = synthetic(200, 7);
  const Verdict v = check_history(h);
  CHECK(v.ok);
  CHECK(v.commits == 200);
  CHECK(v.observations == 200 / 7);
}

TEST_CASE("history checker: ndjson roundtrip") {
  const History h = synthetic(50, 5);
  std::stringstream ss;
  h.write_ndjson(ss);
  const History back = History::read_ndjson(ss);
  REQUIRE(back.events.size() == h.events.size());
  std::stringstream again;
  back.write_ndjson(again);
  std::stringstream first;
  h.write_ndjson(first);
  CHECK(again.str() == first.str());
  CHECK(check_history(back).ok);

  std::stringstream bad("{\"type\":\"header\",\"max_vertices\":4,\"partition_size\":1,"
                        "\"tracer_slots\":1,\"present_below\":4,\"weights\":false}\n"
                        "{\"seq\":0,\"kind\":\"bogus\",\"actor\":0,\"ts\":0}\n");
  CHECK_THROWS_AS(History::read_ndjson(bad), std::invalid_argument);
  std::stringstream headless("{\"seq\":0,\"kind\":\"begin\",\"actor\":0,\"ts\":0}\n");
  CHECK_THROWS_AS(History::read_ndjson(headless), std::invalid_argument);
}

TEST_CASE("history checker: injected faults are located") {
  const History clean = synthetic(120, 4);
  auto find_nth = [](History& h, Event::Kind k, int n) -> Event& {
    for (Event& e : h.events)
      if (e.kind == k && n-- == 0) return e;
    throw std::logic_error("not found");
  };

  SUBCASE("torn reader state") {
    History h = clean;
    Event& o = find_nth(h, Event::Kind::kObserve, 10);
    o.checksum ^= 1;
    const Verdict v = check_history(h);
    CHECK(!v.ok);
    CHECK(v.seq == o.seq);
  }
  SUBCASE("reader shown a stale edge count") {
    History h = clean;
    Event& o = find_nth(h, Event::Kind::kObserve, 3);
    o.edge_count += 1;
    const Verdict v = check_history(h);
    CHECK(!v.ok);
    CHECK(v.seq == o.seq);
  }
  SUBCASE("mixed partition versions") {
    History h = clean;
    Event& o = find_nth(h, Event::Kind::kObserve, 20);
    o.version_ts[2] = o.version_ts[2] == 0 ? 1 : o.version_ts[2] - 1;
    const Verdict v = check_history(h);
    CHECK(!v.ok);
    CHECK(v.seq == o.seq);
  }
  SUBCASE("gap in commit timestamps") {
    History h = clean;
    Event& c = find_nth(h, Event::Kind::kCommit, 119);
    c.ts = 500;
    const Verdict v = check_history(h);
    CHECK(!v.ok);
    CHECK(v.seq == c.seq);
  }
  SUBCASE("duplicate commit timestamp") {
    History h = clean;
    Event& c = find_nth(h, Event::Kind::kCommit, 40);
    c.ts = 40;
    CHECK(!check_history(h).ok);
  }
  SUBCASE("chain longer than k + 1") {
    History h = clean;
    Event& s = find_nth(h, Event::Kind::kChainSample, 7);
    s.length = h.header.tracer_slots + 2;
    const Verdict v = check_history(h);
    CHECK(!v.ok);
    CHECK(v.seq == s.seq);
  }
}
