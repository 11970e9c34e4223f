#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <future>
#include <random>
#include <set>
#include <thread>
#include <vector>

#include "mvgraph/mvcc.hpp"

using namespace mvgraph;

namespace {

Config small_config(std::uint32_t k = 4) {
  Config cfg;
  cfg.max_vertices = 9;
  cfg.partition_size = 3;
  cfg.tracer_slots = k;
  return cfg;
}

std::vector<SnapshotRef> initial(const Config& cfg) {
  std::vector<SnapshotRef> out;
  for (std::uint32_t i = 0; i < partition_count(cfg); ++i)
    out.push_back(SubgraphSnapshot::make_empty(PartitionId{i}, cfg, cfg.present_at_open()));
  return out;
}

// One transaction inserting e(u, v) into u's partition; no GC.
Timestamp commit_edge(MvccEngine& e, VertexId u, VertexId v, bool gc = false) {
  const PartitionId p = partition_of(u, e.config());
  WriteTxn t = e.begin({p});
  const UpdateOp op = UpdateOp::insert_edge(u, v);
  auto r = t.current(p).apply(std::span(&op, 1), e.config());
  t.stage(p, std::move(r.snapshot));
  const Timestamp ts = t.commit();
  if (gc) t.gc();
  t.end();
  return ts;
}

void gc_partition(MvccEngine& e, PartitionId p) {
  WriteTxn t = e.begin({p});
  t.gc();
}

// Retention rule evaluated directly over the chain timestamps (newest first).
std::vector<Timestamp> gc_oracle(const std::vector<Timestamp>& chain,
                                 const std::vector<Timestamp>& active) {
  std::vector<Timestamp> keep{chain.front()};
  for (std::size_t i = 1; i < chain.size(); ++i) {
    const Timestamp c = chain[i];
    const Timestamp newer = keep.back();
    bool pinned = false;
    for (Timestamp t : active) pinned |= c <= t && t < newer;
    if (pinned) keep.push_back(c);
  }
  return keep;
}

template <class F>
void with_watchdog(std::chrono::seconds limit, F&& f) {
  auto fut = std::async(std::launch::async, std::forward<F>(f));
  if (fut.wait_for(limit) != std::future_status::ready) {
    FAIL_CHECK("watchdog expired");
    std::abort();
  }
  fut.get();
}

}  // namespace

TEST_CASE("tracer: first claim on an empty tracer") {
  ReaderTracer tr(4, TracerFullPolicy::kSpin);
  std::atomic<Timestamp> t_r{2};
  std::thread([&] {
    const auto c = tr.register_reader(t_r);
    CHECK(c.slot == 0);
    CHECK(c.start_ts == 2);
    CHECK(tr.word(0) == (ReaderTracer::kBusyBit | 2));
    CHECK(tr.active() == std::vector<Timestamp>{2});
    tr.unregister(c.slot);
  }).join();
  CHECK(tr.all_free());
  CHECK(tr.word(0) == ReaderTracer::kFreeWord);
  CHECK(tr.min_active() == kMaxTimestamp);
}

TEST_CASE("tracer: k registrations use k distinct slots, then full") {
  const std::uint32_t k = 6;
  ReaderTracer tr(k, TracerFullPolicy::kFail);
  std::atomic<Timestamp> t_r{0};
  std::set<std::uint32_t> slots;
  for (std::uint32_t i = 0; i < k; ++i) {
    t_r.store(i);
    slots.insert(tr.register_reader(t_r).slot);
  }
  CHECK(slots.size() == k);
  CHECK(!tr.try_register(t_r).has_value());
  CHECK_THROWS_AS(tr.register_reader(t_r), TracerFullError);
  CHECK(tr.min_active() == 0);
  CHECK(tr.active().size() == k);
  for (std::uint32_t s : slots) tr.unregister(s);
  CHECK(tr.all_free());
}

TEST_CASE("tracer: 64 threads race for 8 slots") {
  const std::uint32_t k = 8, threads = 64, rounds = 50;
  ReaderTracer tr(k, TracerFullPolicy::kFail);
  std::atomic<Timestamp> t_r{7};
  for (std::uint32_t round = 0; round < rounds; ++round) {
    std::vector<std::atomic<int>> owner(k);
    for (auto& o : owner) o.store(-1);
    std::atomic<int> wins{0}, double_claims{0};
    std::atomic<bool> go{false};
    std::vector<std::optional<ReaderTracer::Claim>> claims(threads);
    std::vector<std::thread> pool;
    for (std::uint32_t i = 0; i < threads; ++i)
      pool.emplace_back([&, i] {
        while (!go.load()) std::this_thread::yield();
        claims[i] = tr.try_register(t_r);
        if (claims[i]) {
          ++wins;
          int expected = -1;
          if (!owner[claims[i]->slot].compare_exchange_strong(expected, static_cast<int>(i)))
            ++double_claims;
        }
      });
    go.store(true);
    for (auto& t : pool) t.join();
    CHECK(wins.load() == static_cast<int>(k));
    CHECK(double_claims.load() == 0);
    for (auto& c : claims)
      if (c) tr.unregister(c->slot);
    CHECK(tr.all_free());
  }
}

TEST_CASE("tracer: 10k register/unregister cycles leak nothing") {
  ReaderTracer tr(3, TracerFullPolicy::kSpin);
  std::atomic<Timestamp> t_r{0};
  for (int i = 0; i < 10000; ++i) {
    t_r.store(static_cast<Timestamp>(i));
    const auto c = tr.register_reader(t_r);
    CHECK(c.start_ts == static_cast<Timestamp>(i));
    tr.unregister(c.slot);
  }
  CHECK(tr.all_free());
}

TEST_CASE("commit: timestamps and clocks") {
  const Config cfg = small_config();
  MvccEngine e(cfg, initial(cfg));
  CHECK(e.clocks().t_w == 0);
  CHECK(e.clocks().t_r == 0);
  CHECK(commit_edge(e, 0, 1) == 1);
  CHECK(e.clocks().t_r == 1);
  CHECK(commit_edge(e, 3, 4) == 2);

  // e(1, 6) with |P| = 3 touches partitions 0 and 2; mirrored here by hand.
  WriteTxn t = e.begin({PartitionId{2}, PartitionId{0}, PartitionId{2}});
  REQUIRE(t.partitions().size() == 2);
  CHECK(t.partitions()[0] == PartitionId{0});
  CHECK(t.partitions()[1] == PartitionId{2});
  CHECK(e.locks_held() == 2);
  const UpdateOp fwd = UpdateOp::insert_edge(1, 6), rev = UpdateOp::insert_edge(6, 1);
  t.stage(PartitionId{0}, t.current(PartitionId{0}).apply(std::span(&fwd, 1), cfg).snapshot);
  t.stage(PartitionId{2}, t.current(PartitionId{2}).apply(std::span(&rev, 1), cfg).snapshot);
  CHECK_THROWS_AS(t.stage(PartitionId{1}, e.head(PartitionId{1})), ProtocolError);
  CHECK(t.commit() == 3);
  CHECK(e.clocks().t_r == 3);
  t.gc();
  t.end();
  CHECK(e.locks_held() == 0);
  CHECK(e.chain_timestamps(PartitionId{0}).front() == 3);
  CHECK(e.chain_timestamps(PartitionId{2}).front() == 3);
  CHECK(e.head(PartitionId{0})->search(1, 6));
  CHECK(e.head(PartitionId{2})->search(6, 1));
}

TEST_CASE("commit: an empty transaction still advances both clocks") {
  const Config cfg = small_config();
  MvccEngine e(cfg, initial(cfg));
  {
    WriteTxn t = e.begin({});
    CHECK(t.commit() == 1);
  }
  CHECK(e.clocks().t_r == 1);
  CHECK(e.chain_length(PartitionId{0}) == 1);
  WriteTxn t = e.begin({PartitionId{1}});
  CHECK_THROWS_AS(e.begin({PartitionId{3}}), RangeError);
  t.end();
  CHECK_THROWS_AS(t.commit(), ProtocolError);
}

TEST_CASE("commit: 4 writers x 1k commits are gap-free") {
  Config cfg = small_config(4);
  MvccEngine e(cfg, initial(cfg));
  std::vector<std::vector<Timestamp>> got(4);
  with_watchdog(std::chrono::seconds(60), [&] {
    std::vector<std::thread> ws;
    for (int w = 0; w < 4; ++w)
      ws.emplace_back([&, w] {
        std::mt19937 rng(w);
        for (int i = 0; i < 1000; ++i) {
          std::vector<PartitionId> parts;
          for (std::uint32_t p = 0; p < 3; ++p)
            if (rng() % 2) parts.push_back(PartitionId{p});
          WriteTxn t = e.begin(parts);
          for (PartitionId p : t.partitions()) {
            const VertexId u = p.index * 3 + rng() % 3;
            const UpdateOp op = rng() % 3 ? UpdateOp::insert_edge(u, rng() % 9)
                                          : UpdateOp::delete_edge(u, rng() % 9);
            auto r = t.current(p).apply(std::span(&op, 1), cfg);
            if (r.changed) t.stage(p, std::move(r.snapshot));
          }
          const Timestamp ts = t.commit();
          got[w].push_back(ts);
          t.gc();
        }
      });
    for (auto& t : ws) t.join();
  });
  std::vector<Timestamp> all;
  for (auto& g : got) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == 4000);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i + 1);
  CHECK(e.clocks().t_w == 4000);
  CHECK(e.clocks().t_r == 4000);
  CHECK(e.locks_held() == 0);
  for (std::uint32_t p = 0; p < 3; ++p) {
    CHECK(e.chain_length(PartitionId{p}) == 1);
    CHECK(e.chain_timestamps(PartitionId{p}).front() <= 4000);
  }
  CHECK(e.limbo_size() == 0);
}

TEST_CASE("gc: reader at 5 over chain {7,5,3}") {
  const Config cfg = small_config();
  MvccEngine e(cfg, initial(cfg));
  commit_edge(e, 3, 0);  // 1
  commit_edge(e, 3, 1);  // 2
  commit_edge(e, 0, 1);  // 3
  commit_edge(e, 3, 2);  // 4
  commit_edge(e, 0, 2);  // 5
  SnapshotView r = e.open_view();
  CHECK(r.start_ts() == 5);
  commit_edge(e, 3, 3);  // 6
  commit_edge(e, 0, 3);  // 7
  const auto before = e.chain_timestamps(PartitionId{0});
  CHECK(before == std::vector<Timestamp>{7, 5, 3, 0});

  gc_partition(e, PartitionId{0});
  const auto after = e.chain_timestamps(PartitionId{0});
  CHECK(after == gc_oracle(before, {5}));
  CHECK(after == std::vector<Timestamp>{7, 5});
  CHECK(r.version_ts(0) == 5);
  CHECK(r.at(0).search(0, 2));
  CHECK(!r.at(0).search(0, 3));

  r.close();
  gc_partition(e, PartitionId{0});
  CHECK(e.chain_timestamps(PartitionId{0}) == std::vector<Timestamp>{7});
}

TEST_CASE("gc: rule matches the oracle on random reader sets") {
  const Config cfg = small_config(8);
  std::mt19937 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    MvccEngine e(cfg, initial(cfg));
    std::vector<SnapshotView> views;
    std::vector<Timestamp> pinned;
    for (int i = 0; i < 30; ++i) {
      commit_edge(e, rng() % 2 ? 0 : 3, i % 9);
      if (rng() % 5 == 0 && views.size() < 8) {
        views.push_back(e.open_view());
        pinned.push_back(views.back().start_ts());
      }
    }
    std::sort(pinned.begin(), pinned.end());
    for (std::uint32_t p = 0; p < 2; ++p) {
      const auto before = e.chain_timestamps(PartitionId{p});
      gc_partition(e, PartitionId{p});
      CHECK(e.chain_timestamps(PartitionId{p}) == gc_oracle(before, pinned));
      CHECK(e.chain_length(PartitionId{p}) <= cfg.tracer_slots + 1);
    }
    for (std::size_t i = 0; i < views.size(); ++i)
      for (std::uint32_t p = 0; p < 3; ++p)
        CHECK(e.visible(PartitionId{p}, views[i].start_ts())->snapshot == &views[i].at(p));
  }
}

TEST_CASE("gc: no readers prunes to the head; k pinned readers give k + 1") {
  const std::uint32_t k = 4;
  const Config cfg = small_config(k);
  MvccEngine e(cfg, initial(cfg));
  for (int i = 0; i < 5; ++i) commit_edge(e, 0, i);
  gc_partition(e, PartitionId{0});
  CHECK(e.chain_length(PartitionId{0}) == 1);

  std::vector<SnapshotView> views;
  for (std::uint32_t i = 0; i < k; ++i) {
    views.push_back(e.open_view());
    commit_edge(e, 1, i, true);
  }
  CHECK(e.chain_length(PartitionId{0}) == k + 1);
  commit_edge(e, 2, 0, true);
  CHECK(e.chain_length(PartitionId{0}) == k + 1);
  CHECK(e.chain_stats().violations == 0);
  CHECK(e.chain_stats().max_length == k + 1);
  views.clear();
  commit_edge(e, 2, 1, true);
  CHECK(e.chain_length(PartitionId{0}) == 1);
}

TEST_CASE("view: selection by start timestamp") {
  const Config cfg = small_config();
  MvccEngine e(cfg, initial(cfg));
  {
    SnapshotView v = e.open_view();
    CHECK(v.start_ts() == 0);
    for (std::size_t p = 0; p < v.partitions(); ++p) CHECK(v.version_ts(p) == 0);
  }
  CHECK(e.tracer().all_free());

  commit_edge(e, 0, 1);  // 1
  commit_edge(e, 3, 1);  // 2
  SnapshotView r0 = e.open_view();
  commit_edge(e, 0, 2);  // 3
  CHECK(e.chain_timestamps(PartitionId{0}) == std::vector<Timestamp>{3, 1, 0});
  CHECK(r0.start_ts() == 2);
  CHECK(r0.version_ts(0) == 1);
  CHECK(e.visible(PartitionId{0}, 2)->ts == 1);
  CHECK(r0.at(0).search(0, 1));
  CHECK(!r0.at(0).search(0, 2));

  SnapshotView r1 = e.open_view();
  CHECK(r1.version_ts(0) == 3);
  CHECK(r1.at(0).search(0, 2));
}

TEST_CASE("view: consistent across partitions while writers commit") {
  // Every commit adds one edge to each partition, so a consistent view
  // holds start_ts edges in every partition.
  Config big = small_config(4);
  std::atomic<bool> stop{false};
  std::atomic<std::uint64_t> views{0}, bad{0};
  metrics::reset_lock_counters();
  big.max_vertices = 1u << 16;
  big.partition_size = 1u << 14;
  MvccEngine g(big, initial(big));
  with_watchdog(std::chrono::seconds(60), [&] {
    std::thread writer([&] {
      for (VertexId i = 0; i < 3000; ++i) {
        WriteTxn t = g.begin({PartitionId{0}, PartitionId{1}, PartitionId{2}, PartitionId{3}});
        for (std::uint32_t p = 0; p < 4; ++p) {
          const UpdateOp op = UpdateOp::insert_edge(p * big.partition_size + i % 7, i);
          t.stage(PartitionId{p}, t.current(PartitionId{p}).apply(std::span(&op, 1), big).snapshot);
        }
        t.commit();
        t.gc();
      }
      stop.store(true);
    });
    std::vector<std::thread> readers;
    for (int r = 0; r < 3; ++r)
      readers.emplace_back([&] {
        while (!stop.load()) {
          SnapshotView v = g.open_view();
          for (std::size_t p = 0; p < v.partitions(); ++p) {
            if (v.version_ts(p) > v.start_ts()) ++bad;
            if (v.at(p).edge_count() != v.start_ts()) ++bad;
          }
          ++views;
        }
      });
    writer.join();
    for (auto& t : readers) t.join();
  });
  CHECK(bad.load() == 0);
  CHECK(views.load() > 0);
  CHECK(metrics::reader_lock_acquisitions() == 0);
  CHECK(g.chain_stats().violations == 0);
  CHECK(g.tracer().all_free());
}

TEST_CASE("writers with overlapping partition sets do not deadlock") {
  const Config cfg = small_config();
  MvccEngine e(cfg, initial(cfg));
  with_watchdog(std::chrono::seconds(60), [&] {
    std::thread a([&] {
      for (int i = 0; i < 10000; ++i) {
        WriteTxn t = e.begin({PartitionId{0}, PartitionId{2}});
        t.commit();
      }
    });
    std::thread b([&] {
      for (int i = 0; i < 10000; ++i) {
        WriteTxn t = e.begin({PartitionId{2}, PartitionId{1}, PartitionId{0}});
        t.commit();
      }
    });
    a.join();
    b.join();
  });
  CHECK(e.clocks().t_w == 20000);
  CHECK(e.clocks().t_r == 20000);
  CHECK(e.locks_held() == 0);
}

TEST_CASE("a blocked writer proceeds after end") {
  const Config cfg = small_config();
  MvccEngine e(cfg, initial(cfg));
  WriteTxn first = e.begin({PartitionId{1}});
  std::atomic<bool> entered{false};
  std::thread second([&] {
    WriteTxn t = e.begin({PartitionId{1}});
    entered.store(true);
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  CHECK(!entered.load());
  first.end();
  second.join();
  CHECK(entered.load());
  CHECK(e.locks_held() == 0);
}

TEST_CASE("engine teardown frees chains and snapshots") {
  const auto snaps = metrics::live(LiveKind::kSnapshot);
  const auto entries = metrics::live(LiveKind::kVersionEntry);
  {
    const Config cfg = small_config(2);
    MvccEngine e(cfg, initial(cfg));
    SnapshotView v = e.open_view();
    for (int i = 0; i < 20; ++i) commit_edge(e, i % 9, (i * 5) % 9, i % 3 == 0);
    SnapshotView w = e.open_view();
    for (int i = 0; i < 20; ++i) commit_edge(e, i % 9, (i * 7) % 9, true);
  }
  CHECK(metrics::live(LiveKind::kSnapshot) == snaps);
  CHECK(metrics::live(LiveKind::kVersionEntry) == entries);
}
