#include "mvgraph/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <unistd.h>

#include "mvgraph/analytics.hpp"
#include "mvgraph/instrument.hpp"

namespace mvgraph::bench {

using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Wall-clock values are left out of deterministic reports.
void timing(Report& r, const Workload& w, const std::string& name, double v) {
  if (!w.deterministic) r.add(name, v);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<double> power_law_cdf(VertexId n, double exponent) {
  std::vector<double> cdf(n);
  double acc = 0;
  for (VertexId i = 0; i < n; ++i) {
    acc += std::pow(static_cast<double>(i) + 1.0, -exponent);
    cdf[i] = acc;
  }
  for (double& c : cdf) c /= acc;
  return cdf;
}

VertexId sample(const std::vector<double>& cdf, std::mt19937_64& rng) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), uniform01(rng));
  return static_cast<VertexId>(std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1));
}

Report begin_report(const std::string& mode, const Workload& w) {
  Report r;
  r.mode = mode;
  r.config = config_json(w.cfg);
  r.config["seed"] = w.seed;
  r.config["threads"] = w.threads;
  r.config["readers"] = w.readers;
  r.config["writers"] = w.writers;
  r.config["batch"] = w.batch;
  r.config["undirected"] = w.undirected;
  r.config["edges_in"] = w.edges.size();
  return r;
}

std::unique_ptr<GraphStore> loaded(const Workload& w, const Config& cfg) {
  auto s = std::make_unique<GraphStore>(cfg, StoreOptions{w.undirected});
  load_edges(*s, w.edges, {w.undirected, std::max<std::size_t>(w.batch, 4096)});
  return s;
}

std::uint64_t distinct_edges(const std::vector<Edge>& edges, bool undirected) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(edges.size() * (undirected ? 2 : 1));
  for (const Edge& e : edges) {
    seen.insert((std::uint64_t{e.src} << 32) | e.dst);
    if (undirected) seen.insert((std::uint64_t{e.dst} << 32) | e.src);
  }
  return seen.size();
}

void add_memory(Report& r) {
  const MemoryStats m = memory_stats();
  r.add("live_bytes", m.live_bytes);
  r.add("live_cart_leaves", m.cart_leaves);
  r.add("live_cart_inner", m.cart_inner);
  r.add("live_ci_leaves", m.ci_leaves);
  r.add("live_ci_inner", m.ci_inner);
}

VertexId hub(const ReadHandle& h) {
  VertexId best = 0;
  std::uint32_t deg = 0;
  for (VertexId u = 0; u < h.max_vertices(); ++u)
    if (h.present(u) && h.degree(u) > deg) {
      deg = h.degree(u);
      best = u;
    }
  return best;
}

std::vector<UpdateOp> insert_ops(const std::vector<Edge>& edges, std::size_t b, std::size_t e,
                                 bool undirected) {
  std::vector<UpdateOp> ops;
  ops.reserve((e - b) * (undirected ? 2 : 1));
  for (std::size_t i = b; i < e; ++i) {
    const Edge& x = edges[i];
    ops.push_back(UpdateOp::insert_edge(x.src, x.dst, x.weight.value_or(0)));
    if (undirected && x.src != x.dst)
      ops.push_back(UpdateOp::insert_edge(x.dst, x.src, x.weight.value_or(0)));
  }
  return ops;
}

std::vector<UpdateOp> delete_ops(const std::vector<Edge>& edges, std::size_t b, std::size_t e,
                                 bool undirected) {
  std::vector<UpdateOp> ops;
  for (std::size_t i = b; i < e; ++i) {
    ops.push_back(UpdateOp::delete_edge(edges[i].src, edges[i].dst));
    if (undirected && edges[i].src != edges[i].dst)
      ops.push_back(UpdateOp::delete_edge(edges[i].dst, edges[i].src));
  }
  return ops;
}

// Splits [0, n) over `workers` threads; each issues batches of `batch`.
double run_batches(GraphStore& s, const std::vector<Edge>& edges, unsigned workers,
                   std::size_t batch, bool undirected, bool erase) {
  workers = std::max(1u, workers);
  batch = std::max<std::size_t>(1, batch);
  const auto t0 = Clock::now();
  std::vector<std::thread> pool;
  const std::size_t chunk = (edges.size() + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      const std::size_t b = std::min(edges.size(), t * chunk);
      const std::size_t e = std::min(edges.size(), b + chunk);
      for (std::size_t i = b; i < e; i += batch) {
        const std::size_t j = std::min(e, i + batch);
        const auto ops = erase ? delete_ops(edges, i, j, undirected)
                               : insert_ops(edges, i, j, undirected);
        s.txn_write(ops);
      }
    });
  for (auto& th : pool) th.join();
  return seconds_since(t0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Input

GraphKind parse_kind(const std::string& s) {
  if (s == "uniform") return GraphKind::kUniform;
  if (s == "power-law" || s == "powerlaw") return GraphKind::kPowerLaw;
  throw ConfigError("unknown graph kind '" + s + "' (uniform | power-law)");
}

std::vector<Edge> gen_graph(GraphKind kind, VertexId n, double avg_degree, std::uint64_t seed,
                            bool weights) {
  if (n == 0) throw ConfigError("gen_graph needs n >= 1");
  std::mt19937_64 rng(seed);
  const std::uint64_t m = static_cast<std::uint64_t>(std::llround(avg_degree * n));
  std::vector<double> cdf;
  std::vector<VertexId> perm;
  if (kind == GraphKind::kPowerLaw) {
    cdf = power_law_cdf(n, 0.8);
    // Scatter the hubs over the ID space.
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (VertexId i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(m);
  std::vector<Edge> out;
  out.reserve(m);
  const std::uint64_t attempts = 4 * m + 16;
  for (std::uint64_t a = 0; a < attempts && out.size() < m; ++a) {
    VertexId u, v;
    if (kind == GraphKind::kPowerLaw) {
      u = perm[sample(cdf, rng)];
      v = perm[sample(cdf, rng)];
    } else {
      u = static_cast<VertexId>(rng() % n);
      v = static_cast<VertexId>(rng() % n);
    }
    if (u == v || !seen.insert((std::uint64_t{u} << 32) | v).second) continue;
    Edge e{u, v, std::nullopt};
    if (weights) e.weight = 1 + static_cast<Weight>(rng() % 255);
    out.push_back(e);
  }
  return out;
}

std::vector<Edge> read_edge_list(std::istream& in, VertexId max_vertices) {
  std::vector<Edge> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t p = line.find_first_not_of(" \t\r");
    if (p == std::string::npos || line[p] == '#') continue;
    std::uint64_t vals[3];
    int count = 0;
    const char* s = line.data() + p;
    const char* end = line.data() + line.size();
    while (s < end) {
      while (s < end && (*s == ' ' || *s == '\t' || *s == '\r' || *s == ',')) ++s;
      if (s == end) break;
      if (count == 3) throw ParseError(lineno, "too many fields");
      auto [next, ec] = std::from_chars(s, end, vals[count]);
      if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t' && *next != '\r' &&
                                *next != ','))
        throw ParseError(lineno, "expected an unsigned integer");
      ++count;
      s = next;
    }
    if (count < 2) throw ParseError(lineno, "expected 'u v' or 'u v w'");
    if (vals[0] >= max_vertices || vals[1] >= max_vertices)
      throw ParseError(lineno, "vertex ID >= max_vertices (" + std::to_string(max_vertices) + ")");
    Edge e{static_cast<VertexId>(vals[0]), static_cast<VertexId>(vals[1]), std::nullopt};
    if (count == 3) {
      if (vals[2] > std::numeric_limits<Weight>::max()) throw ParseError(lineno, "weight too large");
      e.weight = static_cast<Weight>(vals[2]);
    }
    out.push_back(e);
  }
  return out;
}

std::vector<Edge> read_edge_list_file(const std::string& path, VertexId max_vertices) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return read_edge_list(f, max_vertices);
}

void write_edge_list(std::ostream& out, const std::vector<Edge>& edges) {
  for (const Edge& e : edges) {
    out << e.src << ' ' << e.dst;
    if (e.weight) out << ' ' << *e.weight;
    out << '\n';
  }
}

std::uint64_t load_edges(GraphStore& s, const std::vector<Edge>& edges, LoadOptions o) {
  std::uint64_t ops = 0;
  const std::size_t batch = std::max<std::size_t>(1, o.batch);
  for (std::size_t i = 0; i < edges.size(); i += batch) {
    const auto b = insert_ops(edges, i, std::min(edges.size(), i + batch), o.undirected);
    s.txn_write(b);
    ops += b.size();
  }
  return ops;
}

// ---------------------------------------------------------------------------
// Reports

const ordered_json* Report::find(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return &v;
  return nullptr;
}

ordered_json Report::to_json() const {
  ordered_json m = ordered_json::object();
  for (const auto& [k, v] : metrics) m[k] = v;
  return ordered_json{{"mode", mode}, {"config", config}, {"metrics", m}};
}

void write_report(std::ostream& out, const std::vector<Report>& reports,
                  const std::string& format) {
  if (format == "json") {
    ordered_json all = ordered_json::array();
    for (const Report& r : reports) all.push_back(r.to_json());
    out << all.dump(2) << '\n';
  } else if (format == "csv") {
    out << kCsvHeader << '\n';
    for (const Report& r : reports)
      for (const auto& [k, v] : r.metrics)
        out << r.mode << ',' << k << ',' << (v.is_string() ? v.get<std::string>() : v.dump())
            << '\n';
  } else {
    throw ConfigError("unknown report format '" + format + "' (json | csv)");
  }
}

ordered_json config_json(const Config& c) {
  return ordered_json{{"partition_size", c.partition_size},
                      {"leaf_capacity", c.leaf_capacity},
                      {"tracer_slots", c.tracer_slots},
                      {"max_vertices", c.max_vertices},
                      {"weights_enabled", c.weights_enabled},
                      {"intersect_ratio_threshold", c.intersect_ratio_threshold},
                      {"promote_threshold", c.promote_threshold},
                      {"ci_leaf_fanout", c.ci_leaf_fanout},
                      {"ci_inner_fanout", c.ci_inner_fanout},
                      {"initial_vertices", c.present_at_open()}};
}

// ---------------------------------------------------------------------------
// Measurements

FillingRatio filling_ratio(const GraphStore& s) {
  FillingRatio f;
  const std::uint32_t B = s.config().leaf_capacity;
  std::uint64_t segments = 0;
  for (std::uint32_t p = 0; p < s.partition_count(); ++p) {
    const SnapshotRef snap = s.engine().head(PartitionId{p});
    for (std::uint32_t i = 0; i < snap->width(); ++i) {
      const VertexSlot& slot = snap->slot(snap->base() + i);
      if (slot.tag != Storage::kCart || slot.tree.empty()) continue;
      const cart::TreeStats st = slot.tree.stats();
      ++f.cart_vertices;
      f.entries += st.entries;
      f.leaves += st.leaves;
      VertexId last = 0;
      bool first = true;
      slot.tree.scan([&](VertexId v, Weight) {
        if (first || (v >> 8) != last) ++segments;
        first = false;
        last = v >> 8;
      });
    }
  }
  if (f.leaves > 0) f.cart = static_cast<double>(f.entries) / (static_cast<double>(f.leaves) * B);
  if (segments > 0) f.segment_baseline = static_cast<double>(f.entries) / (segments * 256.0);
  if (f.entries > 0) f.single_baseline = 1.0 / B;
  return f;
}

MemoryStats memory_stats() {
  MemoryStats m;
  m.live_bytes = metrics::live_bytes();
  m.cart_leaves = metrics::live(LiveKind::kCartLeaf);
  m.cart_inner = metrics::live(LiveKind::kCartInner);
  m.ci_leaves = metrics::live(LiveKind::kCiLeaf);
  m.ci_inner = metrics::live(LiveKind::kCiInner);
  m.snapshots = metrics::live(LiveKind::kSnapshot);
  m.version_entries = metrics::live(LiveKind::kVersionEntry);
  std::ifstream statm("/proc/self/statm");
  long pages = 0, resident = 0;
  if (statm >> pages >> resident) m.rss_bytes = resident * sysconf(_SC_PAGESIZE);
  return m;
}

// ---------------------------------------------------------------------------
// Workloads

void validate(const Workload& w, const std::string& mode) {
  w.cfg.validate();
  if (w.threads == 0) throw ConfigError("--threads must be >= 1");
  if (mode == "bench-concurrent") {
    if (w.readers + w.writers > w.threads)
      throw ConfigError("readers + writers (" + std::to_string(w.readers + w.writers) +
                        ") exceed --threads " + std::to_string(w.threads));
    if (w.readers == 0) throw ConfigError("bench-concurrent needs --readers >= 1");
  }
  if (w.batch == 0 || w.batch > (1u << 16)) throw ConfigError("--batch must be in [1, 65536]");
  if (w.writers == 0 && mode != "bench-concurrent") throw ConfigError("--writers must be >= 1");
}

Report run_insert(const Workload& w) {
  validate(w, "bench-insert");
  Report r = begin_report("bench-insert", w);
  std::vector<Edge> edges = w.edges;
  std::mt19937_64 rng(w.seed);
  std::shuffle(edges.begin(), edges.end(), rng);
  GraphStore s(w.cfg, StoreOptions{w.undirected});
  const double secs = run_batches(s, edges, w.writers, w.batch, w.undirected, false);
  ReadHandle h = s.read_open();
  const std::uint64_t expect = distinct_edges(edges, w.undirected);
  r.add("edges_inserted", edges.size() * (w.undirected ? 2 : 1));
  r.add("final_edge_count", h.edge_count());
  r.add("commits", s.engine().clocks().t_w.load());
  timing(r, w, "seconds", secs);
  timing(r, w, "edges_per_s", static_cast<double>(edges.size()) / std::max(secs, 1e-9));
  add_memory(r);
  r.add("invariants_ok", h.edge_count() == expect);
  return r;
}

Report run_update(const Workload& w) {
  validate(w, "bench-update");
  Report r = begin_report("bench-update", w);
  auto s = loaded(w, w.cfg);
  const std::uint64_t before = s->read_open().edge_count();
  std::mt19937_64 rng(w.seed);
  std::vector<Edge> edges = w.edges;
  const std::size_t chunk = edges.size() / 5;
  double total = 0;
  for (int round = 0; round < 5; ++round) {
    // Delete and re-insert a fresh 20% sample each round.
    std::shuffle(edges.begin(), edges.end(), rng);
    const std::vector<Edge> part(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(chunk));
    const double d = run_batches(*s, part, w.writers, w.batch, w.undirected, true);
    const double i = run_batches(*s, part, w.writers, w.batch, w.undirected, false);
    total += d + i;
    timing(r, w, "round" + std::to_string(round) + "_seconds", d + i);
  }
  const std::uint64_t after = s->read_open().edge_count();
  r.add("edges_before", before);
  r.add("edges_after", after);
  r.add("updates", 2 * 5 * chunk);
  timing(r, w, "seconds", total);
  timing(r, w, "updates_per_s", 10.0 * chunk / std::max(total, 1e-9));
  r.add("invariants_ok", before == after);
  return r;
}

std::vector<Report> run_ops(const Workload& w) {
  validate(w, "bench-ops");
  auto s = loaded(w, w.cfg);
  ReadHandle h = s->read_open();
  std::vector<std::pair<std::uint32_t, VertexId>> by_degree;
  for (VertexId u = 0; u < h.max_vertices(); ++u)
    if (h.present(u) && h.degree(u) > 0) by_degree.emplace_back(h.degree(u), u);
  std::sort(by_degree.begin(), by_degree.end());
  std::vector<Report> out;
  if (by_degree.empty()) return out;
  const std::size_t tenth = std::max<std::size_t>(1, by_degree.size() / 10);

  struct Mix {
    const char* name;
    std::size_t lo, hi;
  };
  const Mix mixes[] = {{"general", 0, by_degree.size()},
                       {"low-degree", 0, tenth},
                       {"high-degree", by_degree.size() - tenth, by_degree.size()}};
  for (const Mix& m : mixes) {
    Report r = begin_report(std::string("bench-ops/") + m.name, w);
    std::mt19937_64 rng(w.seed);
    std::vector<VertexId> sources(w.ops);
    std::vector<VertexId> targets(w.ops);
    for (std::uint64_t i = 0; i < w.ops; ++i) {
      sources[i] = by_degree[m.lo + rng() % (m.hi - m.lo)].second;
      targets[i] = static_cast<VertexId>(rng() % h.max_vertices());
    }
    std::uint64_t hits = 0;
    auto t0 = Clock::now();
    for (std::uint64_t i = 0; i < w.ops; ++i) hits += h.search(sources[i], targets[i]).found;
    const double search_s = seconds_since(t0);
    std::uint64_t scanned = 0;
    t0 = Clock::now();
    for (std::uint64_t i = 0; i < w.ops; ++i) h.scan(sources[i], [&](VertexId, Weight) { ++scanned; });
    const double scan_s = seconds_since(t0);
    r.add("ops", w.ops);
    r.add("search_hits", hits);
    r.add("scanned_edges", scanned);
    timing(r, w, "search_ns", 1e9 * search_s / std::max<std::uint64_t>(1, w.ops));
    timing(r, w, "scan_ns", 1e9 * scan_s / std::max<std::uint64_t>(1, w.ops));
    timing(r, w, "scan_edges_per_s", scanned / std::max(scan_s, 1e-9));
    r.add("invariants_ok", true);
    out.push_back(std::move(r));
  }
  return out;
}

Report run_analytics(const Workload& w) {
  validate(w, "bench-analytics");
  Report r = begin_report("bench-analytics", w);
  auto s = loaded(w, w.cfg);
  ReadHandle h = s->read_open();
  const VertexId src = hub(h);
  const analytics::Options o{w.threads};
  r.add("source", src);
  std::stringstream list(w.kernels);
  std::string k;
  while (std::getline(list, k, ',')) {
    if (k == "bfs") {
      const auto b = analytics::bfs(h, src, o);
      r.add("bfs_reached", std::count_if(b.values.begin(), b.values.end(),
                                         [](auto d) { return d != analytics::kUnreached; }));
      timing(r, w, "bfs_seconds", b.seconds);
    } else if (k == "pr") {
      const auto p = analytics::pagerank(h, 10, 0.85, o);
      r.add("pr_max", *std::max_element(p.values.begin(), p.values.end()));
      timing(r, w, "pr_seconds", p.seconds);
    } else if (k == "sssp") {
      const auto d = analytics::sssp(h, src, o);
      std::uint64_t reached = 0, sum = 0;
      for (auto x : d.values)
        if (x != analytics::kInfinity) ++reached, sum += x;
      r.add("sssp_reached", reached);
      r.add("sssp_distance_sum", sum);
      timing(r, w, "sssp_seconds", d.seconds);
    } else if (k == "wcc") {
      const auto c = analytics::wcc(h, o);
      r.add("wcc_components", std::set<VertexId>(c.values.begin(), c.values.end()).size());
      timing(r, w, "wcc_seconds", c.seconds);
    } else if (k == "tc") {
      if (!w.undirected) {
        r.add("tc_skipped", "needs --undirected");
        continue;
      }
      const auto t = analytics::triangle_count(h, cart::IntersectStrategy::kAuto, o);
      r.add("tc_triangles", t.triangles);
      timing(r, w, "tc_seconds", t.seconds);
    } else if (!k.empty()) {
      throw ConfigError("unknown kernel '" + k + "' (bfs, pr, sssp, wcc, tc)");
    }
  }
  r.add("invariants_ok", true);
  return r;
}

Report run_concurrent(const Workload& w) {
  validate(w, "bench-concurrent");
  Report r = begin_report("bench-concurrent", w);
  auto s = loaded(w, w.cfg);
  std::uint64_t chain_over = 0;
  const std::uint32_t bound = w.cfg.tracer_slots + 1;

  auto readers_pass = [&](bool with_writers) {
    std::atomic<bool> stop{false};
    std::atomic<std::uint64_t> pr_runs{0}, writes{0};
    std::atomic<double> pr_time{0};
    std::vector<std::thread> pool;
    const auto t0 = Clock::now();
    const auto deadline = t0 + std::chrono::duration<double>(w.seconds);
    for (unsigned i = 0; i < w.readers; ++i)
      pool.emplace_back([&] {
        do {
          ReadHandle h = s->read_open();
          const auto p = analytics::pagerank(h);
          double cur = pr_time.load();
          while (!pr_time.compare_exchange_weak(cur, cur + p.seconds)) {
          }
          ++pr_runs;
        } while (Clock::now() < deadline);
      });
    if (with_writers)
      for (unsigned i = 0; i < w.writers; ++i)
        pool.emplace_back([&, i] {
          std::mt19937_64 rng(w.seed + i);
          while (!stop.load()) {
            const Edge& e = w.edges[rng() % w.edges.size()];
            s->txn_write({UpdateOp::delete_edge(e.src, e.dst)});
            s->txn_write({UpdateOp::insert_edge(e.src, e.dst, e.weight.value_or(0))});
            writes += 2;
          }
        });
    for (unsigned i = 0; i < w.readers; ++i) pool[i].join();
    stop.store(true);
    for (std::size_t i = w.readers; i < pool.size(); ++i) pool[i].join();
    return std::tuple(pr_runs.load(), pr_time.load(), writes.load(), seconds_since(t0));
  };

  s->engine().set_chain_hook([&](PartitionId, std::uint32_t len) {
    if (len > bound) ++chain_over;
  });
  const auto [solo_runs, solo_time, solo_writes, solo_s] = readers_pass(false);
  metrics::reset_lock_counters();
  const auto [runs, time, writes, secs] = w.edges.empty() || w.writers == 0
                                              ? readers_pass(false)
                                              : readers_pass(true);
  const std::uint64_t reader_locks = metrics::reader_lock_acquisitions();
  const ChainStats cs = s->engine().chain_stats();
  s->engine().set_chain_hook(nullptr);
  (void)solo_writes;
  (void)solo_s;

  const double solo_ms = 1e3 * solo_time / std::max<std::uint64_t>(1, solo_runs);
  const double mixed_ms = 1e3 * time / std::max<std::uint64_t>(1, runs);
  r.add("pr_runs", runs);
  r.add("writes", writes);
  r.add("reader_lock_acquisitions", reader_locks);
  r.add("chain_max_length", cs.max_length);
  r.add("chain_violations", cs.violations + chain_over);
  timing(r, w, "pr_ms_readers_only", solo_ms);
  timing(r, w, "pr_ms_with_writers", mixed_ms);
  timing(r, w, "pr_slowdown", mixed_ms / std::max(solo_ms, 1e-9));
  timing(r, w, "writes_per_s", writes / std::max(secs, 1e-9));
  r.add("invariants_ok", reader_locks == 0 && cs.violations == 0 && chain_over == 0);
  return r;
}

std::vector<Report> run_batch(const Workload& w) {
  validate(w, "bench-batch");
  std::vector<std::uint32_t> sizes = w.sizes;
  if (sizes.empty()) sizes = {1, 16, 256, 4096, 65536};
  std::vector<Report> out;
  for (std::uint32_t b : sizes) {
    if (b == 0 || b > (1u << 16)) throw ConfigError("batch sizes must be in [1, 65536]");
    Workload x = w;
    x.batch = b;
    Report r = begin_report("bench-batch", x);
    GraphStore s(w.cfg, StoreOptions{w.undirected});
    const double secs = run_batches(s, w.edges, w.writers, b, w.undirected, false);
    const std::uint64_t count = s.read_open().edge_count();
    r.add("batch", b);
    r.add("final_edge_count", count);
    timing(r, w, "seconds", secs);
    timing(r, w, "edges_per_s", w.edges.size() / std::max(secs, 1e-9));
    r.add("invariants_ok", count == distinct_edges(w.edges, w.undirected));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GrowPoint> grow_curve(const Config& cfg, std::uint32_t max_log2, std::uint64_t seed,
                                  std::uint32_t probes) {
  const std::uint64_t need = std::uint64_t{1} << max_log2;
  if (cfg.max_vertices < 2 * need)
    throw ConfigError("bench-grow needs max_vertices >= 2^(grow_log2 + 1)");
  GraphStore s(cfg);
  std::mt19937_64 rng(seed);
  // Random distinct neighbours of vertex 0.
  std::vector<VertexId> nbrs(cfg.max_vertices - 1);
  std::iota(nbrs.begin(), nbrs.end(), 1);
  for (std::size_t i = 0; i < need; ++i)
    std::swap(nbrs[i], nbrs[i + rng() % (nbrs.size() - i)]);
  nbrs.resize(need);

  std::vector<GrowPoint> out;
  std::size_t inserted = 0;
  volatile std::uint64_t sink = 0;
  for (std::uint32_t lg = 4; lg <= max_log2; ++lg) {
    const std::size_t target = std::size_t{1} << lg;
    const auto t0 = Clock::now();
    const std::size_t from = inserted;
    for (; inserted < target; ++inserted) s.txn_write({UpdateOp::insert_edge(0, nbrs[inserted])});
    const double ins = seconds_since(t0);

    ReadHandle h = s.read_open();
    std::vector<VertexId> keys(probes);
    for (auto& k : keys)
      k = rng() % 2 ? nbrs[rng() % target] : static_cast<VertexId>(rng() % cfg.max_vertices);
    double best = 1e300;
    for (int trial = 0; trial < 5; ++trial) {
      std::uint64_t hits = 0;
      const auto t1 = Clock::now();
      for (VertexId k : keys) hits += h.search(0, k).found;
      best = std::min(best, seconds_since(t1));
      sink = sink + hits;
    }
    out.push_back({static_cast<std::uint32_t>(target), 1e9 * best / probes,
                   1e9 * ins / std::max<std::size_t>(1, inserted - from)});
  }
  return out;
}

Report run_grow(const Workload& w) {
  validate(w, "bench-grow");
  Report r = begin_report("bench-grow", w);
  Config c = w.cfg;
  c.max_vertices = std::max<VertexId>(c.max_vertices, VertexId{2} << w.grow_log2);
  r.config["max_vertices"] = c.max_vertices;
  r.config["grow_log2"] = w.grow_log2;
  const auto curve = grow_curve(c, w.grow_log2, w.seed);
  for (const GrowPoint& p : curve) {
    timing(r, w, "search_ns_deg" + std::to_string(p.degree), p.search_ns);
    timing(r, w, "insert_ns_deg" + std::to_string(p.degree), p.insert_ns);
  }
  if (!curve.empty())
    timing(r, w, "search_ratio_last_first", curve.back().search_ns / curve.front().search_ns);
  r.add("points", curve.size());
  r.add("invariants_ok", true);
  return r;
}

std::vector<Report> run_sweep_partition(const Workload& w) {
  validate(w, "sweep-partition");
  std::vector<std::uint32_t> sizes = w.sizes;
  if (sizes.empty()) sizes = {1, 4, 16, 64, 256, 1024};
  std::vector<Report> out;
  for (std::uint32_t ps : sizes) {
    Workload x = w;
    x.cfg.partition_size = ps;
    validate(x, "sweep-partition");
    Report r = begin_report("sweep-partition", x);
    GraphStore s(x.cfg, StoreOptions{w.undirected});
    const double secs = run_batches(s, w.edges, w.writers, w.batch, w.undirected, false);
    ReadHandle h = s.read_open();
    r.add("partition_size", ps);
    r.add("partitions", s.partition_count());
    r.add("final_edge_count", h.edge_count());
    timing(r, w, "insert_seconds", secs);
    timing(r, w, "edges_per_s", w.edges.size() / std::max(secs, 1e-9));
    if (h.edge_count() > 0) timing(r, w, "pr_seconds", analytics::pagerank(h).seconds);
    const std::uint64_t count = h.edge_count();
    h.close();  // the tracer may have a single slot
    const auto t0 = Clock::now();
    for (int i = 0; i < 100; ++i) s.read_open();
    timing(r, w, "view_us", 1e6 * seconds_since(t0) / 100);
    r.add("live_bytes", metrics::live_bytes());
    r.add("invariants_ok", count == distinct_edges(w.edges, w.undirected));
    out.push_back(std::move(r));
  }
  return out;
}

Report run_stats(const Workload& w) {
  validate(w, "stats");
  Report r = begin_report("stats", w);
  auto s = loaded(w, w.cfg);
  const SubgraphStats st = s->stats();
  const FillingRatio f = filling_ratio(*s);
  r.add("edges", st.edges);
  r.add("cart_vertices", st.cart_vertices);
  r.add("clustered_vertices", st.clustered_vertices);
  r.add("cart_entries", st.cart.entries);
  r.add("cart_leaves", st.cart.leaves);
  r.add("cart_bitmap_leaves", st.cart.bitmap_leaves);
  r.add("cart_n4", st.cart.inner[0]);
  r.add("cart_n16", st.cart.inner[1]);
  r.add("cart_n48", st.cart.inner[2]);
  r.add("cart_n256", st.cart.inner[3]);
  r.add("ci_entries", st.ci.entries);
  r.add("ci_leaves", st.ci.leaves);
  r.add("ci_inner", st.ci.inner);
  r.add("filling_ratio", f.cart);
  r.add("filling_segment_baseline", f.segment_baseline);
  r.add("filling_single_baseline", f.single_baseline);
  add_memory(r);
  const MemoryStats m = memory_stats();
  if (!w.deterministic) r.add("rss_bytes", m.rss_bytes);
  r.add("invariants_ok", st.edges == distinct_edges(w.edges, w.undirected));
  return r;
}

}  // namespace mvgraph::bench
