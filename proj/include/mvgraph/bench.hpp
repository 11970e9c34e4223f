#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mvgraph/core.hpp"
#include "mvgraph/store.hpp"

namespace mvgraph::bench {

// ---------------------------------------------------------------------------
// Graph input

enum class GraphKind { kUniform, kPowerLaw };

GraphKind parse_kind(const std::string& s);

/// Deterministic edge stream for (kind, n, avg_degree, seed). Self loops and
/// duplicates are dropped, so the stream may hold slightly fewer than
/// n * avg_degree edges.
std::vector<Edge> gen_graph(GraphKind kind, VertexId n, double avg_degree, std::uint64_t seed,
                            bool weights = false);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// "u v" or "u v w" per line; '#' starts a comment line.
std::vector<Edge> read_edge_list(std::istream& in, VertexId max_vertices);
std::vector<Edge> read_edge_list_file(const std::string& path, VertexId max_vertices);
void write_edge_list(std::ostream& out, const std::vector<Edge>& edges);

struct LoadOptions {
  bool undirected = false;
  std::size_t batch = 4096;
};

/// Inserts edges in batched transactions (both directions when undirected).
/// Returns the number of insert operations issued.
std::uint64_t load_edges(GraphStore& s, const std::vector<Edge>& edges, LoadOptions o);

// ---------------------------------------------------------------------------
// Reports

/// Flat list of named values plus the resolved configuration.
struct Report {
  std::string mode;
  nlohmann::ordered_json config;
  std::vector<std::pair<std::string, nlohmann::ordered_json>> metrics;

  void add(const std::string& name, nlohmann::ordered_json v) {
    metrics.emplace_back(name, std::move(v));
  }
  const nlohmann::ordered_json* find(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

/// Column header of the CSV form.
inline constexpr const char* kCsvHeader = "mode,name,value";

void write_report(std::ostream& out, const std::vector<Report>& reports, const std::string& format);

nlohmann::ordered_json config_json(const Config& c);

// ---------------------------------------------------------------------------
// Measurements

struct FillingRatio {
  std::uint64_t cart_vertices = 0;
  std::uint64_t entries = 0;
  std::uint64_t leaves = 0;
  double cart = 0;              // entries / (leaves * B)
  double segment_baseline = 0;  // one entry per slot of a 256-wide last-level node
  double single_baseline = 0;   // one entry per B-slot leaf
};

/// Over the C-ART vertices of the newest versions; call while quiescent.
FillingRatio filling_ratio(const GraphStore& s);

struct MemoryStats {
  std::int64_t live_bytes = 0;
  std::int64_t cart_leaves = 0;
  std::int64_t cart_inner = 0;
  std::int64_t ci_leaves = 0;
  std::int64_t ci_inner = 0;
  std::int64_t snapshots = 0;
  std::int64_t version_entries = 0;
  std::int64_t rss_bytes = -1;  // informative; -1 when unavailable
};

MemoryStats memory_stats();

// ---------------------------------------------------------------------------
// Workloads

struct Workload {
  Config cfg;
  std::vector<Edge> edges;
  bool undirected = false;
  unsigned threads = 1;
  unsigned readers = 0;
  unsigned writers = 1;
  std::size_t batch = 1;
  std::uint64_t seed = 1;
  std::uint64_t ops = 100000;
  std::string kernels = "bfs,pr,sssp,wcc,tc";
  std::vector<std::uint32_t> sizes;  // partition sizes or batch sizes
  std::uint32_t grow_log2 = 16;
  double seconds = 2.0;  // duration of timed concurrent runs
  // Drop wall-clock metrics so that reports are byte-stable.
  bool deterministic = false;
};

/// Throws ConfigError for conflicting settings (e.g. readers + writers > threads).
void validate(const Workload& w, const std::string& mode);

Report run_insert(const Workload& w);
Report run_update(const Workload& w);
std::vector<Report> run_ops(const Workload& w);
Report run_analytics(const Workload& w);
Report run_concurrent(const Workload& w);
std::vector<Report> run_batch(const Workload& w);
Report run_grow(const Workload& w);
std::vector<Report> run_sweep_partition(const Workload& w);
Report run_stats(const Workload& w);

struct GrowPoint {
  std::uint32_t degree;
  double search_ns;
  double insert_ns;
};

/// Grows one vertex to 2^max_log2 neighbours, timing searches at each power
/// of two from 2^4 up.
std::vector<GrowPoint> grow_curve(const Config& cfg, std::uint32_t max_log2, std::uint64_t seed,
                                  std::uint32_t probes = 20000);

}  // namespace mvgraph::bench
