#include <fstream>
#include <iostream>
#include <limits>
#include <memory>

#include <CLI11.hpp>

#include "mvgraph/bench.hpp"

using namespace mvgraph;
using namespace mvgraph::bench;

namespace {

struct Args {
  std::string graph;
  std::string gen_kind = "power-law";
  std::uint32_t gen_n = 10000;
  double avg_degree = 16;
  bool weights = false;
  std::string report;
  std::string format = "json";
  std::string out;
  Workload w;
};

void common_flags(CLI::App* sub, Args& a) {
  Config& c = a.w.cfg;
  sub->add_option("--graph", a.graph, "edge-list file ('u v [w]' per line)");
  sub->add_option("--gen", a.gen_kind, "generator when --graph is absent: uniform | power-law")
      ->capture_default_str();
  sub->add_option("--n", a.gen_n, "generated vertex count")->capture_default_str();
  sub->add_option("--avg-degree", a.avg_degree, "generated average out-degree")
      ->capture_default_str();
  sub->add_option("--max-vertices", c.max_vertices, "vertex ID capacity (default: input size)");
  sub->add_option("--partition-size", c.partition_size)->capture_default_str();
  sub->add_option("--leaf-capacity", c.leaf_capacity)->capture_default_str();
  sub->add_option("--tracer-slots", c.tracer_slots)->capture_default_str();
  sub->add_option("--promote-threshold", c.promote_threshold)->capture_default_str();
  sub->add_option("--threads", a.w.threads)->capture_default_str();
  sub->add_option("--readers", a.w.readers)->capture_default_str();
  sub->add_option("--writers", a.w.writers)->capture_default_str();
  sub->add_option("--batch", a.w.batch)->capture_default_str();
  sub->add_option("--seed", a.w.seed)->capture_default_str();
  sub->add_flag("--undirected", a.w.undirected, "store both directions of every edge");
  sub->add_flag("--weights", a.weights, "keep edge weights");
  sub->add_option("--report", a.report, "write the report here instead of stdout");
  sub->add_option("--format", a.format, "json | csv")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  sub->add_flag("--deterministic", a.w.deterministic, "omit wall-clock metrics");
}

// Resolves the input graph and fills in max_vertices when it was not given.
void prepare(Args& a, bool max_given) {
  Config& c = a.w.cfg;
  c.weights_enabled = a.weights;
  if (!a.graph.empty()) {
    a.w.edges = read_edge_list_file(a.graph, max_given ? c.max_vertices : std::numeric_limits<VertexId>::max());
    if (!max_given) {
      VertexId top = 0;
      for (const Edge& e : a.w.edges) top = std::max({top, e.src + 1, e.dst + 1});
      c.max_vertices = std::max<VertexId>(top, 1);
    }
  } else {
    a.w.edges = gen_graph(parse_kind(a.gen_kind), a.gen_n, a.avg_degree, a.w.seed, a.weights);
    if (!max_given) c.max_vertices = a.gen_n;
    if (a.gen_n > c.max_vertices) throw ConfigError("--n exceeds --max-vertices");
  }
}

int emit(const Args& a, const std::vector<Report>& reports) {
  if (a.report.empty()) {
    write_report(std::cout, reports, a.format);
  } else {
    std::ofstream f(a.report);
    if (!f) throw std::runtime_error("cannot write " + a.report);
    write_report(f, reports, a.format);
  }
  for (const Report& r : reports) {
    const auto* ok = r.find("invariants_ok");
    if (ok && !ok->get<bool>()) {
      std::cerr << "invariant violation in " << r.mode << '\n';
      return 2;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-version dynamic graph store: loader and benchmarks"};
  app.require_subcommand(1);
  Args a;

  std::vector<std::pair<CLI::App*, std::string>> verbs;
  auto verb = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    common_flags(s, a);
    verbs.emplace_back(s, name);
    return s;
  };
  verb("load", "load a graph and print its statistics");
  CLI::App* gen = verb("gen", "write a generated edge list");
  gen->add_option("--out", a.out, "output file (default stdout)");
  verb("bench-insert", "edge insertion throughput");
  verb("bench-update", "delete and re-insert 20% of the edges, 5 rounds");
  CLI::App* ops = verb("bench-ops", "search and scan latency (general, low, high degree)");
  ops->add_option("--ops", a.w.ops)->capture_default_str();
  CLI::App* an = verb("bench-analytics", "BFS, PageRank, SSSP, WCC, triangle counting");
  an->add_option("--kernels", a.w.kernels)->capture_default_str();
  CLI::App* conc = verb("bench-concurrent", "PageRank readers alongside update writers");
  conc->add_option("--seconds", a.w.seconds, "duration of each phase")->capture_default_str();
  CLI::App* batch = verb("bench-batch", "insert throughput per batch size");
  batch->add_option("--sizes", a.w.sizes, "batch sizes");
  CLI::App* grow = verb("bench-grow", "search latency while one vertex grows");
  grow->add_option("--grow-log2", a.w.grow_log2)->capture_default_str();
  CLI::App* sweep = verb("sweep-partition", "partition size sweep");
  sweep->add_option("--sizes", a.w.sizes, "partition sizes");
  verb("stats", "structure statistics and filling ratio");

  CLI11_PARSE(app, argc, argv);

  try {
    std::string mode;
    bool max_given = false;
    for (auto& [s, name] : verbs)
      if (s->parsed()) {
        mode = name;
        max_given = s->count("--max-vertices") > 0;
      }
    if (mode == "bench-grow") {
      // One synthetic vertex; no input graph.
      a.w.cfg.weights_enabled = a.weights;
      if (!max_given) a.w.cfg.max_vertices = VertexId{2} << a.w.grow_log2;
      return emit(a, {run_grow(a.w)});
    }
    prepare(a, max_given);
    if (mode == "gen") {
      if (a.out.empty()) {
        write_edge_list(std::cout, a.w.edges);
      } else {
        std::ofstream f(a.out);
        if (!f) throw std::runtime_error("cannot write " + a.out);
        write_edge_list(f, a.w.edges);
      }
      return 0;
    }
    if (mode == "load" || mode == "stats") {
      Report r = run_stats(a.w);
      r.mode = mode;
      return emit(a, {r});
    }
    if (mode == "bench-insert") return emit(a, {run_insert(a.w)});
    if (mode == "bench-update") return emit(a, {run_update(a.w)});
    if (mode == "bench-ops") return emit(a, run_ops(a.w));
    if (mode == "bench-analytics") return emit(a, {run_analytics(a.w)});
    if (mode == "bench-concurrent") return emit(a, {run_concurrent(a.w)});
    if (mode == "bench-batch") return emit(a, run_batch(a.w));
    if (mode == "sweep-partition") return emit(a, run_sweep_partition(a.w));
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
