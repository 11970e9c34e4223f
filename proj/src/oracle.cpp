#include "mvgraph/oracle.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace mvgraph::oracle {

Adjacency::Adjacency(VertexId max_vertices, VertexId present_below)
    : present(max_vertices, 0), out(max_vertices) {
  for (VertexId u = 0; u < std::min(max_vertices, present_below); ++u) present[u] = 1;
}

ScanChecksum Adjacency::checksum() const {
  ScanChecksum c;
  for (VertexId u = 0; u < out.size(); ++u)
    for (const auto& [v, w] : out[u]) c.add(u, v);
  return c;
}

std::vector<std::pair<VertexId, Weight>> Adjacency::neighbors(VertexId u) const {
  return {out.at(u).begin(), out.at(u).end()};
}

namespace {

struct Undo {
  enum class What { kEdgeAdded, kEdgeRemoved, kFlag } what;
  VertexId u, v;
  Weight w;
  char flag;
};

void rollback(Adjacency& g, std::vector<Undo>& undo) {
  for (auto it = undo.rbegin(); it != undo.rend(); ++it) {
    switch (it->what) {
      case Undo::What::kEdgeAdded:
        g.out[it->u].erase(it->v);
        --g.edges;
        break;
      case Undo::What::kEdgeRemoved:
        g.out[it->u].emplace(it->v, it->w);
        ++g.edges;
        break;
      case Undo::What::kFlag:
        g.present[it->u] = it->flag;
        break;
    }
  }
}

}  // namespace

std::vector<VertexId> apply_batch(Adjacency& g, std::span<const UpdateOp> ops, bool weights) {
  const VertexId n = static_cast<VertexId>(g.present.size());
  std::vector<Undo> undo;
  std::vector<VertexId> changed;
  try {
    for (const UpdateOp& op : ops) {
      if (op.u >= n) throw RangeError("source out of range");
      const bool edge_op =
          op.kind == UpdateOp::Kind::kInsertEdge || op.kind == UpdateOp::Kind::kDeleteEdge;
      if (edge_op && op.v >= n) throw RangeError("destination out of range");
      if (edge_op && !g.present[op.u]) throw VertexNotFound(op.u);
      auto& nb = g.out[op.u];
      switch (op.kind) {
        case UpdateOp::Kind::kInsertEdge: {
          const Weight w = weights ? op.w : 0;
          if (nb.emplace(op.v, w).second) {
            ++g.edges;
            undo.push_back({Undo::What::kEdgeAdded, op.u, op.v, w, 0});
            changed.push_back(op.u);
          }
          break;
        }
        case UpdateOp::Kind::kDeleteEdge: {
          auto it = nb.find(op.v);
          if (it != nb.end()) {
            undo.push_back({Undo::What::kEdgeRemoved, op.u, op.v, it->second, 0});
            nb.erase(it);
            --g.edges;
            changed.push_back(op.u);
          }
          break;
        }
        case UpdateOp::Kind::kInsertVertex:
          if (!g.present[op.u]) {
            undo.push_back({Undo::What::kFlag, op.u, 0, 0, 0});
            g.present[op.u] = 1;
            changed.push_back(op.u);
          }
          break;
        case UpdateOp::Kind::kDeleteVertexLocal:
          if (!g.present[op.u]) break;
          if (!nb.empty()) throw ProtocolError("vertex still has edges");
          undo.push_back({Undo::What::kFlag, op.u, 0, 0, 1});
          g.present[op.u] = 0;
          changed.push_back(op.u);
          break;
      }
    }
  } catch (...) {
    rollback(g, undo);
    throw;
  }
  return changed;
}

// ---------------------------------------------------------------------------
// SerialStore

SerialStore::SerialStore(VertexId max_vertices, VertexId present_below, bool weights)
    : max_vertices_(max_vertices),
      present_below_(present_below),
      weights_(weights),
      cur_(max_vertices, present_below) {}

void SerialStore::apply(std::span<const UpdateOp> batch, Timestamp t) {
  if (!log_.empty() && t <= log_.back().first)
    throw std::invalid_argument("timestamp " + std::to_string(t) + " is not after " +
                                std::to_string(log_.back().first));
  apply_batch(cur_, batch, weights_);
  log_.emplace_back(t, std::vector<UpdateOp>(batch.begin(), batch.end()));
}

Adjacency SerialStore::state_at(Timestamp t) const {
  Adjacency g(max_vertices_, present_below_);
  for (const auto& [ts, ops] : log_) {
    if (ts > t) break;
    apply_batch(g, ops, weights_);
  }
  return g;
}

void SerialStore::for_each_state(std::span<const Timestamp> cuts,
                                 const std::function<void(Timestamp, const Adjacency&)>& f) const {
  Adjacency g(max_vertices_, present_below_);
  std::size_t i = 0;
  for (Timestamp cut : cuts) {
    while (i < log_.size() && log_[i].first <= cut) apply_batch(g, log_[i++].second, weights_);
    f(cut, g);
  }
}

// ---------------------------------------------------------------------------
// Histories

const char* kind_name(Event::Kind k) {
  switch (k) {
    case Event::Kind::kBegin: return "begin";
    case Event::Kind::kCommit: return "commit";
    case Event::Kind::kEnd: return "end";
    case Event::Kind::kRegister: return "register";
    case Event::Kind::kObserve: return "observe";
    case Event::Kind::kUnregister: return "unregister";
    case Event::Kind::kChainSample: return "chain";
  }
  return "?";
}

namespace {

Event::Kind kind_from(const std::string& s) {
  for (auto k : {Event::Kind::kBegin, Event::Kind::kCommit, Event::Kind::kEnd,
                 Event::Kind::kRegister, Event::Kind::kObserve, Event::Kind::kUnregister,
                 Event::Kind::kChainSample})
    if (s == kind_name(k)) return k;
  throw std::invalid_argument("unknown event kind '" + s + "'");
}

}  // namespace

Event& EventLog::add(Event::Kind kind, Timestamp ts) {
  Event& e = events_.emplace_back();
  e.seq = seq_->fetch_add(1);
  e.kind = kind;
  e.actor = actor_;
  e.ts = ts;
  return e;
}

History History::merge(HistoryHeader h, std::vector<EventLog>& logs) {
  History out;
  out.header = h;
  for (EventLog& l : logs)
    std::move(l.events().begin(), l.events().end(), std::back_inserter(out.events));
  std::sort(out.events.begin(), out.events.end(),
            [](const Event& a, const Event& b) { return a.seq < b.seq; });
  return out;
}

void History::write_ndjson(std::ostream& os) const {
  using nlohmann::json;
  os << json{{"type", "header"},
             {"max_vertices", header.max_vertices},
             {"partition_size", header.partition_size},
             {"tracer_slots", header.tracer_slots},
             {"present_below", header.present_below},
             {"weights", header.weights}}
            .dump()
     << '\n';
  for (const Event& e : events) {
    json j{{"seq", e.seq}, {"kind", kind_name(e.kind)}, {"actor", e.actor}, {"ts", e.ts}};
    switch (e.kind) {
      case Event::Kind::kCommit: {
        json ops = json::array();
        for (const UpdateOp& op : e.ops)
          ops.push_back({static_cast<int>(op.kind), op.u, op.v, op.w});
        j["ops"] = std::move(ops);
        break;
      }
      case Event::Kind::kObserve:
        j["edges"] = e.edge_count;
        j["checksum"] = e.checksum;
        j["versions"] = e.version_ts;
        break;
      case Event::Kind::kChainSample:
        j["partition"] = e.partition;
        j["length"] = e.length;
        break;
      default:
        break;
    }
    os << j.dump() << '\n';
  }
}

History History::read_ndjson(std::istream& is) {
  using nlohmann::json;
  History h;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.value("type", "") == "header") {
        h.header.max_vertices = j.at("max_vertices");
        h.header.partition_size = j.at("partition_size");
        h.header.tracer_slots = j.at("tracer_slots");
        h.header.present_below = j.at("present_below");
        h.header.weights = j.at("weights");
        have_header = true;
        continue;
      }
      Event e;
      e.seq = j.at("seq");
      e.kind = kind_from(j.at("kind"));
      e.actor = j.at("actor");
      e.ts = j.at("ts");
      if (e.kind == Event::Kind::kCommit)
        for (const auto& op : j.at("ops")) {
          const int k = op.at(0);
          if (k < 0 || k > 3) throw std::invalid_argument("bad op kind");
          e.ops.push_back({static_cast<UpdateOp::Kind>(k), op.at(1), op.at(2), op.at(3)});
        }
      if (e.kind == Event::Kind::kObserve) {
        e.edge_count = j.at("edges");
        e.checksum = j.at("checksum");
        e.version_ts = j.at("versions").get<std::vector<Timestamp>>();
      }
      if (e.kind == Event::Kind::kChainSample) {
        e.partition = j.at("partition");
        e.length = j.at("length");
      }
      h.events.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const std::invalid_argument& ex) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!have_header) throw std::invalid_argument("history has no header line");
  return h;
}

Verdict check_history(const History& h) {
  Verdict v;
  const HistoryHeader& hd = h.header;
  if (hd.partition_size == 0 || hd.max_vertices == 0) {
    v.ok = false;
    v.message = "malformed header";
    return v;
  }
  const std::uint32_t parts = (hd.max_vertices + hd.partition_size - 1) / hd.partition_size;

  auto fail = [&](std::uint64_t seq, std::string msg) {
    if (v.ok || seq < *v.seq) {
      v.ok = false;
      v.seq = seq;
      v.message = std::move(msg);
    }
  };

  std::vector<const Event*> commits, observes;
  for (const Event& e : h.events) {
    if (e.kind == Event::Kind::kCommit) commits.push_back(&e);
    if (e.kind == Event::Kind::kObserve) observes.push_back(&e);
    if (e.kind == Event::Kind::kChainSample && e.length > hd.tracer_slots + 1)
      fail(e.seq, "chain of partition " + std::to_string(e.partition) + " has length " +
                      std::to_string(e.length) + " > k + 1");
  }
  v.commits = commits.size();
  v.observations = observes.size();

  std::sort(commits.begin(), commits.end(),
            [](const Event* a, const Event* b) { return a->ts < b->ts; });
  for (std::size_t i = 0; i < commits.size(); ++i)
    if (commits[i]->ts != i + 1) {
      fail(commits[i]->seq, "commit timestamp " + std::to_string(commits[i]->ts) +
                                " where " + std::to_string(i + 1) + " was expected");
      break;
    }

  std::stable_sort(observes.begin(), observes.end(),
                   [](const Event* a, const Event* b) { return a->ts < b->ts; });
  Adjacency g(hd.max_vertices, hd.present_below);
  std::vector<Timestamp> last_change(parts, 0);
  std::size_t ci = 0;
  for (const Event* o : observes) {
    while (ci < commits.size() && commits[ci]->ts <= o->ts) {
      const Event* c = commits[ci++];
      try {
        for (VertexId u : apply_batch(g, c->ops, hd.weights))
          last_change[u / hd.partition_size] = c->ts;
      } catch (const std::exception& ex) {
        fail(c->seq, std::string("committed batch rejected by the serial store: ") + ex.what());
      }
    }
    if (!commits.empty() && o->ts > commits.back()->ts) {
      fail(o->seq, "reader start " + std::to_string(o->ts) + " is after the last commit");
      continue;
    }
    if (o->edge_count != g.edges || o->checksum != g.checksum().value()) {
      fail(o->seq, "reader " + std::to_string(o->actor) + " at " + std::to_string(o->ts) +
                       " saw " + std::to_string(o->edge_count) + " edges, serial state has " +
                       std::to_string(g.edges));
      continue;
    }
    if (!o->version_ts.empty()) {
      if (o->version_ts.size() != parts) {
        fail(o->seq, "observation lists " + std::to_string(o->version_ts.size()) +
                         " partitions, expected " + std::to_string(parts));
        continue;
      }
      for (std::uint32_t p = 0; p < parts; ++p)
        if (o->version_ts[p] != last_change[p]) {
          fail(o->seq, "reader at " + std::to_string(o->ts) + " used version " +
                           std::to_string(o->version_ts[p]) + " of partition " +
                           std::to_string(p) + ", expected " + std::to_string(last_change[p]));
          break;
        }
    }
  }
  return v;
}

}  // namespace mvgraph::oracle
