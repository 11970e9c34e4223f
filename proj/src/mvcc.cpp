#include "mvgraph/mvcc.hpp"

#include <algorithm>
#include <cassert>
#include <functional>
#include <thread>

#include "mvgraph/block_pool.hpp"

namespace mvgraph {

// ---------------------------------------------------------------------------
// ReaderTracer

ReaderTracer::ReaderTracer(std::uint32_t k, TracerFullPolicy policy)
    : k_(k), policy_(policy), slots_(new std::atomic<std::uint64_t>[k]) {
  for (std::uint32_t i = 0; i < k; ++i) slots_[i].store(kFreeWord);
}

std::optional<ReaderTracer::Claim> ReaderTracer::try_register(const std::atomic<Timestamp>& t_r) {
  thread_local std::uint32_t rotor = 0;
  const std::uint32_t start = rotor++ % k_;
  for (std::uint32_t i = 0; i < k_; ++i) {
    const std::uint32_t s = (start + i) % k_;
    std::uint64_t expected = kFreeWord;
    if (slots_[s].load(std::memory_order_relaxed) != kFreeWord) continue;
    const Timestamp ts = t_r.load(std::memory_order_seq_cst);
    if (slots_[s].compare_exchange_strong(expected, kBusyBit | ts, std::memory_order_seq_cst))
      return stamp(s, ts, t_r);
  }
  return std::nullopt;
}

// A collector that scanned the slots before our claim may already have freed
// versions older than its commit. That commit is visible in t_r by the time
// we re-read it, so re-stamp with the newer value until t_r is stable.
ReaderTracer::Claim ReaderTracer::stamp(std::uint32_t slot, Timestamp ts,
                                        const std::atomic<Timestamp>& t_r) {
  while (true) {
    std::atomic_thread_fence(std::memory_order_seq_cst);
    const Timestamp now = t_r.load(std::memory_order_seq_cst);
    if (now == ts) return {slot, ts};
    ts = now;
    slots_[slot].store(kBusyBit | ts, std::memory_order_seq_cst);
  }
}

ReaderTracer::Claim ReaderTracer::register_reader(const std::atomic<Timestamp>& t_r) {
  while (true) {
    if (auto c = try_register(t_r)) return *c;
    if (policy_ == TracerFullPolicy::kFail) throw TracerFullError();
    std::this_thread::yield();
  }
}

void ReaderTracer::unregister(std::uint32_t slot) {
  assert((slots_[slot].load() & kBusyBit) != 0);
  slots_[slot].store(kFreeWord, std::memory_order_seq_cst);
}

std::vector<Timestamp> ReaderTracer::active() const {
  std::vector<Timestamp> out;
  for (std::uint32_t i = 0; i < k_; ++i) {
    const std::uint64_t w = slots_[i].load(std::memory_order_seq_cst);
    if (w & kBusyBit) out.push_back(w & ~kBusyBit);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Timestamp ReaderTracer::min_active() const {
  Timestamp m = kMaxTimestamp;
  for (std::uint32_t i = 0; i < k_; ++i) {
    const std::uint64_t w = slots_[i].load(std::memory_order_seq_cst);
    if (w & kBusyBit) m = std::min(m, w & ~kBusyBit);
  }
  return m;
}

bool ReaderTracer::all_free() const {
  for (std::uint32_t i = 0; i < k_; ++i)
    if (slots_[i].load() != kFreeWord) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Version entries

namespace {

VersionEntry* new_entry(Timestamp ts, const SubgraphSnapshot* s, VersionEntry* next) {
  auto* e = new (pool_allocate(sizeof(VersionEntry))) VersionEntry{ts, s, {next}};
  metrics::add_live(LiveKind::kVersionEntry, 1);
  return e;
}

void free_entry(VersionEntry* e) {
  e->~VersionEntry();
  pool_deallocate(e, sizeof(VersionEntry));
  metrics::add_live(LiveKind::kVersionEntry, -1);
}

}  // namespace

// ---------------------------------------------------------------------------
// WriteTxn

WriteTxn::WriteTxn(MvccEngine& e, std::vector<PartitionId> parts)
    : engine_(&e), parts_(std::move(parts)) {
  for (PartitionId p : parts_) engine_->lock(p);
  locked_ = true;
}

WriteTxn::WriteTxn(WriteTxn&& o) noexcept
    : engine_(o.engine_),
      parts_(std::move(o.parts_)),
      staged_(std::move(o.staged_)),
      commit_ts_(o.commit_ts_),
      locked_(o.locked_) {
  o.locked_ = false;
}

WriteTxn::~WriteTxn() {
  if (locked_) end();
}

const SubgraphSnapshot& WriteTxn::current(PartitionId p) const {
  assert(std::binary_search(parts_.begin(), parts_.end(), p));
  return *engine_->chains_[p.index].head.load(std::memory_order_acquire)->snapshot;
}

void WriteTxn::stage(PartitionId p, SnapshotRef s) {
  if (!std::binary_search(parts_.begin(), parts_.end(), p))
    throw ProtocolError("staging a version for an unlocked partition");
  if (commit_ts_) throw ProtocolError("transaction already committed");
  staged_.emplace_back(p, std::move(s));
}

Timestamp WriteTxn::commit() {
  if (!locked_ || commit_ts_) throw ProtocolError("commit outside an open transaction");
  Clocks& c = engine_->clocks_;
  const Timestamp t = c.t_w.fetch_add(1, std::memory_order_seq_cst) + 1;
  for (auto& [p, s] : staged_) engine_->link(p, t, std::move(s));
  staged_.clear();
  // Commits become visible strictly in timestamp order.
  while (c.t_r.load(std::memory_order_acquire) != t - 1) std::this_thread::yield();
  c.t_r.store(t, std::memory_order_seq_cst);
  commit_ts_ = t;
  return t;
}

void WriteTxn::gc() {
  if (!locked_) return;
  std::atomic_thread_fence(std::memory_order_seq_cst);
  const auto active = engine_->tracer_.active();
  for (PartitionId p : parts_) engine_->collect(p, active);
}

void WriteTxn::end() {
  if (!locked_) return;
  staged_.clear();
  for (PartitionId p : parts_) engine_->unlock(p);
  locked_ = false;
}

// ---------------------------------------------------------------------------
// SnapshotView

SnapshotView::SnapshotView(SnapshotView&& o) noexcept
    : engine_(o.engine_),
      start_ts_(o.start_ts_),
      slot_(o.slot_),
      handles_(std::move(o.handles_)),
      version_ts_(std::move(o.version_ts_)) {
  o.engine_ = nullptr;
}

SnapshotView& SnapshotView::operator=(SnapshotView&& o) noexcept {
  if (this != &o) {
    close();
    engine_ = o.engine_;
    start_ts_ = o.start_ts_;
    slot_ = o.slot_;
    handles_ = std::move(o.handles_);
    version_ts_ = std::move(o.version_ts_);
    o.engine_ = nullptr;
  }
  return *this;
}

SnapshotView::~SnapshotView() { close(); }

void SnapshotView::close() {
  if (engine_ == nullptr) return;
  engine_->release_view(*this);
  engine_ = nullptr;
}

// ---------------------------------------------------------------------------
// MvccEngine

MvccEngine::MvccEngine(const Config& cfg, std::vector<SnapshotRef> initial)
    : cfg_(cfg),
      tracer_(cfg.tracer_slots, cfg.tracer_full),
      chains_(initial.size()),
      locks_(new InstrumentedMutex[initial.size()]) {
  for (std::size_t i = 0; i < initial.size(); ++i)
    chains_[i].head.store(new_entry(0, initial[i].detach(), nullptr));
}

MvccEngine::~MvccEngine() {
  for (Chain& c : chains_) {
    VersionEntry* e = c.head.load();
    while (e != nullptr) {
      VersionEntry* next = e->next.load();
      e->snapshot->release();
      free_entry(e);
      e = next;
    }
    for (auto& [entry, r] : c.limbo) free_entry(entry);
  }
}

WriteTxn MvccEngine::begin(std::vector<PartitionId> parts) {
  std::sort(parts.begin(), parts.end());
  parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
  for (PartitionId p : parts)
    if (p.index >= chains_.size()) throw RangeError("partition out of range");
  return WriteTxn(*this, std::move(parts));
}

void MvccEngine::lock(PartitionId p) {
  locks_[p.index].lock();
  locks_held_.fetch_add(1, std::memory_order_relaxed);
}

void MvccEngine::unlock(PartitionId p) {
  locks_held_.fetch_sub(1, std::memory_order_relaxed);
  locks_[p.index].unlock();
}

void MvccEngine::link(PartitionId p, Timestamp t, SnapshotRef s) {
  Chain& c = chains_[p.index];
  VersionEntry* e = new_entry(t, s.detach(), c.head.load(std::memory_order_relaxed));
  c.head.store(e, std::memory_order_release);
}

// Entry with commit ts c and newer neighbour c' is kept iff some active
// reader started in [c, c'). The head is always kept.
void MvccEngine::collect(PartitionId p, std::span<const Timestamp> active) {
  Chain& c = chains_[p.index];
  VersionEntry* prev = c.head.load(std::memory_order_relaxed);
  VersionEntry* cur = prev->next.load(std::memory_order_relaxed);
  std::vector<VersionEntry*> unlinked;
  while (cur != nullptr) {
    const auto it = std::lower_bound(active.begin(), active.end(), cur->ts);
    const bool pinned = it != active.end() && *it < prev->ts;
    VersionEntry* next = cur->next.load(std::memory_order_relaxed);
    if (pinned) {
      prev = cur;
    } else {
      prev->next.store(next, std::memory_order_seq_cst);
      unlinked.push_back(cur);
    }
    cur = next;
  }
  if (!unlinked.empty()) {
    // Readers still walking past an unlinked entry started at or before R;
    // the entry memory is kept until all of them are gone.
    const Timestamp r = clocks_.t_r.load(std::memory_order_seq_cst);
    for (VersionEntry* e : unlinked) {
      e->snapshot->release();
      e->snapshot = nullptr;
      c.limbo.emplace_back(e, r);
    }
  }
  if (!c.limbo.empty()) {
    const Timestamp min_now = tracer_.min_active();
    std::erase_if(c.limbo, [&](const std::pair<VersionEntry*, Timestamp>& x) {
      if (x.second >= min_now) return false;
      free_entry(x.first);
      return true;
    });
  }

  std::uint32_t len = 0;
  for (VersionEntry* e = c.head.load(std::memory_order_relaxed); e; e = e->next.load()) ++len;
  gc_samples_.fetch_add(1, std::memory_order_relaxed);
  std::uint32_t m = max_chain_.load(std::memory_order_relaxed);
  while (len > m && !max_chain_.compare_exchange_weak(m, len)) {
  }
  if (len > tracer_.size() + 1) violations_.fetch_add(1, std::memory_order_relaxed);
  if (chain_hook_) chain_hook_(p, len);
}

const VersionEntry* MvccEngine::visible(PartitionId p, Timestamp start_ts) const {
  const VersionEntry* e = chains_[p.index].head.load(std::memory_order_acquire);
  while (e != nullptr && e->ts > start_ts) e = e->next.load(std::memory_order_acquire);
  assert(e != nullptr && "no visible version");
  return e;
}

SnapshotView MvccEngine::open_view() {
  ReaderScope scope;
  SnapshotView v;
  const auto claim = tracer_.register_reader(clocks_.t_r);
  v.engine_ = this;
  v.slot_ = claim.slot;
  v.start_ts_ = claim.start_ts;
  v.handles_.resize(chains_.size());
  v.version_ts_.resize(chains_.size());
  for (std::uint32_t i = 0; i < chains_.size(); ++i) {
    const VersionEntry* e = visible(PartitionId{i}, claim.start_ts);
    e->snapshot->retain();
    v.handles_[i] = e->snapshot;
    v.version_ts_[i] = e->ts;
  }
  return v;
}

void MvccEngine::release_view(SnapshotView& v) {
  ReaderScope scope;
  for (const SubgraphSnapshot* s : v.handles_) s->release();
  v.handles_.clear();
  v.version_ts_.clear();
  tracer_.unregister(v.slot_);
}

SnapshotRef MvccEngine::head(PartitionId p) const {
  const SubgraphSnapshot* s = chains_[p.index].head.load(std::memory_order_acquire)->snapshot;
  s->retain();
  return SnapshotRef::adopt(s);
}

std::uint32_t MvccEngine::chain_length(PartitionId p) const {
  std::uint32_t n = 0;
  for (const VersionEntry* e = chains_[p.index].head.load(); e; e = e->next.load()) ++n;
  return n;
}

std::vector<Timestamp> MvccEngine::chain_timestamps(PartitionId p) const {
  std::vector<Timestamp> out;
  for (const VersionEntry* e = chains_[p.index].head.load(); e; e = e->next.load())
    out.push_back(e->ts);
  return out;
}

ChainStats MvccEngine::chain_stats() const {
  return {gc_samples_.load(), max_chain_.load(), violations_.load()};
}

void MvccEngine::set_chain_hook(std::function<void(PartitionId, std::uint32_t)> hook) {
  chain_hook_ = std::move(hook);
}

std::size_t MvccEngine::limbo_size() const {
  std::size_t n = 0;
  for (const Chain& c : chains_) n += c.limbo.size();
  return n;
}

}  // namespace mvgraph
