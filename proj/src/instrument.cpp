#include "mvgraph/instrument.hpp"

#include <array>

namespace mvgraph {
namespace {

constexpr int kKinds = static_cast<int>(LiveKind::kCount_);

std::array<std::atomic<std::int64_t>, kKinds> g_live{};
std::atomic<std::int64_t> g_live_bytes{0};
std::atomic<std::uint64_t> g_locks{0};
std::atomic<std::uint64_t> g_reader_locks{0};
thread_local int t_reader_depth = 0;

void note_lock() {
  g_locks.fetch_add(1, std::memory_order_relaxed);
  if (t_reader_depth > 0) g_reader_locks.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

namespace metrics {

void add_live(LiveKind kind, std::int64_t delta) noexcept {
  g_live[static_cast<int>(kind)].fetch_add(delta, std::memory_order_relaxed);
}

std::int64_t live(LiveKind kind) noexcept {
  return g_live[static_cast<int>(kind)].load(std::memory_order_relaxed);
}

std::int64_t live_total() noexcept {
  std::int64_t total = 0;
  for (const auto& c : g_live) total += c.load(std::memory_order_relaxed);
  return total;
}

void add_live_bytes(std::int64_t delta) noexcept {
  g_live_bytes.fetch_add(delta, std::memory_order_relaxed);
}

std::int64_t live_bytes() noexcept { return g_live_bytes.load(std::memory_order_relaxed); }

std::uint64_t lock_acquisitions() noexcept { return g_locks.load(); }
std::uint64_t reader_lock_acquisitions() noexcept { return g_reader_locks.load(); }

void reset_lock_counters() noexcept {
  g_locks.store(0);
  g_reader_locks.store(0);
}

bool in_reader_scope() noexcept { return t_reader_depth > 0; }

}  // namespace metrics

ReaderScope::ReaderScope() noexcept { ++t_reader_depth; }
ReaderScope::~ReaderScope() { --t_reader_depth; }

void InstrumentedMutex::lock() {
  note_lock();
  m_.lock();
}

bool InstrumentedMutex::try_lock() {
  note_lock();
  return m_.try_lock();
}

}  // namespace mvgraph
