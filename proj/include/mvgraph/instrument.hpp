#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>

namespace mvgraph {

/// Kinds of objects whose live instances are counted.
enum class LiveKind : int {
  kCartInner = 0,
  kCartLeaf,
  kCiInner,
  kCiLeaf,
  kSnapshot,
  kVersionEntry,
  kCount_,
};

namespace metrics {

void add_live(LiveKind kind, std::int64_t delta) noexcept;
std::int64_t live(LiveKind kind) noexcept;
/// Sum over all kinds.
std::int64_t live_total() noexcept;

void add_live_bytes(std::int64_t delta) noexcept;
std::int64_t live_bytes() noexcept;

/// Lock acquisitions through InstrumentedMutex, all threads.
std::uint64_t lock_acquisitions() noexcept;
/// Lock acquisitions made by a thread while it was inside a ReaderScope.
std::uint64_t reader_lock_acquisitions() noexcept;
void reset_lock_counters() noexcept;

bool in_reader_scope() noexcept;

}  // namespace metrics

/// Marks the calling thread as executing reader code. Nests.
class ReaderScope {
 public:
  ReaderScope() noexcept;
  ~ReaderScope();
  ReaderScope(const ReaderScope&) = delete;
  ReaderScope& operator=(const ReaderScope&) = delete;
};

/// std::mutex that reports every acquisition to the lock counters.
class InstrumentedMutex {
 public:
  void lock();
  bool try_lock();
  void unlock() { m_.unlock(); }

 private:
  std::mutex m_;
};

}  // namespace mvgraph
