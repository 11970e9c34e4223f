#include "mvgraph/block_pool.hpp"

#include <array>
#include <atomic>
#include <bit>
#include <new>
#include <stdexcept>

#include "mvgraph/instrument.hpp"

namespace mvgraph {
namespace {

class PassThroughPool final : public BlockPool {
 public:
  void* allocate(std::size_t bytes) override { return ::operator new(bytes); }
  void deallocate(void* p, std::size_t) noexcept override { ::operator delete(p); }
  const char* name() const noexcept override { return "pass-through"; }
};

// Power-of-two size classes from 16 B to 64 KiB. Each thread keeps a private
// free list per class; overflow goes to a shared lock-free stack which a
// thread drains wholesale when its private list runs dry. Only whole-list
// exchange is used for removal, so the shared stacks have no ABA hazard.
class CachingPool final : public BlockPool {
 public:
  static constexpr int kClasses = 13;
  static constexpr std::size_t kMinBlock = 16;
  static constexpr std::size_t kMaxBlock = kMinBlock << (kClasses - 1);
  static constexpr std::uint32_t kLocalLimit = 128;

  struct FreeBlock {
    FreeBlock* next;
  };

  struct LocalCache {
    std::array<FreeBlock*, kClasses> heads{};
    std::array<std::uint32_t, kClasses> counts{};
    CachingPool* owner = nullptr;

    ~LocalCache() {
      if (owner == nullptr) return;
      for (int c = 0; c < kClasses; ++c) {
        if (heads[c] != nullptr) owner->push_shared(c, heads[c]);
      }
    }
  };

  void* allocate(std::size_t bytes) override {
    if (bytes > kMaxBlock) return ::operator new(bytes);
    const int c = size_class(bytes);
    LocalCache& local = cache();
    if (local.heads[c] == nullptr) refill(local, c);
    if (FreeBlock* b = local.heads[c]) {
      local.heads[c] = b->next;
      if (local.counts[c] > 0) --local.counts[c];
      return b;
    }
    return ::operator new(kMinBlock << c);
  }

  void deallocate(void* p, std::size_t bytes) noexcept override {
    if (bytes > kMaxBlock) {
      ::operator delete(p);
      return;
    }
    const int c = size_class(bytes);
    LocalCache& local = cache();
    auto* b = static_cast<FreeBlock*>(p);
    b->next = local.heads[c];
    local.heads[c] = b;
    if (++local.counts[c] > kLocalLimit) {
      // Hand the newest kLocalLimit / 2 blocks to the shared stack. Cutting
      // at the head keeps the walk short even after a refill brought in a
      // long list.
      FreeBlock* spill = local.heads[c];
      FreeBlock* cut = spill;
      for (std::uint32_t i = 1; i < kLocalLimit / 2; ++i) cut = cut->next;
      local.heads[c] = cut->next;
      cut->next = nullptr;
      local.counts[c] -= kLocalLimit / 2;
      push_shared(c, spill);
    }
  }

  const char* name() const noexcept override { return "caching"; }

 private:
  static int size_class(std::size_t bytes) {
    const std::size_t rounded = std::bit_ceil(bytes < kMinBlock ? kMinBlock : bytes);
    return std::countr_zero(rounded) - std::countr_zero(kMinBlock);
  }

  LocalCache& cache() {
    thread_local LocalCache local;
    local.owner = this;
    return local;
  }

  void push_shared(int c, FreeBlock* first) noexcept {
    FreeBlock* last = first;
    while (last->next != nullptr) last = last->next;
    FreeBlock* old = shared_[c].load(std::memory_order_relaxed);
    do {
      last->next = old;
    } while (!shared_[c].compare_exchange_weak(old, first, std::memory_order_release,
                                               std::memory_order_relaxed));
  }

  void refill(LocalCache& local, int c) {
    FreeBlock* list = shared_[c].exchange(nullptr, std::memory_order_acquire);
    // counts[] is a lower bound on the list length; the list may be long.
    std::uint32_t n = 0;
    for (FreeBlock* b = list; b != nullptr && n < kLocalLimit / 2; b = b->next) ++n;
    local.heads[c] = list;
    local.counts[c] = n;
  }

  std::array<std::atomic<FreeBlock*>, kClasses> shared_{};
};

// Both pools live for the whole process; thread-local caches may outlive
// static destruction order otherwise.
CachingPool* caching_pool() {
  static auto* pool = new CachingPool;
  return pool;
}

PassThroughPool* pass_through_pool() {
  static auto* pool = new PassThroughPool;
  return pool;
}

std::atomic<BlockPool*> g_active{nullptr};
std::atomic<PoolKind> g_kind{PoolKind::kCaching};
std::atomic<std::int64_t> g_live_blocks{0};

}  // namespace

BlockPool& block_pool() noexcept {
  BlockPool* p = g_active.load(std::memory_order_acquire);
  if (p == nullptr) {
    BlockPool* fresh = caching_pool();
    if (g_active.compare_exchange_strong(p, fresh)) p = fresh;
  }
  return *p;
}

void use_block_pool(PoolKind kind) {
  if (g_live_blocks.load() != 0)
    throw std::logic_error("cannot switch block pool while blocks are live");
  g_active.store(kind == PoolKind::kCaching ? static_cast<BlockPool*>(caching_pool())
                                            : static_cast<BlockPool*>(pass_through_pool()));
  g_kind.store(kind);
}

PoolKind active_pool_kind() noexcept { return g_kind.load(); }

void* pool_allocate(std::size_t bytes) {
  void* p = block_pool().allocate(bytes);
  g_live_blocks.fetch_add(1, std::memory_order_relaxed);
  metrics::add_live_bytes(static_cast<std::int64_t>(bytes));
  return p;
}

void pool_deallocate(void* p, std::size_t bytes) noexcept {
  block_pool().deallocate(p, bytes);
  g_live_blocks.fetch_sub(1, std::memory_order_relaxed);
  metrics::add_live_bytes(-static_cast<std::int64_t>(bytes));
}

}  // namespace mvgraph
