#pragma once

#include <cstddef>
#include <cstdint>

namespace mvgraph {

/// Allocation interface for tree nodes and leaves.
class BlockPool {
 public:
  virtual ~BlockPool() = default;
  virtual void* allocate(std::size_t bytes) = 0;
  virtual void deallocate(void* p, std::size_t bytes) noexcept = 0;
  virtual const char* name() const noexcept = 0;
};

enum class PoolKind { kCaching, kPassThrough };

/// The process-wide pool used by cart and clustered_index nodes.
BlockPool& block_pool() noexcept;

/// Switches the process-wide pool. Only legal while no pooled block is live;
/// throws std::logic_error otherwise.
void use_block_pool(PoolKind kind);

PoolKind active_pool_kind() noexcept;

/// Counting wrappers around block_pool(); these feed metrics::live_bytes().
void* pool_allocate(std::size_t bytes);
void pool_deallocate(void* p, std::size_t bytes) noexcept;

}  // namespace mvgraph
