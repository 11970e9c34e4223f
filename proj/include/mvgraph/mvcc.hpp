#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mvgraph/core.hpp"
#include "mvgraph/instrument.hpp"
#include "mvgraph/subgraph.hpp"

namespace mvgraph {

struct Clocks {
  std::atomic<Timestamp> t_w{0};  // last assigned commit timestamp
  std::atomic<Timestamp> t_r{0};  // newest snapshot new readers may use
};

/// Fixed array of k slots recording active readers. A slot word holds the
/// status in its top bit and the start timestamp in the low 63 bits.
class ReaderTracer {
 public:
  static constexpr std::uint64_t kBusyBit = std::uint64_t{1} << 63;
  static constexpr std::uint64_t kFreeWord = kMaxTimestamp;

  struct Claim {
    std::uint32_t slot;
    Timestamp start_ts;
  };

  ReaderTracer(std::uint32_t k, TracerFullPolicy policy);

  std::uint32_t size() const { return k_; }

  /// Claims a slot stamped with the current t_r. Spins or throws
  /// TracerFullError when every slot is busy, depending on the policy.
  Claim register_reader(const std::atomic<Timestamp>& t_r);
  /// One pass over the slots; nullopt when all are busy.
  std::optional<Claim> try_register(const std::atomic<Timestamp>& t_r);
  void unregister(std::uint32_t slot);

  /// Start timestamps of the busy slots, ascending.
  std::vector<Timestamp> active() const;
  /// Smallest busy start timestamp, or kMaxTimestamp.
  Timestamp min_active() const;

  std::uint64_t word(std::uint32_t slot) const { return slots_[slot].load(); }
  bool all_free() const;

 private:
  Claim stamp(std::uint32_t slot, Timestamp ts, const std::atomic<Timestamp>& t_r);

  std::uint32_t k_;
  TracerFullPolicy policy_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> slots_;
};

struct VersionEntry {
  Timestamp ts;
  const SubgraphSnapshot* snapshot;  // one reference held by the chain
  std::atomic<VersionEntry*> next;
};

struct ChainStats {
  std::uint64_t samples = 0;
  std::uint32_t max_length = 0;
  std::uint64_t violations = 0;  // samples longer than k + 1
};

class MvccEngine;

/// Writer side of one transaction: holds the locks of its partition set
/// from construction until end() or destruction.
class WriteTxn {
 public:
  WriteTxn(WriteTxn&&) noexcept;
  WriteTxn& operator=(WriteTxn&&) = delete;
  ~WriteTxn();

  std::span<const PartitionId> partitions() const { return parts_; }
  /// Newest committed snapshot of a locked partition.
  const SubgraphSnapshot& current(PartitionId p) const;
  /// New version for a locked partition, published at commit.
  void stage(PartitionId p, SnapshotRef s);

  /// Assigns t = ++t_w, links staged versions, then advances t_r to t in
  /// commit order.
  Timestamp commit();
  /// Prunes versions on the locked chains no active reader can see.
  void gc();
  /// Unlocks. Without a prior commit the staged versions are dropped.
  void end();

  std::optional<Timestamp> commit_ts() const { return commit_ts_; }

 private:
  friend class MvccEngine;
  WriteTxn(MvccEngine& e, std::vector<PartitionId> parts);

  MvccEngine* engine_;
  std::vector<PartitionId> parts_;
  std::vector<std::pair<PartitionId, SnapshotRef>> staged_;
  std::optional<Timestamp> commit_ts_;
  bool locked_ = false;
};

/// A reader's consistent set of per-partition snapshots.
class SnapshotView {
 public:
  SnapshotView() = default;
  SnapshotView(SnapshotView&&) noexcept;
  SnapshotView& operator=(SnapshotView&&) noexcept;
  ~SnapshotView();

  Timestamp start_ts() const { return start_ts_; }
  std::uint32_t slot() const { return slot_; }
  bool valid() const { return engine_ != nullptr; }
  std::size_t partitions() const { return handles_.size(); }
  const SubgraphSnapshot& at(std::size_t p) const { return *handles_[p]; }
  /// Commit timestamp of the chosen version of partition p.
  Timestamp version_ts(std::size_t p) const { return version_ts_[p]; }

  /// Releases the handles and frees the tracer slot.
  void close();

 private:
  friend class MvccEngine;
  MvccEngine* engine_ = nullptr;
  Timestamp start_ts_ = 0;
  std::uint32_t slot_ = 0;
  std::vector<const SubgraphSnapshot*> handles_;
  std::vector<Timestamp> version_ts_;
};

class MvccEngine {
 public:
  /// Takes version 0 of every partition.
  MvccEngine(const Config& cfg, std::vector<SnapshotRef> initial);
  ~MvccEngine();
  MvccEngine(const MvccEngine&) = delete;
  MvccEngine& operator=(const MvccEngine&) = delete;

  /// Deduplicates and sorts `parts`, then locks them in ascending order.
  WriteTxn begin(std::vector<PartitionId> parts);

  /// register + build_view.
  SnapshotView open_view();

  /// Chain walk: the newest entry with ts <= start_ts. Lock-free.
  const VersionEntry* visible(PartitionId p, Timestamp start_ts) const;

  const Clocks& clocks() const { return clocks_; }
  ReaderTracer& tracer() { return tracer_; }
  const ReaderTracer& tracer() const { return tracer_; }
  std::uint32_t partition_count() const { return static_cast<std::uint32_t>(chains_.size()); }

  /// Newest snapshot. Only safe under p's lock or while no writer runs.
  SnapshotRef head(PartitionId p) const;
  std::uint32_t chain_length(PartitionId p) const;
  std::vector<Timestamp> chain_timestamps(PartitionId p) const;

  ChainStats chain_stats() const;
  /// Called after every per-chain GC with the resulting chain length.
  void set_chain_hook(std::function<void(PartitionId, std::uint32_t)> hook);

  /// Locks currently held by writers (audit).
  std::int64_t locks_held() const { return locks_held_.load(); }
  /// Chain entries unlinked but not yet freed.
  std::size_t limbo_size() const;

  const Config& config() const { return cfg_; }

 private:
  friend class WriteTxn;
  friend class SnapshotView;

  struct Chain {
    std::atomic<VersionEntry*> head{nullptr};
    std::vector<std::pair<VersionEntry*, Timestamp>> limbo;  // guarded by the partition lock
  };

  void lock(PartitionId p);
  void unlock(PartitionId p);
  void link(PartitionId p, Timestamp t, SnapshotRef s);
  void collect(PartitionId p, std::span<const Timestamp> active);
  void release_view(SnapshotView& v);

  Config cfg_;
  Clocks clocks_;
  ReaderTracer tracer_;
  std::vector<Chain> chains_;
  std::unique_ptr<InstrumentedMutex[]> locks_;
  std::atomic<std::int64_t> locks_held_{0};

  std::atomic<std::uint64_t> gc_samples_{0};
  std::atomic<std::uint32_t> max_chain_{0};
  std::atomic<std::uint64_t> violations_{0};
  std::function<void(PartitionId, std::uint32_t)> chain_hook_;
};

}  // namespace mvgraph
