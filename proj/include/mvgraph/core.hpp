#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

namespace mvgraph {

/// Dense vertex identifier. Keys are 4 bytes wide, compared big-endian.
using VertexId = std::uint32_t;
using Weight = std::uint32_t;
/// Logical clock value (commit / start timestamps).
using Timestamp = std::uint64_t;

inline constexpr int kKeyBytes = 4;
inline constexpr Timestamp kMaxTimestamp = (Timestamp{1} << 63) - 1;

struct PartitionId {
  std::uint32_t index = 0;

  friend constexpr bool operator==(PartitionId, PartitionId) = default;
  friend constexpr auto operator<=>(PartitionId, PartitionId) = default;
};

struct Edge {
  VertexId src = 0;
  VertexId dst = 0;
  std::optional<Weight> weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Errors. Range and config problems derive from the matching std types so
// callers can catch either.
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Vertex is not present in the snapshot (distinct from a missing edge).
class VertexNotFound : public std::runtime_error {
 public:
  explicit VertexNotFound(VertexId u)
      : std::runtime_error("vertex " + std::to_string(u) + " is not present"),
        vertex_(u) {}
  VertexId vertex() const noexcept { return vertex_; }

 private:
  VertexId vertex_;
};

/// A write violated a structural rule (e.g. deleting a vertex that still has edges).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TracerFullError : public std::runtime_error {
 public:
  TracerFullError() : std::runtime_error("reader tracer has no free slot") {}
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TracerFullPolicy { kSpin, kFail };

struct Config {
  std::uint32_t partition_size = 64;
  std::uint32_t leaf_capacity = 256;
  std::uint32_t tracer_slots = default_tracer_slots();
  std::uint32_t max_vertices = 1u << 20;
  bool weights_enabled = false;
  std::uint32_t intersect_ratio_threshold = 10;

  // Vertices [0, initial_vertices) are present when a store opens; the rest
  // must be created with an InsertVertex. Unset means all of them.
  std::optional<std::uint32_t> initial_vertices;
  // Degree above which a vertex moves from the clustered index into its own C-ART.
  std::uint32_t promote_threshold = 64;
  std::uint32_t ci_leaf_fanout = 64;
  std::uint32_t ci_inner_fanout = 64;
  TracerFullPolicy tracer_full = TracerFullPolicy::kSpin;

  static std::uint32_t default_tracer_slots() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
  }

  std::uint32_t present_at_open() const {
    return initial_vertices.value_or(max_vertices);
  }

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
};

constexpr std::uint32_t partition_count(std::uint32_t max_vertices,
                                        std::uint32_t partition_size) {
  return (max_vertices + partition_size - 1) / partition_size;
}

inline std::uint32_t partition_count(const Config& cfg) {
  return partition_count(cfg.max_vertices, cfg.partition_size);
}

/// Contiguous blocks of partition_size IDs form one partition.
PartitionId partition_of(VertexId u, const Config& cfg);

inline VertexId partition_base(PartitionId p, const Config& cfg) {
  return p.index * cfg.partition_size;
}

constexpr std::array<std::uint8_t, 4> byte_seq(VertexId u) {
  return {static_cast<std::uint8_t>(u >> 24), static_cast<std::uint8_t>(u >> 16),
          static_cast<std::uint8_t>(u >> 8), static_cast<std::uint8_t>(u)};
}

constexpr VertexId from_byte_seq(const std::array<std::uint8_t, 4>& b) {
  return (VertexId{b[0]} << 24) | (VertexId{b[1]} << 16) | (VertexId{b[2]} << 8) |
         VertexId{b[3]};
}

/// Byte `i` (0 = most significant) of the big-endian key.
constexpr std::uint8_t key_byte(VertexId u, unsigned i) {
  return static_cast<std::uint8_t>(u >> (8 * (3 - i)));
}

/// Mask selecting the first `len` key bytes.
constexpr VertexId prefix_mask(unsigned len) {
  return len == 0 ? 0u : (len >= 4 ? ~0u : ~0u << (8 * (4 - len)));
}

/// Number of leading key bytes shared by a and b.
constexpr unsigned common_prefix_len(VertexId a, VertexId b) {
  const VertexId x = a ^ b;
  if (x == 0) return 4;
  unsigned n = 0;
  while (key_byte(x, n) == 0) ++n;
  return n;
}

constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Deterministic SSSP weight used when the store carries no weights.
constexpr Weight fallback_weight(VertexId u, VertexId v) {
  return 1 + static_cast<Weight>(mix64((std::uint64_t{u} << 32) | v) % 255);
}

/// Order-sensitive running checksum over (u, v) pairs of a full scan.
class ScanChecksum {
 public:
  void add(VertexId u, VertexId v) {
    state_ = mix64(state_ ^ ((std::uint64_t{u} << 32) | v)) + 0x9e3779b97f4a7c15ULL;
    ++count_;
  }
  std::uint64_t value() const { return state_; }
  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t state_ = 0x243f6a8885a308d3ULL;
  std::uint64_t count_ = 0;
};

}  // namespace mvgraph
