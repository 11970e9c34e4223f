#include "mvgraph/core.hpp"

namespace mvgraph {

void Config::validate() const {
  if (partition_size < 1) throw ConfigError("partition_size must be >= 1");
  if (leaf_capacity < 2 || leaf_capacity > 65536)
    throw ConfigError("leaf_capacity must be in [2, 65536]");
  if (tracer_slots < 1) throw ConfigError("tracer_slots must be >= 1");
  if (max_vertices < 1) throw ConfigError("max_vertices must be >= 1");
  if (intersect_ratio_threshold < 1)
    throw ConfigError("intersect_ratio_threshold must be >= 1");
  if (initial_vertices && *initial_vertices > max_vertices)
    throw ConfigError("initial_vertices exceeds max_vertices");
  if (ci_leaf_fanout < 4 || ci_inner_fanout < 4)
    throw ConfigError("clustered index fanouts must be >= 4");
  if (ci_leaf_fanout > 65535 || ci_inner_fanout > 65535)
    throw ConfigError("clustered index fanouts must be < 65536");
}

PartitionId partition_of(VertexId u, const Config& cfg) {
  if (u >= cfg.max_vertices)
    throw RangeError("vertex " + std::to_string(u) + " >= max_vertices " +
                     std::to_string(cfg.max_vertices));
  return PartitionId{u / cfg.partition_size};
}

}  // namespace mvgraph
