#pragma once

#include "kdvb/grid.hpp"

#include <iosfwd>
#include <string>

namespace kdvb {

/// CSV with header `t,x,value`, one row per (level, node), levels in order.
/// Nodes run over 0..N so the pinned glue values appear explicitly.
void write_field_csv(std::ostream &os, const Field &f, const SpatialGrid &g,
                     const TimeGrid &tg);
void write_field_csv(const std::string &path, const Field &f,
                     const SpatialGrid &g, const TimeGrid &tg);

/// Binary layout: int64 levels, int64 nodes (N+1), then levels*nodes
/// little-endian doubles, row-major by time.
void write_field_binary(std::ostream &os, const Field &f);
void write_field_binary(const std::string &path, const Field &f);

/// Reads the binary layout back; the boundary columns are dropped.
Field read_field_binary(std::istream &is);
Field read_field_binary(const std::string &path);

} // namespace kdvb
