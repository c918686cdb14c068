#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rpush/rng.hpp"

namespace rpush {

using NodeId = std::size_t;
using ArcId = std::size_t;

struct Arc {
  NodeId from;
  NodeId to;
  friend bool operator==(const Arc&, const Arc&) = default;
  friend auto operator<=>(const Arc&, const Arc&) = default;
};

/// Directed communication graph. Arcs are kept sorted lexicographically so
/// that arc ids, and with them every random draw keyed on arc order, are a
/// function of the arc set alone.
///
/// A Topology is always strongly connected and free of self-loops; the
/// constructor throws TopologyError otherwise.
class Topology {
 public:
  Topology(std::size_t n, std::vector<Arc> arcs);

  std::size_t size() const noexcept { return n_; }
  std::size_t arc_count() const noexcept { return arcs_.size(); }
  std::span<const Arc> arcs() const noexcept { return arcs_; }
  const Arc& arc(ArcId e) const { return arcs_[e]; }

  /// Arc ids leaving / entering a node, ascending by neighbor id.
  std::span<const ArcId> out_arcs(NodeId i) const { return out_[i]; }
  std::span<const ArcId> in_arcs(NodeId i) const { return in_[i]; }

  std::size_t out_degree(NodeId i) const { return out_[i].size(); }
  std::size_t in_degree(NodeId i) const { return in_[i].size(); }
  std::size_t max_out_degree() const noexcept;

  std::vector<NodeId> out_neighbors(NodeId i) const;
  std::vector<NodeId> in_neighbors(NodeId i) const;

  /// Arc id of (from, to) or arc_count() when absent.
  ArcId find_arc(NodeId from, NodeId to) const;

  friend bool operator==(const Topology& a, const Topology& b) { return a.n_ == b.n_ && a.arcs_ == b.arcs_; }

 private:
  std::size_t n_;
  std::vector<Arc> arcs_;
  std::vector<std::vector<ArcId>> out_;
  std::vector<std::vector<ArcId>> in_;
};

/// Reachability check on a raw arc list; self-loops are ignored.
bool is_strongly_connected(std::size_t n, std::span<const Arc> arcs);
inline bool is_strongly_connected(const Topology& t) { return is_strongly_connected(t.size(), t.arcs()); }

/// Ring i -> i+1 (mod n), plus i -> i-1 when bidirectional. For n = 2 the
/// bidirectional ring collapses to the two arcs of the complete graph.
Topology build_cycle(std::size_t n, bool bidirectional);

inline constexpr int kMaxGraphAttempts = 10'000;

/// Each ordered pair kept independently with probability p; the whole graph
/// is redrawn until strongly connected. Throws ConfigError after
/// kMaxGraphAttempts failed draws.
Topology build_random_strongly_connected(std::size_t n, double p, CounterRng& rng);

/// Text arc list: first line n, then "i j" per line (0-based).
void write_arc_list(std::ostream& os, const Topology& t);
Topology read_arc_list(std::istream& is);

}  // namespace rpush
