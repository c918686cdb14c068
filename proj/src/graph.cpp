#include "rpush/graph.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "rpush/errors.hpp"

namespace rpush {

namespace {

std::vector<bool> reach(std::size_t n, const std::vector<std::vector<NodeId>>& adj) {
  std::vector<bool> seen(n, false);
  std::vector<NodeId> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        stack.push_back(w);
      }
    }
  }
  return seen;
}

}  // namespace

bool is_strongly_connected(std::size_t n, std::span<const Arc> arcs) {
  if (n == 0) return false;
  std::vector<std::vector<NodeId>> fwd(n), bwd(n);
  for (const Arc& a : arcs) {
    if (a.from >= n || a.to >= n || a.from == a.to) continue;
    fwd[a.from].push_back(a.to);
    bwd[a.to].push_back(a.from);
  }
  const auto f = reach(n, fwd);
  const auto b = reach(n, bwd);
  return std::all_of(f.begin(), f.end(), [](bool x) { return x; }) &&
         std::all_of(b.begin(), b.end(), [](bool x) { return x; });
}

Topology::Topology(std::size_t n, std::vector<Arc> arcs) : n_(n), arcs_(std::move(arcs)) {
  if (n_ < 1) throw TopologyError("topology needs at least one node");
  std::sort(arcs_.begin(), arcs_.end());
  arcs_.erase(std::unique(arcs_.begin(), arcs_.end()), arcs_.end());
  for (const Arc& a : arcs_) {
    if (a.from >= n_ || a.to >= n_) throw TopologyError("arc endpoint out of range");
    if (a.from == a.to) throw TopologyError("self-loop at node " + std::to_string(a.from));
  }
  if (!is_strongly_connected(n_, arcs_)) throw TopologyError("topology is not strongly connected");
  out_.resize(n_);
  in_.resize(n_);
  for (ArcId e = 0; e < arcs_.size(); ++e) {
    out_[arcs_[e].from].push_back(e);
    in_[arcs_[e].to].push_back(e);
  }
  // in_ is filled in (from, to) order, so it is already ascending by source.
}

std::size_t Topology::max_out_degree() const noexcept {
  std::size_t d = 0;
  for (const auto& o : out_) d = std::max(d, o.size());
  return d;
}

std::vector<NodeId> Topology::out_neighbors(NodeId i) const {
  std::vector<NodeId> r;
  for (ArcId e : out_[i]) r.push_back(arcs_[e].to);
  return r;
}

std::vector<NodeId> Topology::in_neighbors(NodeId i) const {
  std::vector<NodeId> r;
  for (ArcId e : in_[i]) r.push_back(arcs_[e].from);
  return r;
}

ArcId Topology::find_arc(NodeId from, NodeId to) const {
  const Arc key{from, to};
  auto it = std::lower_bound(arcs_.begin(), arcs_.end(), key);
  if (it != arcs_.end() && *it == key) return static_cast<ArcId>(it - arcs_.begin());
  return arcs_.size();
}

Topology build_cycle(std::size_t n, bool bidirectional) {
  if (n < 2) throw TopologyError("cycle needs at least 2 nodes, got " + std::to_string(n));
  std::vector<Arc> arcs;
  for (NodeId i = 0; i < n; ++i) {
    arcs.push_back({i, (i + 1) % n});
    if (bidirectional) arcs.push_back({i, (i + n - 1) % n});
  }
  return Topology(n, std::move(arcs));
}

Topology build_random_strongly_connected(std::size_t n, double p, CounterRng& rng) {
  if (n < 2) throw TopologyError("random graph needs at least 2 nodes, got " + std::to_string(n));
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("edge probability must lie in [0, 1]");
  std::vector<Arc> arcs;
  for (int attempt = 0; attempt < kMaxGraphAttempts; ++attempt) {
    arcs.clear();
    for (NodeId i = 0; i < n; ++i) {
      for (NodeId j = 0; j < n; ++j) {
        if (i != j && rng.uniform() < p) arcs.push_back({i, j});
      }
    }
    if (is_strongly_connected(n, arcs)) return Topology(n, std::move(arcs));
  }
  std::ostringstream msg;
  msg << "no strongly connected graph after " << kMaxGraphAttempts << " draws (n=" << n << ", p=" << p << ")";
  throw ConfigError(msg.str());
}

void write_arc_list(std::ostream& os, const Topology& t) {
  os << t.size() << '\n';
  for (const Arc& a : t.arcs()) os << a.from << ' ' << a.to << '\n';
}

Topology read_arc_list(std::istream& is) {
  std::size_t n = 0;
  if (!(is >> n)) throw TopologyError("arc list: missing node count");
  std::vector<Arc> arcs;
  long long i = 0, j = 0;
  while (is >> i >> j) {
    if (i < 0 || j < 0) throw TopologyError("arc list: negative node id");
    arcs.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j)});
  }
  if (!is.eof()) throw TopologyError("arc list: malformed line");
  return Topology(n, std::move(arcs));
}

}  // namespace rpush
