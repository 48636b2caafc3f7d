#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace odgl {

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Undirected simple graph on nodes 0..n-1.
///
/// Edges are stored once with first < second, sorted lexicographically;
/// adjacency lists are sorted and always consistent with the edge list.
class Graph {
 public:
  Graph() = default;
  /// Builds from an arbitrary edge list. Throws ParameterError on self-loops,
  /// duplicates or out-of-range endpoints.
  Graph(std::uint32_t n, std::vector<Edge> edges);

  std::uint32_t num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const std::uint32_t> neighbors(std::uint32_t v) const { return adjacency_[v]; }
  std::size_t degree(std::uint32_t v) const { return adjacency_[v].size(); }
  bool has_edge(std::uint32_t u, std::uint32_t v) const;

  /// Image of the graph under node relabeling v -> perm[v].
  Graph relabeled(std::span<const std::uint32_t> perm) const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.n_ == b.n_ && a.edges_ == b.edges_; }

  // Common shapes used by tests and examples.
  static Graph complete(std::uint32_t n);
  static Graph cycle(std::uint32_t n);
  static Graph path(std::uint32_t n);
  static Graph star(std::uint32_t leaves);
  /// Disjoint union; nodes of b are shifted by a.num_nodes().
  static Graph disjoint_union(const Graph& a, const Graph& b);

 private:
  std::uint32_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::uint32_t>> adjacency_;
};

/// Parameters of the relaxed Watts-Strogatz generator.
struct GenParams {
  std::uint32_t n = 16;
  double k = 4.0;  ///< target average degree
  double p = 0.0;  ///< rewiring probability
  std::uint64_t seed = 0;
};

/// Throws ParameterError unless 2 <= k <= n-1 and 0 <= p <= 1.
void validate(const GenParams& params);

/// Relaxed Watts-Strogatz graph with exactly floor(n*k/2) edges.
Graph generate(const GenParams& params);

struct GraphMeasures {
  double avg_path_length = 0.0;
  double clustering = 0.0;
  double deg_avg = 0.0;
  double deg_max = 0.0;
  double deg_min = 0.0;
  double deg_std = 0.0;
  bool connected = false;

  std::array<double, 6> as_array() const {
    return {avg_path_length, clustering, deg_avg, deg_max, deg_min, deg_std};
  }
};

/// The six structural measures plus the connectivity flag.
///
/// Path length is averaged over ordered reachable pairs only; a graph with no
/// reachable pair reports 0. Clustering is the mean local coefficient over
/// all nodes, with degree < 2 nodes contributing 0.
GraphMeasures measures(const Graph& g);

/// Number of triangles.
std::uint64_t triangle_count(const Graph& g);

using IsoKey = std::array<std::uint8_t, 64>;

/// Conservative isomorphism filter: isomorphic graphs always collide, the
/// converse can fail on some regular graphs.
IsoKey iso_key(const Graph& g, int wl_iters = 3);

}  // namespace odgl
