#include "odgl/graph.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <string>

#include "odgl/error.hpp"
#include "odgl/rng.hpp"

namespace odgl {

Graph::Graph(std::uint32_t n, std::vector<Edge> edges) : n_(n), adjacency_(n) {
  for (auto& e : edges) {
    if (e.first == e.second) throw ParameterError("self-loop on node " + std::to_string(e.first));
    if (e.first >= n || e.second >= n) throw ParameterError("edge endpoint out of range");
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) throw ParameterError("duplicate edge");
  edges_ = std::move(edges);
  for (const auto& [u, v] : edges_) {
    adjacency_[u].push_back(v);
    adjacency_[v].push_back(u);
  }
  for (auto& list : adjacency_) std::sort(list.begin(), list.end());
}

bool Graph::has_edge(std::uint32_t u, std::uint32_t v) const {
  const auto& list = adjacency_[u];
  return std::binary_search(list.begin(), list.end(), v);
}

Graph Graph::relabeled(std::span<const std::uint32_t> perm) const {
  std::vector<Edge> out;
  out.reserve(edges_.size());
  for (const auto& [u, v] : edges_) out.emplace_back(perm[u], perm[v]);
  return Graph(n_, std::move(out));
}

Graph Graph::complete(std::uint32_t n) {
  std::vector<Edge> e;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j) e.emplace_back(i, j);
  return Graph(n, std::move(e));
}

Graph Graph::cycle(std::uint32_t n) {
  std::vector<Edge> e;
  for (std::uint32_t i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return Graph(n, std::move(e));
}

Graph Graph::path(std::uint32_t n) {
  std::vector<Edge> e;
  for (std::uint32_t i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(n, std::move(e));
}

Graph Graph::star(std::uint32_t leaves) {
  std::vector<Edge> e;
  for (std::uint32_t i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return Graph(leaves + 1, std::move(e));
}

Graph Graph::disjoint_union(const Graph& a, const Graph& b) {
  std::vector<Edge> e = a.edges();
  for (const auto& [u, v] : b.edges()) e.emplace_back(u + a.num_nodes(), v + a.num_nodes());
  return Graph(a.num_nodes() + b.num_nodes(), std::move(e));
}

void validate(const GenParams& params) {
  if (params.n < 3) throw ParameterError("n must be at least 3");
  if (!(params.k >= 2.0 && params.k <= static_cast<double>(params.n) - 1.0))
    throw ParameterError("k must lie in [2, n-1], got " + std::to_string(params.k));
  if (!(params.p >= 0.0 && params.p <= 1.0))
    throw ParameterError("p must lie in [0, 1], got " + std::to_string(params.p));
}

Graph generate(const GenParams& params) {
  validate(params);
  const std::uint32_t n = params.n;
  const auto e = static_cast<std::uint64_t>(std::floor(static_cast<double>(n) * params.k / 2.0));
  Rng rng(params.seed);

  std::vector<std::uint8_t> adj(static_cast<std::size_t>(n) * n, 0);
  auto connected = [&](std::uint32_t u, std::uint32_t v) { return adj[static_cast<std::size_t>(u) * n + v] != 0; };
  auto link = [&](std::uint32_t u, std::uint32_t v, std::uint8_t on) {
    adj[static_cast<std::size_t>(u) * n + v] = on;
    adj[static_cast<std::size_t>(v) * n + u] = on;
  };
  std::vector<std::uint32_t> deg(n, 0);

  // Ring lattice: each node to its floor(e/n) subsequent neighbours.
  const std::uint64_t span = e / n;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint64_t d = 1; d <= span; ++d) {
      const auto j = static_cast<std::uint32_t>((i + d) % n);
      link(i, j, 1);
      ++deg[i];
      ++deg[j];
    }

  // e mod n extra edges, each from a random node to its nearest unconnected
  // ring neighbour (forward side first on ties). Saturated nodes are skipped;
  // the pass repeats until the count is met.
  std::uint64_t extra = e % n;
  while (extra > 0) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::uint32_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::uint32_t u : order) {
      if (extra == 0) break;
      if (deg[u] + 1 >= n) continue;
      for (std::uint32_t d = 1; d <= n / 2; ++d) {
        const std::uint32_t fwd = (u + d) % n;
        const std::uint32_t bwd = (u + n - d) % n;
        std::uint32_t target = n;
        if (!connected(u, fwd)) target = fwd;
        else if (!connected(u, bwd)) target = bwd;
        if (target != n) {
          link(u, target, 1);
          ++deg[u];
          ++deg[target];
          --extra;
          break;
        }
      }
    }
  }

  std::vector<Edge> edges;
  edges.reserve(e);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (connected(i, j)) edges.emplace_back(i, j);

  // One pass of rewiring over the sorted edge snapshot: keep the lower
  // endpoint, move the other uniformly among non-neighbours.
  if (params.p > 0.0) {
    std::vector<std::uint32_t> candidates;
    candidates.reserve(n);
    for (const auto& [u, v] : std::vector<Edge>(edges)) {
      if (!rng.bernoulli(params.p)) continue;
      candidates.clear();
      for (std::uint32_t w = 0; w < n; ++w)
        if (w != u && !connected(u, w)) candidates.push_back(w);
      if (candidates.empty()) continue;
      const std::uint32_t w = candidates[rng.uniform_int(candidates.size())];
      link(u, v, 0);
      link(u, w, 1);
    }
    edges.clear();
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = i + 1; j < n; ++j)
        if (connected(i, j)) edges.emplace_back(i, j);
  }
  return Graph(n, std::move(edges));
}

GraphMeasures measures(const Graph& g) {
  GraphMeasures m;
  const std::uint32_t n = g.num_nodes();
  if (n == 0) return m;

  double deg_sum = 0.0;
  double deg_sq = 0.0;
  m.deg_min = static_cast<double>(g.degree(0));
  m.deg_max = m.deg_min;
  for (std::uint32_t v = 0; v < n; ++v) {
    const auto d = static_cast<double>(g.degree(v));
    deg_sum += d;
    m.deg_min = std::min(m.deg_min, d);
    m.deg_max = std::max(m.deg_max, d);
  }
  m.deg_avg = deg_sum / n;
  for (std::uint32_t v = 0; v < n; ++v) {
    const double d = static_cast<double>(g.degree(v)) - m.deg_avg;
    deg_sq += d * d;
  }
  m.deg_std = std::sqrt(deg_sq / n);

  // Local clustering.
  double clust_sum = 0.0;
  for (std::uint32_t v = 0; v < n; ++v) {
    const auto nb = g.neighbors(v);
    const std::size_t d = nb.size();
    if (d < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b)
        if (g.has_edge(nb[a], nb[b])) ++links;
    clust_sum += 2.0 * static_cast<double>(links) / (static_cast<double>(d) * static_cast<double>(d - 1));
  }
  m.clustering = clust_sum / n;

  // All-pairs BFS.
  std::uint64_t dist_sum = 0;
  std::uint64_t pairs = 0;
  std::vector<std::int32_t> dist(n);
  std::vector<std::uint32_t> queue(n);
  bool all_reached = true;
  for (std::uint32_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    std::size_t head = 0, tail = 0;
    queue[tail++] = s;
    while (head < tail) {
      const std::uint32_t u = queue[head++];
      for (std::uint32_t w : g.neighbors(u))
        if (dist[w] < 0) {
          dist[w] = dist[u] + 1;
          dist_sum += static_cast<std::uint64_t>(dist[w]);
          queue[tail++] = w;
        }
    }
    pairs += tail - 1;
    if (tail != n) all_reached = false;
  }
  m.connected = all_reached;
  m.avg_path_length = pairs > 0 ? static_cast<double>(dist_sum) / static_cast<double>(pairs) : 0.0;
  return m;
}

std::uint64_t triangle_count(const Graph& g) {
  std::uint64_t count = 0;
  for (const auto& [u, v] : g.edges()) {
    const auto a = g.neighbors(u);
    const auto b = g.neighbors(v);
    // common neighbours w > v
    auto ia = std::upper_bound(a.begin(), a.end(), v);
    auto ib = std::upper_bound(b.begin(), b.end(), v);
    while (ia != a.end() && ib != b.end()) {
      if (*ia < *ib) ++ia;
      else if (*ib < *ia) ++ib;
      else {
        ++count;
        ++ia;
        ++ib;
      }
    }
  }
  return count;
}

namespace {

void put_u64(std::vector<std::uint8_t>& buf, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

}  // namespace

IsoKey iso_key(const Graph& g, int wl_iters) {
  if (wl_iters < 1) throw ParameterError("wl_iters must be >= 1");
  const std::uint32_t n = g.num_nodes();
  std::vector<std::uint8_t> buf;
  put_u64(buf, n);
  put_u64(buf, g.num_edges());

  std::vector<std::uint64_t> degrees(n);
  for (std::uint32_t v = 0; v < n; ++v) degrees[v] = g.degree(v);
  std::vector<std::uint64_t> sorted = degrees;
  std::sort(sorted.begin(), sorted.end());
  for (auto d : sorted) put_u64(buf, d);
  put_u64(buf, triangle_count(g));

  // WL refinement on 64-bit colour hashes; the sorted colour multiset of each
  // round goes into the digest.
  std::vector<std::uint64_t> colors(n), next(n), scratch;
  for (std::uint32_t v = 0; v < n; ++v) colors[v] = mix64(degrees[v]);
  for (int it = 0; it < wl_iters; ++it) {
    for (std::uint32_t v = 0; v < n; ++v) {
      scratch.clear();
      for (std::uint32_t w : g.neighbors(v)) scratch.push_back(colors[w]);
      std::sort(scratch.begin(), scratch.end());
      std::uint64_t h = mix64(colors[v] ^ 0xa0761d6478bd642fULL);
      for (auto c : scratch) h = mix64(h ^ c);
      next[v] = h;
    }
    colors.swap(next);
    sorted = colors;
    std::sort(sorted.begin(), sorted.end());
    for (auto c : sorted) put_u64(buf, c);
  }

  IsoKey key{};
  unsigned int len = 0;
  if (EVP_Digest(buf.data(), buf.size(), key.data(), &len, EVP_sha512(), nullptr) != 1 || len != key.size())
    throw std::runtime_error("SHA-512 digest failed");
  return key;
}

}  // namespace odgl
