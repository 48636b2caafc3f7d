#include "odgl/graph_theory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "odgl/error.hpp"
#include "odgl/rng.hpp"

namespace odgl {

std::vector<std::int32_t> sssp(const Graph& g, std::uint32_t source) {
  const std::uint32_t n = g.num_nodes();
  if (source >= n) throw ParameterError("source node out of range");
  std::vector<std::int32_t> dist(n, -1);
  std::vector<std::uint32_t> queue;
  queue.reserve(n);
  dist[source] = 0;
  queue.push_back(source);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::uint32_t u = queue[head];
    for (std::uint32_t w : g.neighbors(u))
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
  }
  return dist;
}

bool is_connected(const Graph& g) {
  if (g.num_nodes() == 0) return true;
  const auto d = sssp(g, 0);
  return std::none_of(d.begin(), d.end(), [](std::int32_t x) { return x < 0; });
}

std::vector<std::int32_t> eccentricity_all(const Graph& g) {
  const std::uint32_t n = g.num_nodes();
  if (!is_connected(g)) return std::vector<std::int32_t>(n, -1);
  std::vector<std::int32_t> ecc(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    const auto d = sssp(g, v);
    ecc[v] = *std::max_element(d.begin(), d.end());
  }
  return ecc;
}

std::int32_t diameter(const Graph& g) {
  const auto ecc = eccentricity_all(g);
  if (ecc.empty()) return -1;
  return *std::max_element(ecc.begin(), ecc.end());
}

std::vector<double> laplacian_features(const Graph& g, std::span<const double> x) {
  if (x.size() != g.num_nodes()) throw ParameterError("feature length does not match node count");
  std::vector<double> out(x.size());
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
    double acc = static_cast<double>(g.degree(v)) * x[v];
    for (std::uint32_t w : g.neighbors(v)) acc -= x[w];
    out[v] = acc;
  }
  return out;
}

double spectral_radius_dense(const Graph& g) {
  const std::uint32_t n = g.num_nodes();
  if (n == 0) return 0.0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [u, v] : g.edges()) a(u, v) = a(v, u) = 1.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("dense eigensolver failed");
  return std::max(0.0, solver.eigenvalues()(n - 1));
}

double spectral_radius(const Graph& g, const SpectralOptions& opts) {
  const std::uint32_t n = g.num_nodes();
  if (n == 0) throw ParameterError("spectral_radius needs at least one node");
  if (g.num_edges() == 0) return 0.0;

  // The +I shift separates lambda_max from -lambda_max on bipartite graphs.
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n))), y(n);
  double prev = 0.0, prev_diff = 0.0;
  int bad_ratio = 0;
  for (std::uint32_t it = 0; it < opts.max_iter; ++it) {
    for (std::uint32_t v = 0; v < n; ++v) {
      double acc = x[v];
      for (std::uint32_t w : g.neighbors(v)) acc += x[w];
      y[v] = acc;
    }
    double rq = 0.0, norm2 = 0.0;
    for (std::uint32_t v = 0; v < n; ++v) {
      rq += x[v] * y[v];
      norm2 += y[v] * y[v];
    }
    const double lambda = rq - 1.0;  // x has unit norm
    const double norm = std::sqrt(norm2);
    for (std::uint32_t v = 0; v < n; ++v) x[v] = y[v] / norm;

    if (it > 0) {
      const double diff = std::abs(lambda - prev);
      if (it > 1 && prev_diff > 0.0) {
        const double ratio = diff / prev_diff;
        if (ratio >= 1.0 && diff > opts.tol) ++bad_ratio;
        if (diff < opts.tol && (ratio < 1.0 ? diff * ratio / (1.0 - ratio) < opts.tol : diff == 0.0)) return lambda;
      } else if (diff == 0.0) {
        return lambda;
      }
      prev_diff = diff;
    }
    prev = lambda;
    if (bad_ratio > 50) break;
  }
  if (n > opts.dense_limit) throw NumericError("power iteration did not converge and dense fallback is disabled");
  return spectral_radius_dense(g);
}

TaskFeatures make_features(const Graph& g, std::uint64_t seed) {
  const std::uint32_t n = g.num_nodes();
  if (n == 0) throw ParameterError("make_features needs at least one node");
  Rng rng(derive_seed(seed, {0x6774686572ULL}));
  TaskFeatures f;
  f.source = static_cast<std::uint32_t>(rng.uniform_int(n));
  f.source_onehot.assign(n, 0.0);
  f.source_onehot[f.source] = 1.0;
  f.scalar.resize(n);
  for (auto& s : f.scalar) s = rng.uniform();
  return f;
}

MultiTaskTarget multitask_targets(const Graph& g, const TaskFeatures& f) {
  MultiTaskTarget t;
  t.sssp = sssp(g, f.source);
  t.ecc = eccentricity_all(g);
  t.lapfeat = laplacian_features(g, f.scalar);
  t.connected = is_connected(g);
  t.diameter = t.connected && !t.ecc.empty() ? *std::max_element(t.ecc.begin(), t.ecc.end()) : -1;
  t.spectral_radius = spectral_radius(g);
  return t;
}

}  // namespace odgl
