#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "odgl/graph.hpp"

namespace odgl {

/// BFS hop distances from source; -1 marks unreachable nodes.
std::vector<std::int32_t> sssp(const Graph& g, std::uint32_t source);

/// Per-node eccentricity over reachable nodes, or -1 for every node when the
/// graph is disconnected.
std::vector<std::int32_t> eccentricity_all(const Graph& g);

/// Max eccentricity, or -1 when disconnected.
std::int32_t diameter(const Graph& g);

/// (D - A) x.
std::vector<double> laplacian_features(const Graph& g, std::span<const double> x);

bool is_connected(const Graph& g);

struct SpectralOptions {
  double tol = 1e-9;
  std::uint32_t max_iter = 100000;
  /// Largest n for which the dense fallback is allowed.
  std::uint32_t dense_limit = 2000;
};

/// Largest adjacency eigenvalue. Power iteration on the shifted matrix A + I
/// (positive start vector); on stagnation or oscillation it falls back to a
/// dense symmetric eigensolver.
double spectral_radius(const Graph& g, const SpectralOptions& opts = {});

/// Dense symmetric eigensolver route, exposed for cross-checks.
double spectral_radius_dense(const Graph& g);

struct MultiTaskTarget {
  std::vector<std::int32_t> sssp;
  std::vector<std::int32_t> ecc;
  std::vector<double> lapfeat;
  std::int32_t diameter = -1;
  double spectral_radius = 0.0;
  bool connected = false;
};

struct TaskFeatures {
  std::uint32_t source = 0;
  std::vector<double> source_onehot;
  std::vector<double> scalar;
};

/// Source node uniform over nodes, scalars i.i.d. U[0,1].
TaskFeatures make_features(const Graph& g, std::uint64_t seed);

MultiTaskTarget multitask_targets(const Graph& g, const TaskFeatures& f);

}  // namespace odgl
