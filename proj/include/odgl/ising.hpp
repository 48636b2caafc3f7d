#pragma once

#include <cstdint>
#include <vector>

#include "odgl/graph.hpp"

namespace odgl {

/// Pairwise binary MRF over x in {-1,+1}^n with energy sum b_i x_i + sum J_ij x_i x_j.
/// J is aligned with graph.edges().
struct IsingModel {
  Graph graph;
  std::vector<double> b;
  std::vector<double> J;
};

/// Per-node p(x_i = +1).
struct Marginals {
  std::vector<double> p_plus;
};

/// b and J drawn i.i.d. from N(0, 1).
IsingModel sample_model(const Graph& g, std::uint64_t seed);

inline constexpr std::uint32_t kMaxExactNodes = 20;

/// Brute-force enumeration of all 2^n states. Throws BudgetError when n > 20.
Marginals exact_marginals(const IsingModel& m);

struct GibbsConfig {
  std::uint64_t sweeps = 20000;
  std::uint64_t burn_in = 1000;
};

/// Default Gibbs budget for a graph of n nodes.
GibbsConfig default_gibbs_budget(std::uint32_t n);

/// Systematic-scan Gibbs sampler; marginals are post-burn-in frequencies of +1.
Marginals gibbs_marginals(const IsingModel& m, std::uint64_t sweeps, std::uint64_t burn_in, std::uint64_t seed);

inline constexpr double kTargetMaeThreshold = 0.02;

double mean_abs_error(const Marginals& a, const Marginals& b);

/// True iff mean |a_i - b_i| <= 0.02.
bool accept_targets(const Marginals& a, const Marginals& b);

inline constexpr double kProbEps = 1e-7;

/// Mean over nodes of KL(target || pred) between Bernoulli variables, both
/// clamped to [1e-7, 1 - 1e-7].
double mean_kl(const Marginals& pred, const Marginals& target);

double bernoulli_kl(double target, double pred);

}  // namespace odgl
