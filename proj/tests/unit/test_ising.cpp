#include <doctest.h>

#include <cmath>

#include "odgl/error.hpp"
#include "odgl/graph.hpp"
#include "odgl/ising.hpp"
#include "odgl/rng.hpp"
#include "oracles.hpp"

using namespace odgl;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

IsingModel single(double b) { return {Graph(1, {}), {b}, {}}; }

}  // namespace

TEST_CASE("model sampling is seeded standard normal") {
  const Graph g = generate({16, 6.0, 0.3, 1});
  const auto a = sample_model(g, 9), b = sample_model(g, 9);
  CHECK(a.b == b.b);
  CHECK(a.J == b.J);
  CHECK(a.b.size() == 16);
  CHECK(a.J.size() == g.num_edges());

  const Graph big = Graph::complete(100);  // 4950 couplings + 100 biases per draw
  double sum = 0, sq = 0;
  std::size_t count = 0;
  for (std::uint64_t s = 0; count < 100000; ++s) {
    const auto m = sample_model(big, s);
    for (double x : m.b) sum += x, sq += x * x, ++count;
    for (double x : m.J) sum += x, sq += x * x, ++count;
  }
  const double mean = sum / count;
  CHECK(std::abs(mean) <= 0.02);
  CHECK(std::abs(sq / count - mean * mean - 1.0) <= 0.03);
}

TEST_CASE("exact marginals of one and two spins") {
  CHECK(exact_marginals(single(0.0)).p_plus[0] == doctest::Approx(0.5));
  CHECK(exact_marginals(single(0.7)).p_plus[0] == doctest::Approx(sigmoid(1.4)).epsilon(1e-14));
  const IsingModel two{Graph(2, {{0, 1}}), {0.0, 0.0}, {1.3}};
  const auto p = exact_marginals(two).p_plus;
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
}

TEST_CASE("exact marginals match the direct-summation oracle") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto n = static_cast<std::uint32_t>(4 + rng.uniform_int(9));
    const Graph g = generate({n, 2.0 + rng.uniform() * (n - 3.0), rng.uniform(), rng.next_u64()});
    const auto m = sample_model(g, rng.next_u64());
    const auto a = exact_marginals(m).p_plus;
    const auto b = oracle::ising_marginals(m);
    for (std::uint32_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-10);
  }
}

TEST_CASE("exact enumeration budget") {
  const IsingModel m = sample_model(Graph::cycle(21), 1);
  CHECK_THROWS_AS(exact_marginals(m), BudgetError);
}

TEST_CASE("negating biases mirrors the marginals") {
  const Graph g = generate({12, 4.0, 0.5, 3});
  auto m = sample_model(g, 5);
  const auto p = exact_marginals(m).p_plus;
  for (auto& b : m.b) b = -b;
  const auto q = exact_marginals(m).p_plus;
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(std::abs(std::abs(p[i] - 0.5) - std::abs(q[i] - 0.5)) <= 1e-12);
    CHECK(p[i] + q[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("large energies stay finite") {
  // Scaling every parameter pushes raw weights far past double range; the
  // log-sum-exp must keep results in [0, 1].
  const Graph g = generate({14, 5.0, 0.2, 2});
  auto m = sample_model(g, 6);
  for (auto& b : m.b) b *= 400;
  for (auto& j : m.J) j *= 400;
  for (double p : exact_marginals(m).p_plus) {
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("gibbs on independent and single spins") {
  const Graph g = generate({10, 3.0, 0.0, 0});
  IsingModel zero{g, std::vector<double>(10, 0.0), std::vector<double>(g.num_edges(), 0.0)};
  for (double p : gibbs_marginals(zero, 10000, 100, 3).p_plus) CHECK(std::abs(p - 0.5) <= 0.01);
  CHECK(std::abs(gibbs_marginals(single(1.0), 100000, 100, 4).p_plus[0] - sigmoid(2.0)) <= 0.01);
}

TEST_CASE("gibbs at the default budget meets the 0.02 rule on 16 nodes") {
  const auto budget = default_gibbs_budget(16);
  int ok = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Graph g = generate({16, 4.0 + s, 0.3, s});
    const auto m = sample_model(g, 100 + s);
    ok += accept_targets(gibbs_marginals(m, budget.sweeps, budget.burn_in, s), exact_marginals(m));
  }
  CHECK(ok >= 4);
}

TEST_CASE("gibbs error shrinks as sweeps grow") {
  double short_err = 0, long_err = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = sample_model(generate({16, 5.0, 0.4, s}), s + 50);
    const auto exact = exact_marginals(m);
    short_err += mean_abs_error(gibbs_marginals(m, 500, 50, s), exact);
    long_err += mean_abs_error(gibbs_marginals(m, 8000, 50, s), exact);
  }
  CHECK(long_err < short_err);
}

TEST_CASE("acceptance rule boundary") {
  const Marginals a{{0.2, 0.4, 0.6}};
  CHECK(accept_targets(a, a));
  CHECK_FALSE(accept_targets(a, Marginals{{0.23, 0.43, 0.63}}));
  CHECK(accept_targets(Marginals{{0.5, 0.5}}, Marginals{{0.52, 0.52}}));
  CHECK_FALSE(accept_targets(Marginals{{0.5, 0.5}}, Marginals{{0.5201, 0.5201}}));
  CHECK_THROWS(accept_targets(a, Marginals{{0.5}}));
}

TEST_CASE("mean KL") {
  Marginals p{{0.3, 0.9}};
  CHECK(mean_kl(p, p) == doctest::Approx(0.0).epsilon(1e-15));
  // The target is clamped to 1 - 1e-7, which shifts the value by about 1.7e-6.
  CHECK(std::abs(mean_kl(Marginals{{0.5}}, Marginals{{1.0}}) - std::log(2.0)) <= 2e-6);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double t = rng.uniform(), q = rng.uniform();
    const double direct = t * std::log(t / q) + (1 - t) * std::log((1 - t) / (1 - q));
    CHECK(std::abs(bernoulli_kl(t, q) - direct) <= 1e-12);
  }
  CHECK(std::isfinite(mean_kl(Marginals{{0.0}}, Marginals{{1.0}})));
}
