#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odgl/error.hpp"
#include "odgl/graph.hpp"
#include "odgl/rng.hpp"
#include "oracles.hpp"

using namespace odgl;

namespace {

bool is_simple(const Graph& g) {
  for (const auto& [u, v] : g.edges())
    if (u >= v || v >= g.num_nodes()) return false;
  return std::adjacent_find(g.edges().begin(), g.edges().end()) == g.edges().end();
}

std::vector<std::uint32_t> random_perm(std::uint32_t n, Rng& rng) {
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::uint32_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.uniform_int(i)]);
  return p;
}

}  // namespace

TEST_CASE("graph construction rejects bad edges") {
  CHECK_THROWS_AS(Graph(3, {{0, 0}}), ParameterError);
  CHECK_THROWS_AS(Graph(3, {{0, 1}, {1, 0}}), ParameterError);
  CHECK_THROWS_AS(Graph(3, {{0, 3}}), ParameterError);
  const Graph g(4, {{2, 1}, {0, 3}});
  CHECK(g.edges() == std::vector<Edge>{{0, 3}, {1, 2}});
  CHECK(g.has_edge(1, 2));
  CHECK(g.has_edge(2, 1));
  CHECK_FALSE(g.has_edge(0, 1));
}

TEST_CASE("adjacency is consistent with the edge list") {
  const Graph g = generate({30, 6.5, 0.4, 11});
  std::size_t deg_total = 0;
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
    const auto nb = g.neighbors(v);
    CHECK(std::is_sorted(nb.begin(), nb.end()));
    for (auto w : nb) CHECK(g.has_edge(v, w));
    deg_total += nb.size();
  }
  CHECK(deg_total == 2 * g.num_edges());
}

TEST_CASE("generator parameter validation") {
  CHECK_THROWS_AS(generate({16, 1.5, 0.0, 0}), ParameterError);
  CHECK_THROWS_AS(generate({16, 16.0, 0.0, 0}), ParameterError);
  CHECK_THROWS_AS(generate({16, 4.0, -0.1, 0}), ParameterError);
  CHECK_THROWS_AS(generate({16, 4.0, 1.1, 0}), ParameterError);
  CHECK_NOTHROW(generate({16, 14.0, 1.0, 0}));
}

TEST_CASE("k = 2 without rewiring gives the cycle") {
  const Graph g = generate({100, 2.0, 0.0, 5});
  CHECK(g == Graph::cycle(100));
  for (std::uint32_t v = 0; v < 100; ++v) CHECK(g.degree(v) == 2);
}

TEST_CASE("k = n - 1 gives the complete graph") {
  const Graph g = generate({16, 15.0, 0.0, 1});
  CHECK(g.num_edges() == 120);
  CHECK(g == Graph::complete(16));
}

TEST_CASE("edge count is floor(n k / 2)") {
  CHECK(generate({100, 5.5, 0.3, 7}).num_edges() == 275);
  Rng rng(99);
  for (int t = 0; t < 500; ++t) {
    const auto n = static_cast<std::uint32_t>(4 + rng.uniform_int(40));
    const double k = 2.0 + rng.uniform() * (n - 3.0);
    const double p = rng.uniform();
    const Graph g = generate({n, k, p, rng.next_u64()});
    REQUIRE(g.num_edges() == static_cast<std::size_t>(std::floor(n * k / 2.0)));
    REQUIRE(is_simple(g));
  }
}

TEST_CASE("generation is a pure function of its parameters") {
  const GenParams p{40, 7.3, 0.5, 1234};
  CHECK(generate(p) == generate(p));
  GenParams q = p;
  q.seed = 1235;
  CHECK_FALSE(generate(p) == generate(q));
}

TEST_CASE("regular lattice when the edge count divides evenly") {
  const Graph g = generate({20, 6.0, 0.0, 3});
  const auto m = measures(g);
  CHECK(m.deg_min == m.deg_max);
  CHECK(m.deg_avg == 6.0);
}

TEST_CASE("k = 4 lattice clustering is 3(k-2)/(4(k-1))") {
  for (std::uint32_t n : {10u, 16u, 30u}) {
    const Graph g = generate({n, 4.0, 0.0, 0});
    CHECK(measures(g).clustering == 0.5);
    CHECK(oracle::measures(g).clust == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("measures of small named graphs") {
  const auto k5 = measures(Graph::complete(5));
  CHECK(k5.avg_path_length == 1.0);
  CHECK(k5.clustering == 1.0);
  CHECK(k5.deg_avg == 4.0);
  CHECK(k5.deg_min == 4.0);
  CHECK(k5.deg_max == 4.0);
  CHECK(k5.deg_std == 0.0);
  CHECK(k5.connected);

  const auto c6 = measures(Graph::cycle(6));
  CHECK(c6.clustering == 0.0);
  CHECK(c6.avg_path_length == doctest::Approx(1.8).epsilon(1e-15));

  const auto star = measures(Graph::star(4));
  CHECK(star.deg_avg == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(star.deg_max == 4.0);
  CHECK(star.deg_min == 1.0);
}

TEST_CASE("disconnected and empty graphs") {
  const auto m = measures(Graph::disjoint_union(Graph::complete(3), Graph::complete(3)));
  CHECK_FALSE(m.connected);
  CHECK(m.avg_path_length == 1.0);
  const auto e = measures(Graph(4, {}));
  CHECK(e.avg_path_length == 0.0);
  CHECK(e.clustering == 0.0);
  CHECK(e.deg_avg == 0.0);
  CHECK_FALSE(e.connected);
}

TEST_CASE("measures agree with the brute-force oracle") {
  Rng rng(5);
  for (int t = 0; t < 60; ++t) {
    const auto n = static_cast<std::uint32_t>(4 + rng.uniform_int(20));
    const Graph g = generate({n, 2.0 + rng.uniform() * (n - 3.0), rng.uniform(), rng.next_u64()});
    const auto a = measures(g);
    const auto b = oracle::measures(g);
    CHECK(std::abs(a.avg_path_length - b.apl) <= 1e-10);
    CHECK(std::abs(a.clustering - b.clust) <= 1e-10);
    CHECK(std::abs(a.deg_avg - b.davg) <= 1e-10);
    CHECK(std::abs(a.deg_std - b.dstd) <= 1e-10);
    CHECK(a.deg_min == b.dmin);
    CHECK(a.deg_max == b.dmax);
    CHECK(a.connected == b.connected);
    CHECK(a.deg_avg == doctest::Approx(2.0 * g.num_edges() / n));
    CHECK(triangle_count(g) == oracle::triangles(g));
  }
}

TEST_CASE("iso_key is invariant under relabeling") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const auto n = static_cast<std::uint32_t>(5 + rng.uniform_int(20));
    const Graph g = generate({n, 2.0 + rng.uniform() * (n - 3.0), rng.uniform(), rng.next_u64()});
    const auto perm = random_perm(n, rng);
    CHECK(iso_key(g) == iso_key(g.relabeled(perm)));
  }
}

TEST_CASE("iso_key separates simple non-isomorphic pairs") {
  CHECK(iso_key(Graph::path(3)) != iso_key(Graph::cycle(3)));
  const Graph twin = Graph::disjoint_union(Graph::cycle(3), Graph::cycle(3));
  CHECK(oracle::triangles(twin) == 2);
  CHECK(oracle::triangles(Graph::cycle(6)) == 0);
  CHECK(iso_key(Graph::cycle(6)) != iso_key(twin));
  CHECK(iso_key(Graph::star(4)) != iso_key(Graph::path(5)));
}
