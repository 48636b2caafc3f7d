#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "odgl/error.hpp"
#include "odgl/graph.hpp"
#include "odgl/graph_theory.hpp"
#include "odgl/rng.hpp"
#include "oracles.hpp"

using namespace odgl;

namespace {

Graph random_graph(Rng& rng, std::uint32_t n_min, std::uint32_t n_span) {
  const auto n = static_cast<std::uint32_t>(n_min + rng.uniform_int(n_span));
  return generate({n, 2.0 + rng.uniform() * (n - 3.0), rng.uniform(), rng.next_u64()});
}

}  // namespace

TEST_CASE("shortest paths on named graphs") {
  CHECK(sssp(Graph::cycle(6), 0) == std::vector<std::int32_t>{0, 1, 2, 3, 2, 1});
  CHECK(sssp(Graph::complete(5), 3) == std::vector<std::int32_t>{1, 1, 1, 0, 1});
  const Graph two = Graph::disjoint_union(Graph::cycle(3), Graph::cycle(3));
  CHECK(sssp(two, 0) == std::vector<std::int32_t>{0, 1, 1, -1, -1, -1});
}

TEST_CASE("shortest paths match Floyd-Warshall") {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const Graph g = random_graph(rng, 30, 25);
    const auto fw = oracle::floyd_warshall(g);
    const auto s = static_cast<std::uint32_t>(rng.uniform_int(g.num_nodes()));
    const auto d = sssp(g, s);
    for (std::uint32_t v = 0; v < g.num_nodes(); ++v) CHECK(d[v] == fw[s][v]);
    if (is_connected(g))
      for (const auto& [u, v] : g.edges()) {
        CHECK(d[v] <= d[u] + 1);
        CHECK(d[u] <= d[v] + 1);
      }
  }
}

TEST_CASE("eccentricity and diameter") {
  for (std::int32_t e : eccentricity_all(Graph::complete(6))) CHECK(e == 1);
  CHECK(diameter(Graph::complete(6)) == 1);
  for (std::int32_t e : eccentricity_all(Graph::cycle(8))) CHECK(e == 4);
  CHECK(diameter(Graph::cycle(8)) == 4);
  const Graph two = Graph::disjoint_union(Graph::cycle(3), Graph::cycle(3));
  for (std::int32_t e : eccentricity_all(two)) CHECK(e == -1);
  CHECK(diameter(two) == -1);

  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const Graph g = random_graph(rng, 8, 30);
    const auto fw = oracle::all_pairs_bfs(g);
    const auto ecc = eccentricity_all(g);
    if (!is_connected(g)) continue;
    std::int32_t diam = 0;
    for (std::uint32_t v = 0; v < g.num_nodes(); ++v) {
      const int expect = *std::max_element(fw[v].begin(), fw[v].end());
      CHECK(ecc[v] == expect);
      diam = std::max(diam, ecc[v]);
    }
    CHECK(diameter(g) == diam);
  }
}

TEST_CASE("laplacian features") {
  const Graph k3 = Graph::complete(3);
  const std::vector<double> ones(3, 1.0), e1{0.0, 1.0, 0.0};
  for (double v : laplacian_features(k3, ones)) CHECK(v == 0.0);
  CHECK(laplacian_features(k3, e1) == std::vector<double>{-1.0, 2.0, -1.0});
  CHECK_THROWS_AS(laplacian_features(k3, std::vector<double>(2)), ParameterError);

  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const Graph g = random_graph(rng, 5, 30);
    std::vector<double> x(g.num_nodes());
    for (auto& v : x) v = rng.normal();
    const auto a = oracle::adjacency_matrix(g);
    const auto lx = laplacian_features(g, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double expect = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double deg = std::count(a[i].begin(), a[i].end(), 1);
        expect += ((i == j ? deg : 0.0) - a[i][j]) * x[j];
      }
      CHECK(std::abs(lx[i] - expect) <= 1e-12);
    }
  }
}

TEST_CASE("spectral radius on named graphs") {
  CHECK(spectral_radius(Graph::complete(7)) == doctest::Approx(6.0).epsilon(1e-10));
  CHECK(spectral_radius(Graph::cycle(10)) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(spectral_radius(Graph::cycle(9)) == doctest::Approx(2.0).epsilon(1e-10));
  const double star = spectral_radius(Graph::star(8));
  CHECK(std::abs(star - std::sqrt(8.0)) <= 1e-8);
  CHECK(std::abs(star - oracle::spectral_radius(Graph::star(8))) <= 1e-8);
  CHECK(spectral_radius(Graph(3, {})) == 0.0);
}

TEST_CASE("spectral radius matches the dense oracle and Perron bounds") {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    const Graph g = random_graph(rng, 5, 40);
    const double r = spectral_radius(g);
    CHECK(std::abs(r - oracle::spectral_radius(g)) <= 1e-8);
    CHECK(std::abs(spectral_radius_dense(g) - r) <= 1e-8);
    const auto m = measures(g);
    CHECK(r >= m.deg_avg - 1e-9);
    CHECK(r <= m.deg_max + 1e-9);
  }
}

TEST_CASE("connectivity") {
  CHECK(is_connected(Graph::complete(5)));
  CHECK_FALSE(is_connected(Graph::disjoint_union(Graph::cycle(3), Graph::cycle(3))));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Graph g = generate({20, 2.0 + s, 0.0, s});
    CHECK(is_connected(g));
    const auto d = oracle::all_pairs_bfs(g);
    CHECK(std::none_of(d[0].begin(), d[0].end(), [](int x) { return x < 0; }));
  }
}

TEST_CASE("task features") {
  const Graph g = generate({16, 4.0, 0.2, 1});
  const auto a = make_features(g, 5), b = make_features(g, 5);
  CHECK(a.source == b.source);
  CHECK(a.scalar == b.scalar);
  double s = 0;
  for (double x : a.source_onehot) s += x;
  CHECK(s == 1.0);
  CHECK(a.source_onehot[a.source] == 1.0);

  const Graph big = Graph::cycle(1000);
  double sum = 0;
  std::size_t count = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    for (double x : make_features(big, seed).scalar) {
      CHECK((x >= 0.0 && x <= 1.0));
      sum += x;
      ++count;
    }
  CHECK(std::abs(sum / count - 0.5) <= 0.005);
}

TEST_CASE("multitask targets are consistent") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Graph g = random_graph(rng, 6, 20);
    const auto f = make_features(g, rng.next_u64());
    const auto y = multitask_targets(g, f);
    CHECK(y.connected == is_connected(g));
    CHECK(y.sssp == sssp(g, f.source));
    CHECK(y.lapfeat == laplacian_features(g, f.scalar));
    if (y.connected) {
      CHECK(y.diameter == *std::max_element(y.ecc.begin(), y.ecc.end()));
      CHECK(std::none_of(y.sssp.begin(), y.sssp.end(), [](int x) { return x < 0; }));
    } else {
      CHECK(y.diameter == -1);
    }
  }
}
