#include <doctest.h>

#include <cmath>
#include <set>

#include "odgl/benchmark_space.hpp"
#include "odgl/error.hpp"
#include "odgl/rng.hpp"
#include "oracles.hpp"

using namespace odgl;

namespace {

std::vector<MeasureRow> random_rows(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MeasureRow> rows(n);
  for (auto& r : rows) {
    const double a = rng.normal(), b = rng.normal();
    r = {1 + a, 0.3 * b, 5 + 2 * a - b, 8 + a * b, rng.normal(), 0.1 * rng.normal() + a};
  }
  return rows;
}

// Standardized covariance built with plain loops for the oracle.
oracle::Matrix standardized_cov(const std::vector<MeasureRow>& rows, MeasureRow& mean, MeasureRow& sd) {
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < 6; ++c) {
    mean[c] = 0;
    for (const auto& r : rows) mean[c] += r[c] / n;
    double ss = 0;
    for (const auto& r : rows) ss += (r[c] - mean[c]) * (r[c] - mean[c]);
    sd[c] = std::sqrt(ss / (n - 1));
  }
  oracle::Matrix cov(6, std::vector<double>(6, 0.0));
  for (const auto& r : rows)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        cov[i][j] += (r[i] - mean[i]) / sd[i] * (r[j] - mean[j]) / sd[j] / (n - 1);
  return cov;
}

}  // namespace

TEST_CASE("pca matches the Jacobi eigensolver") {
  const auto rows = random_rows(200, 1);
  const PcaModel m = fit_pca(rows);
  MeasureRow mean{}, sd{};
  oracle::Matrix vecs;
  const auto ev = oracle::jacobi_eigenvalues(standardized_cov(rows, mean, sd), &vecs);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(m.explained_variance[k] - ev[5 - k]) <= 1e-8);
    // Align the oracle eigenvector sign with the convention.
    std::vector<double> v(6);
    for (int c = 0; c < 6; ++c) v[c] = vecs[c][5 - k];
    for (int c = 0; c < 6; ++c)
      if (std::abs(v[c]) > 1e-12) {
        if (v[c] < 0)
          for (auto& x : v) x = -x;
        break;
      }
    for (int c = 0; c < 6; ++c) CHECK(std::abs(m.components[k][c] - v[c]) <= 1e-8);
  }
  CHECK(m.explained_variance[0] >= m.explained_variance[1]);
  double dot = 0, n0 = 0, n1 = 0;
  for (int c = 0; c < 6; ++c) {
    dot += m.components[0][c] * m.components[1][c];
    n0 += m.components[0][c] * m.components[0][c];
    n1 += m.components[1][c] * m.components[1][c];
  }
  CHECK(std::abs(dot) <= 1e-8);
  CHECK(std::abs(n0 - 1) <= 1e-8);
  CHECK(std::abs(n1 - 1) <= 1e-8);
  for (int c = 0; c < 6; ++c) {
    CHECK(std::abs(m.mean[c] - mean[c]) <= 1e-10);
    CHECK(std::abs(m.scale[c] - sd[c]) <= 1e-10);
  }
}

TEST_CASE("pca of rank-2 data reconstructs exactly") {
  Rng rng(2);
  std::vector<MeasureRow> rows(50);
  const MeasureRow u{1, 2, 0, -1, 3, 0.5}, w{0, 1, 1, 1, -2, 2};
  for (auto& r : rows) {
    const double a = rng.normal(), b = rng.normal();
    for (int c = 0; c < 6; ++c) r[c] = 10 + a * u[c] + b * w[c];
  }
  const PcaModel m = fit_pca(rows);
  for (const auto& r : rows) {
    const Point2 p = project(m, r);
    for (int c = 0; c < 6; ++c) {
      const double back = m.mean[c] + m.scale[c] * (p.x * m.components[0][c] + p.y * m.components[1][c]);
      CHECK(std::abs(back - r[c]) <= 1e-8);
    }
  }
  const Point2 origin = project(m, m.mean);
  CHECK(std::abs(origin.x) <= 1e-12);
  CHECK(std::abs(origin.y) <= 1e-12);
}

TEST_CASE("pca guards constant columns and tiny inputs") {
  auto rows = random_rows(20, 3);
  for (auto& r : rows) r[4] = 7.0;
  const PcaModel m = fit_pca(rows);
  CHECK(m.constant_columns == std::vector<std::size_t>{4});
  CHECK(m.scale[4] == 1.0);
  CHECK_THROWS_AS(fit_pca(std::vector<MeasureRow>(2)), ParameterError);
}

TEST_CASE("identical measures project to identical points") {
  const auto rows = random_rows(30, 4);
  const PcaModel m = fit_pca(rows);
  const Point2 a = project(m, rows[3]), b = project(m, rows[3]);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
}

TEST_CASE("circle membership is closed and deduplicated") {
  const std::vector<Point2> pts{{0, 0}, {0.5, 0}, {0.6, 0}, {0, -0.3}, {3, 3}};
  std::vector<IsoKey> keys(pts.size());
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i][0] = static_cast<std::uint8_t>(i);
  keys[3] = keys[0];
  SplitSpec spec;
  spec.centers = {{0, 0}};
  spec.group_size = 2;
  const auto groups = select_groups(pts, spec, keys);
  REQUIRE(groups.size() == 1);
  std::set<std::size_t> ids;
  for (const auto& m : groups[0]) ids.insert(m.index);
  CHECK(ids == std::set<std::size_t>{0, 1});
}

TEST_CASE("groups pad with fresh feature seeds and truncate by subsampling") {
  std::vector<Point2> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.01 * i, 0});
  std::vector<IsoKey> keys(pts.size());
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i][0] = static_cast<std::uint8_t>(i);
  SplitSpec spec;
  spec.centers = {{0, 0}};
  spec.group_size = 25;
  const auto padded = select_groups(pts, spec, keys)[0];
  CHECK(padded.size() == 25);
  std::set<std::uint64_t> seeds;
  for (const auto& m : padded) seeds.insert(m.feature_seed);
  CHECK(seeds.size() == 25);

  spec.group_size = 4;
  const auto a = select_groups(pts, spec, keys)[0];
  const auto b = select_groups(pts, spec, keys)[0];
  CHECK(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].index == b[i].index);
}

TEST_CASE("disjoint circles give disjoint groups and empty circles fail") {
  const std::vector<Point2> pts{{0, 0}, {0.1, 0}, {2, 0}, {2.1, 0}};
  std::vector<IsoKey> keys(4);
  for (std::size_t i = 0; i < 4; ++i) keys[i][0] = static_cast<std::uint8_t>(i);
  SplitSpec spec;
  spec.centers = {{0, 0}, {2, 0}};
  spec.group_size = 2;
  const auto g = select_groups(pts, spec, keys);
  for (const auto& m : g[0]) CHECK(m.index < 2);
  for (const auto& m : g[1]) CHECK(m.index >= 2);
  spec.centers.push_back({10, 10});
  CHECK_THROWS_AS(select_groups(pts, spec, keys), ParameterError);
}

TEST_CASE("test subsampling picks one graph per occupied bin") {
  const std::vector<Point2> same{{1, 1}, {1, 1}, {1, 1}};
  CHECK(subsample_test(same, 4, 4, 0).size() == 1);
  const std::vector<Point2> diag{{0, 0}, {0.1, 0.1}, {1, 1}, {0.9, 0.95}};
  const auto picked = subsample_test(diag, 2, 2, 0);
  CHECK(picked.size() == 2);
  CHECK(subsample_test(diag, 2, 2, 5) == subsample_test(diag, 2, 2, 5));
}

TEST_CASE("default centers lie on the median PC2 line") {
  const std::vector<Point2> pts{{0, 1}, {1, 2}, {2, 3}, {4, 0}};
  const auto c = default_centers(pts, 5);
  REQUIRE(c.size() == 5);
  for (const auto& p : c) CHECK(p.y == doctest::Approx(1.5));
  CHECK(c.front().x >= 0.0);
  CHECK(c.back().x <= 4.0);
  for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].x > c[i - 1].x);
}

TEST_CASE("degree histograms") {
  const Graph c6 = Graph::cycle(6), k5 = Graph::complete(5);
  const Graph* only_c6[] = {&c6};
  const Graph* only_k5[] = {&k5};
  const Graph* both[] = {&c6, &k5};
  const auto a = degree_histogram(only_c6);
  CHECK(a.mass[2] == 1.0);
  CHECK(degree_histogram(only_k5).mass[4] == 1.0);
  const auto h = degree_histogram(both);
  CHECK(h.mass[2] == doctest::Approx(6.0 / 11));
  CHECK(h.mass[4] == doctest::Approx(5.0 / 11));
  CHECK(h.total() == 11);
  double s = 0;
  for (double m : h.mass) s += m;
  CHECK(std::abs(s - 1.0) <= 1e-9);
  CHECK_THROWS_AS(degree_histogram(std::span<const Graph* const>{}), ParameterError);
}
