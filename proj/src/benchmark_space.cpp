#include "odgl/benchmark_space.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "odgl/error.hpp"
#include "odgl/rng.hpp"

namespace odgl {

PcaModel fit_pca(std::span<const MeasureRow> rows) {
  if (rows.size() < 3) throw ParameterError("fit_pca needs at least 3 rows");
  const auto n = static_cast<double>(rows.size());
  PcaModel model;

  for (const auto& r : rows)
    for (std::size_t c = 0; c < kNumMeasures; ++c) model.mean[c] += r[c];
  for (auto& m : model.mean) m /= n;
  for (std::size_t c = 0; c < kNumMeasures; ++c) {
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[c] - model.mean[c]) * (r[c] - model.mean[c]);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd > 1e-12 * std::max(1.0, std::abs(model.mean[c]))) {
      model.scale[c] = sd;
    } else {
      model.scale[c] = 1.0;
      model.constant_columns.push_back(c);
    }
  }

  Eigen::Matrix<double, 6, 6> cov = Eigen::Matrix<double, 6, 6>::Zero();
  for (const auto& r : rows) {
    Eigen::Matrix<double, 6, 1> z;
    for (std::size_t c = 0; c < kNumMeasures; ++c) z(c) = (r[c] - model.mean[c]) / model.scale[c];
    cov.noalias() += z * z.transpose();
  }
  cov /= (n - 1.0);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigendecomposition failed");
  // Eigenvalues come back ascending.
  for (int k = 0; k < 2; ++k) {
    Eigen::Matrix<double, 6, 1> v = solver.eigenvectors().col(5 - k);
    for (int c = 0; c < 6; ++c) {
      if (std::abs(v(c)) > 1e-12) {
        if (v(c) < 0) v = -v;
        break;
      }
    }
    for (int c = 0; c < 6; ++c) model.components[k][c] = v(c);
    model.explained_variance[k] = solver.eigenvalues()(5 - k);
  }
  return model;
}

Point2 project(const PcaModel& model, const MeasureRow& row) {
  Point2 p;
  for (std::size_t c = 0; c < kNumMeasures; ++c) {
    const double z = (row[c] - model.mean[c]) / model.scale[c];
    p.x += z * model.components[0][c];
    p.y += z * model.components[1][c];
  }
  return p;
}

std::vector<Group> select_groups(std::span<const Point2> points, const SplitSpec& spec,
                                 std::span<const IsoKey> keys) {
  if (points.size() != keys.size()) throw ParameterError("points and keys are not aligned");
  if (!(spec.radius > 0.0)) throw ParameterError("radius must be positive");
  if (spec.group_size == 0) throw ParameterError("group_size must be positive");

  const double r2 = spec.radius * spec.radius;
  std::vector<Group> groups;
  for (std::size_t g = 0; g < spec.centers.size(); ++g) {
    const Point2 c = spec.centers[g];
    std::map<IsoKey, std::size_t> seen;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double dx = points[i].x - c.x;
      const double dy = points[i].y - c.y;
      if (dx * dx + dy * dy <= r2 && seen.emplace(keys[i], i).second) members.push_back(i);
    }
    if (members.empty()) {
      std::ostringstream msg;
      msg << "no graph within radius " << spec.radius << " of center " << g + 1 << " (" << c.x << ", " << c.y << ")";
      throw ParameterError(msg.str());
    }

    Rng rng(derive_seed(spec.seed, {0x67726f7570ULL, g}));
    if (members.size() > spec.group_size) {
      for (std::size_t i = 0; i < spec.group_size; ++i)
        std::swap(members[i], members[i + rng.uniform_int(members.size() - i)]);
      members.resize(spec.group_size);
      std::sort(members.begin(), members.end());
    }

    Group group;
    group.reserve(spec.group_size);
    for (std::size_t slot = 0; slot < spec.group_size; ++slot)
      group.push_back({members[slot % members.size()], derive_seed(spec.seed, {0x66656174ULL, g, slot})});
    groups.push_back(std::move(group));
  }
  return groups;
}

std::vector<std::size_t> subsample_test(std::span<const Point2> points, std::uint32_t rows,
                                        std::uint32_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ParameterError("bin grid must be at least 1x1");
  if (points.empty()) return {};
  double xmin = points[0].x, xmax = xmin, ymin = points[0].y, ymax = ymin;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  auto bin_of = [](double v, double lo, double hi, std::uint32_t count) -> std::uint32_t {
    if (!(hi > lo)) return 0;
    const auto b = static_cast<std::int64_t>(std::floor((v - lo) / (hi - lo) * count));
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(b, 0, count - 1));
  };
  std::map<std::uint64_t, std::vector<std::size_t>> bins;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::uint64_t r = bin_of(points[i].y, ymin, ymax, rows);
    const std::uint64_t c = bin_of(points[i].x, xmin, xmax, cols);
    bins[r * cols + c].push_back(i);
  }
  Rng rng(derive_seed(seed, {0x74657374ULL}));
  std::vector<std::size_t> picked;
  picked.reserve(bins.size());
  for (const auto& [bin, members] : bins) picked.push_back(members[rng.uniform_int(members.size())]);
  return picked;
}

std::vector<Point2> default_centers(std::span<const Point2> points, std::size_t count) {
  if (points.empty()) throw ParameterError("cannot place centers on an empty corpus");
  double xmin = points[0].x, xmax = xmin;
  std::vector<double> ys;
  ys.reserve(points.size());
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ys.push_back(p.y);
  }
  std::sort(ys.begin(), ys.end());
  const std::size_t m = ys.size();
  const double median = m % 2 ? ys[m / 2] : 0.5 * (ys[m / 2 - 1] + ys[m / 2]);
  std::vector<Point2> centers;
  for (std::size_t i = 1; i <= count; ++i)
    centers.push_back({xmin + (xmax - xmin) * static_cast<double>(i) / static_cast<double>(count + 1), median});
  return centers;
}

std::uint64_t DegreeHistogram::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

DegreeHistogram degree_histogram(std::span<const Graph* const> graphs, double bin_width) {
  if (!(bin_width > 0.0)) throw ParameterError("bin_width must be positive");
  if (graphs.empty()) throw ParameterError("degree_histogram needs at least one graph");
  std::size_t max_deg = 0;
  std::uint64_t nodes = 0;
  for (const Graph* g : graphs)
    for (std::uint32_t v = 0; v < g->num_nodes(); ++v) {
      max_deg = std::max(max_deg, g->degree(v));
      ++nodes;
    }
  if (nodes == 0) throw ParameterError("degree_histogram needs at least one node");
  DegreeHistogram h;
  h.bin_width = bin_width;
  const auto bins = static_cast<std::size_t>(std::floor(static_cast<double>(max_deg) / bin_width)) + 1;
  h.counts.assign(bins, 0);
  for (const Graph* g : graphs)
    for (std::uint32_t v = 0; v < g->num_nodes(); ++v) {
      auto b = static_cast<std::size_t>(std::floor(static_cast<double>(g->degree(v)) / bin_width));
      ++h.counts[std::min(b, bins - 1)];
    }
  h.mass.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) h.mass[b] = static_cast<double>(h.counts[b]) / static_cast<double>(nodes);
  return h;
}

}  // namespace odgl
