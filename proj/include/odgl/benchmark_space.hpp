#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odgl/graph.hpp"

namespace odgl {

constexpr std::size_t kNumMeasures = 6;
using MeasureRow = std::array<double, kNumMeasures>;

struct Point2 {
  double x = 0.0;  ///< PC1
  double y = 0.0;  ///< PC2
};

/// Standardize-then-project model for the 6D measure space.
struct PcaModel {
  MeasureRow mean{};
  MeasureRow scale{};
  std::array<MeasureRow, 2> components{};  ///< orthonormal rows
  std::array<double, 2> explained_variance{};
  /// Columns whose standard deviation was zero (scale forced to 1).
  std::vector<std::size_t> constant_columns;
};

/// z-score each column, eigendecompose the correlation matrix, keep the top
/// two directions. Each component's first nonzero entry is made positive.
/// Throws ParameterError if fewer than 3 rows.
PcaModel fit_pca(std::span<const MeasureRow> rows);

Point2 project(const PcaModel& model, const MeasureRow& row);
inline Point2 project(const PcaModel& model, const GraphMeasures& m) { return project(model, m.as_array()); }

struct SplitSpec {
  std::vector<Point2> centers;
  double radius = 0.5;
  std::uint32_t test_rows = 250;
  std::uint32_t test_cols = 250;
  std::size_t group_size = 1000;
  std::uint64_t seed = 0;
};

/// One training-group slot: a corpus row plus the seed of its task features.
struct GroupMember {
  std::size_t index = 0;  ///< position in the points/keys arrays
  std::uint64_t feature_seed = 0;
};

using Group = std::vector<GroupMember>;

/// Circle membership (closed boundary), iso-key dedup, then a seeded
/// subsample down to group_size or padding back up to it with fresh feature
/// seeds. Throws ParameterError naming the center when a circle is empty.
std::vector<Group> select_groups(std::span<const Point2> points, const SplitSpec& spec,
                                 std::span<const IsoKey> keys);

/// One seeded pick per non-empty bin of a rows x cols grid over the bounding
/// box. Returns indices into points, in bin order.
std::vector<std::size_t> subsample_test(std::span<const Point2> points, std::uint32_t rows,
                                        std::uint32_t cols, std::uint64_t seed);

/// Five evenly spaced centers along the PC1 span at the median PC2.
std::vector<Point2> default_centers(std::span<const Point2> points, std::size_t count = 5);

struct DegreeHistogram {
  double bin_width = 1.0;
  std::vector<std::uint64_t> counts;
  std::vector<double> mass;

  std::uint64_t total() const;
  double bin_center(std::size_t b) const { return (static_cast<double>(b) + 0.5) * bin_width; }
  double bin_start(std::size_t b) const { return static_cast<double>(b) * bin_width; }
};

/// Normalized histogram of every node degree across the graphs.
DegreeHistogram degree_histogram(std::span<const Graph* const> graphs, double bin_width = 1.0);

}  // namespace odgl
