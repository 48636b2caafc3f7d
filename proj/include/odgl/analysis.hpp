#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "odgl/benchmark_space.hpp"
#include "odgl/graph.hpp"

namespace odgl {

/// Per-graph evaluation record.
struct EvalResult {
  std::uint64_t graph_id = 0;
  std::uint64_t feature_seed = 0;
  double pc1 = 0.0;
  double pc2 = 0.0;
  double deg_avg = 0.0;
  double loss = 0.0;
};

inline constexpr double kLossFloor = 1e-8;

/// Natural log with the loss floored at 1e-8.
double log_loss(double loss);

/// Cells over the PC1 x PC2 bounding box of the results. Row 0 is the lowest
/// PC2 band, column 0 the lowest PC1 band.
struct EvalGrid {
  std::size_t rows = 30;
  std::size_t cols = 30;
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
  std::vector<double> mean_log_loss;  ///< rows * cols, row-major
  std::vector<std::size_t> count;

  bool occupied(std::size_t r, std::size_t c) const { return count[r * cols + c] > 0; }
  double value(std::size_t r, std::size_t c) const { return mean_log_loss[r * cols + c]; }
  std::size_t total() const;
};

/// Cell index of v in [lo, hi] split into count equal bins (last bin closed).
std::size_t bin_index(double v, double lo, double hi, std::size_t count);

EvalGrid heatmap(std::span<const EvalResult> results, std::size_t rows = 30, std::size_t cols = 30);

/// Indices of the best ceil(fraction * N) results by loss, ties by graph id.
std::vector<std::size_t> top_fraction(std::span<const EvalResult> results, double fraction);

/// Degree histogram of the best graphs; graphs is aligned with results.
DegreeHistogram top_fraction_histogram(std::span<const EvalResult> results, std::span<const Graph* const> graphs,
                                       double fraction, double bin_width = 1.0);

struct Pc1Curve {
  double xmin = 0.0, xmax = 0.0;
  std::vector<double> center;   ///< occupied bins only, in PC1 order
  std::vector<double> raw;      ///< mean log-loss per occupied bin
  std::vector<std::size_t> count;
  std::vector<double> smooth;
  std::vector<std::size_t> valleys;  ///< indices into center
};

/// Bins log-losses by PC1 (the heatmap's column edges), then applies
/// count-weighted Gaussian kernel smoothing across occupied bins. Valleys are
/// strict interior local minima of the smoothed curve; a flat run counts once,
/// and differences at rounding level (1e-12 relative) are treated as flat.
Pc1Curve pc1_projection(std::span<const EvalResult> results, double bandwidth = 0.15, std::size_t bins = 30);

/// Indices of strict local minima (interior only) of a sequence; a run of
/// equal values lower than both neighbours reports its middle element.
/// Values closer than tol count as equal.
std::vector<std::size_t> local_minima(std::span<const double> v, double tol = 0.0);
/// Local maxima of a histogram, endpoints included (outside counts as 0).
std::vector<std::size_t> local_maxima(std::span<const double> v);

struct ValleyModeReport {
  std::optional<double> valley_loss[2];
  std::optional<double> valley_pc1[2];
  std::optional<std::uint64_t> mode_count[2];
  std::optional<double> mode_degree[2];
};

/// Two deepest valleys and two largest histogram modes, each pair reported
/// in position order. Missing entries stay empty.
ValleyModeReport valley_mode_report(const Pc1Curve& curve, const DegreeHistogram& top_hist);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// 0..254 min-max quantization of occupied cells; 255 marks empty cells.
/// Row-major in the grid's own orientation.
std::vector<std::uint8_t> quantize(const EvalGrid& grid);

/// Binary PGM (P5), image top row = highest PC2 band.
void write_pgm(const EvalGrid& grid, const std::filesystem::path& path);
/// Returns the quantized grid in grid orientation.
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& rows, std::size_t& cols);

}  // namespace odgl
