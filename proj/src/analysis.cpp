#include "odgl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "odgl/error.hpp"
#include "odgl/io.hpp"

namespace odgl {

double log_loss(double loss) { return std::log(std::max(loss, kLossFloor)); }

std::size_t EvalGrid::total() const { return std::accumulate(count.begin(), count.end(), std::size_t{0}); }

std::size_t bin_index(double v, double lo, double hi, std::size_t count) {
  if (count == 0) throw ParameterError("bin count must be positive");
  if (!(hi > lo)) return 0;
  const double b = std::floor((v - lo) / (hi - lo) * static_cast<double>(count));
  if (b < 0) return 0;
  return std::min(static_cast<std::size_t>(b), count - 1);
}

namespace {

void bounds(std::span<const EvalResult> results, double& xmin, double& xmax, double& ymin, double& ymax) {
  xmin = xmax = results[0].pc1;
  ymin = ymax = results[0].pc2;
  for (const auto& r : results) {
    xmin = std::min(xmin, r.pc1);
    xmax = std::max(xmax, r.pc1);
    ymin = std::min(ymin, r.pc2);
    ymax = std::max(ymax, r.pc2);
  }
}

}  // namespace

EvalGrid heatmap(std::span<const EvalResult> results, std::size_t rows, std::size_t cols) {
  if (results.empty()) throw ParameterError("heatmap needs at least one result");
  if (rows == 0 || cols == 0) throw ParameterError("grid must be at least 1x1");
  EvalGrid g;
  g.rows = rows;
  g.cols = cols;
  bounds(results, g.xmin, g.xmax, g.ymin, g.ymax);
  g.mean_log_loss.assign(rows * cols, 0.0);
  g.count.assign(rows * cols, 0);
  for (const auto& r : results) {
    const std::size_t cell = bin_index(r.pc2, g.ymin, g.ymax, rows) * cols + bin_index(r.pc1, g.xmin, g.xmax, cols);
    g.mean_log_loss[cell] += log_loss(r.loss);
    ++g.count[cell];
  }
  for (std::size_t i = 0; i < g.count.size(); ++i)
    if (g.count[i] > 0) g.mean_log_loss[i] /= static_cast<double>(g.count[i]);
  return g;
}

std::vector<std::size_t> top_fraction(std::span<const EvalResult> results, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("fraction must be in (0, 1]");
  if (results.empty()) throw ParameterError("no results to rank");
  std::vector<std::size_t> idx(results.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (results[a].loss != results[b].loss) return results[a].loss < results[b].loss;
    if (results[a].graph_id != results[b].graph_id) return results[a].graph_id < results[b].graph_id;
    return a < b;
  });
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(results.size()) - 1e-9));
  idx.resize(std::clamp<std::size_t>(keep, 1, results.size()));
  return idx;
}

DegreeHistogram top_fraction_histogram(std::span<const EvalResult> results, std::span<const Graph* const> graphs,
                                       double fraction, double bin_width) {
  if (graphs.size() != results.size()) throw ParameterError("graphs must align with results");
  std::vector<const Graph*> picked;
  for (std::size_t i : top_fraction(results, fraction)) picked.push_back(graphs[i]);
  return degree_histogram(picked, bin_width);
}

std::vector<std::size_t> local_minima(std::span<const double> v, double tol) {
  std::vector<std::size_t> out;
  const std::size_t n = v.size();
  std::size_t i = 1;
  while (i + 1 < n) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(v[j + 1] - v[i]) <= tol) ++j;
    if (j + 1 < n && v[i - 1] > v[i] + tol && v[j + 1] > v[i] + tol) out.push_back((i + j) / 2);
    i = j + 1;
  }
  return out;
}

std::vector<std::size_t> local_maxima(std::span<const double> v) {
  std::vector<std::size_t> out;
  const std::size_t n = v.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[j + 1] == v[i]) ++j;
    const double left = i == 0 ? 0.0 : v[i - 1];
    const double right = j + 1 == n ? 0.0 : v[j + 1];
    if (v[i] > left && v[i] > right) out.push_back((i + j) / 2);
    i = j + 1;
  }
  return out;
}

Pc1Curve pc1_projection(std::span<const EvalResult> results, double bandwidth, std::size_t bins) {
  if (results.empty()) throw ParameterError("projection needs at least one result");
  if (bandwidth < 0.0) throw ParameterError("bandwidth must be non-negative");
  double ymin, ymax;
  Pc1Curve c;
  bounds(results, c.xmin, c.xmax, ymin, ymax);
  std::vector<double> sum(bins, 0.0);
  std::vector<std::size_t> cnt(bins, 0);
  for (const auto& r : results) {
    const std::size_t b = bin_index(r.pc1, c.xmin, c.xmax, bins);
    sum[b] += log_loss(r.loss);
    ++cnt[b];
  }
  const double width = (c.xmax - c.xmin) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    if (cnt[b] == 0) continue;
    c.center.push_back(c.xmin + (static_cast<double>(b) + 0.5) * width);
    c.raw.push_back(sum[b] / static_cast<double>(cnt[b]));
    c.count.push_back(cnt[b]);
  }
  c.smooth.resize(c.center.size());
  for (std::size_t i = 0; i < c.center.size(); ++i) {
    if (bandwidth == 0.0) {
      c.smooth[i] = c.raw[i];
      continue;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < c.center.size(); ++j) {
      const double d = (c.center[i] - c.center[j]) / bandwidth;
      const double w = std::exp(-0.5 * d * d) * static_cast<double>(c.count[j]);
      num += w * c.raw[j];
      den += w;
    }
    c.smooth[i] = num / den;
  }
  double scale = 1.0;
  for (double v : c.smooth) scale = std::max(scale, std::abs(v));
  c.valleys = local_minima(c.smooth, 1e-12 * scale);
  return c;
}

ValleyModeReport valley_mode_report(const Pc1Curve& curve, const DegreeHistogram& hist) {
  ValleyModeReport rep;
  std::vector<std::size_t> v = curve.valleys;
  std::stable_sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) { return curve.smooth[a] < curve.smooth[b]; });
  if (v.size() > 2) v.resize(2);
  std::sort(v.begin(), v.end());
  for (std::size_t k = 0; k < v.size(); ++k) {
    rep.valley_loss[k] = curve.smooth[v[k]];
    rep.valley_pc1[k] = curve.center[v[k]];
  }

  std::vector<double> counts(hist.counts.begin(), hist.counts.end());
  std::vector<std::size_t> m = local_maxima(counts);
  std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  if (m.size() > 2) m.resize(2);
  std::sort(m.begin(), m.end());
  for (std::size_t k = 0; k < m.size(); ++k) {
    rep.mode_count[k] = hist.counts[m[k]];
    rep.mode_degree[k] = hist.bin_start(m[k]);
  }
  return rep;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ParameterError("spearman needs two aligned samples of size >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::vector<std::uint8_t> quantize(const EvalGrid& grid) {
  std::vector<std::uint8_t> q(grid.rows * grid.cols, 255);
  double lo = 0, hi = 0;
  bool any = false;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (grid.count[i] == 0) continue;
    lo = any ? std::min(lo, grid.mean_log_loss[i]) : grid.mean_log_loss[i];
    hi = any ? std::max(hi, grid.mean_log_loss[i]) : grid.mean_log_loss[i];
    any = true;
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (grid.count[i] == 0) continue;
    const double t = hi > lo ? (grid.mean_log_loss[i] - lo) / (hi - lo) : 0.0;
    q[i] = static_cast<std::uint8_t>(std::lround(254.0 * t));
  }
  return q;
}

void write_pgm(const EvalGrid& grid, const std::filesystem::path& path) {
  const auto q = quantize(grid);
  std::string out = "P5\n" + std::to_string(grid.cols) + " " + std::to_string(grid.rows) + "\n255\n";
  for (std::size_t r = grid.rows; r-- > 0;)
    for (std::size_t c = 0; c < grid.cols; ++c) out += static_cast<char>(q[r * grid.cols + c]);
  write_file_atomic(path, out);
}

std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& rows, std::size_t& cols) {
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::string magic;
  std::size_t maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (!in || magic != "P5" || maxval != 255) throw FormatError(path.string() + ": not an 8-bit binary PGM");
  in.get();
  const auto start = static_cast<std::size_t>(in.tellg());
  if (data.size() != start + rows * cols) throw FormatError(path.string() + ": pixel data length mismatch");
  std::vector<std::uint8_t> q(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      q[(rows - 1 - r) * cols + c] = static_cast<std::uint8_t>(data[start + r * cols + c]);
  return q;
}

}  // namespace odgl
