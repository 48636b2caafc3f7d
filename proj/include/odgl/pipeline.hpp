#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "odgl/analysis.hpp"
#include "odgl/benchmark_space.hpp"
#include "odgl/gnn.hpp"
#include "odgl/io.hpp"
#include "odgl/meta.hpp"

namespace odgl {

// ---- corpus -----------------------------------------------------------------

struct CorpusSpec {
  std::uint32_t n = 16;
  std::size_t grid_k = 60;
  std::size_t grid_p = 60;
  std::size_t seeds = 5;
  std::uint64_t seed = 0;
};

/// k on linspace(2, n - 2, grid_k), p = linspace(0, 1, grid_p)^2, `seeds`
/// graphs per (k, p). Ids are assigned in (k, p, replicate) order.
std::vector<CorpusRecord> build_corpus(const CorpusSpec& spec);
std::vector<MeasuresRecord> compute_measures(std::span<const CorpusRecord> corpus);

/// Id lookup over a loaded corpus.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<CorpusRecord> records);
  std::size_t size() const { return records_.size(); }
  const std::vector<CorpusRecord>& records() const { return records_; }
  const std::shared_ptr<const Graph>& graph(std::uint64_t id) const;
  bool contains(std::uint64_t id) const { return index_.count(id) > 0; }

 private:
  std::vector<CorpusRecord> records_;
  std::vector<std::shared_ptr<const Graph>> graphs_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

// ---- split ------------------------------------------------------------------

struct SplitOptions {
  std::vector<Point2> centers;  ///< empty: default centers
  std::size_t default_center_count = 5;
  double radius = 0.5;
  std::uint32_t bin_rows = 250;
  std::uint32_t bin_cols = 250;
  std::size_t group_size = 1000;
  std::uint64_t seed = 0;
};

struct SplitOutput {
  PcaModel pca;
  std::vector<Point2> points;  ///< aligned with the corpus
  std::vector<Point2> centers;
  std::vector<SplitRecord> rows;  ///< groups in order, then test rows
};

/// PCA on the measures, training groups, and the bin-subsampled test split.
/// Test rows get feature seed derive_seed(seed, {"test", id}).
SplitOutput make_split(std::span<const CorpusRecord> corpus, std::span<const MeasuresRecord> measures,
                       const SplitOptions& opts);

/// "x1,y1;x2,y2"
std::vector<Point2> parse_centers(const std::string& text);
/// "RxC"
std::pair<std::uint32_t, std::uint32_t> parse_grid(const std::string& text);

// ---- targets ----------------------------------------------------------------

enum class IsingMethod { exact, gibbs };

struct IsingTargetOptions {
  IsingMethod method = IsingMethod::exact;
  std::optional<GibbsConfig> budget;  ///< default_gibbs_budget(n) when unset
  /// Budget doublings allowed while two estimates disagree by more than 0.02.
  std::size_t max_doublings = 3;
  std::uint64_t seed = 0;
};

struct IsingTarget {
  IsingModel model;
  Marginals marginals;
  bool accepted = true;  ///< Gibbs estimates passed the 0.02 rule
};

/// Model parameters come from the feature seed; Gibbs chains from seed.
IsingTarget ising_target(const std::shared_ptr<const Graph>& g, std::uint64_t graph_id, std::uint64_t feature_seed,
                         const IsingTargetOptions& opts);

/// Unique (graph id, feature seed) pairs of a split, in first-seen order.
std::vector<std::pair<std::uint64_t, std::uint64_t>> unique_instances(std::span<const SplitRecord> rows);

struct IsingTargetFiles {
  std::vector<IsingTargetRow> targets;
  std::vector<CouplingRow> couplings;
  std::size_t unaccepted = 0;
};

IsingTargetFiles make_ising_targets(const Corpus& corpus, std::span<const SplitRecord> rows,
                                    const IsingTargetOptions& opts);

struct GtTargetFiles {
  std::vector<GtNodeRow> nodes;
  std::vector<GtGraphRow> graphs;
};

/// Task features are drawn from each row's feature seed.
GtTargetFiles make_gtheory_targets(const Corpus& corpus, std::span<const SplitRecord> rows);

// ---- samples ----------------------------------------------------------------

/// Loads samples for the given split rows from target files
/// ("<prefix>.targets.csv" + "<prefix>.couplings.csv", or
/// "<prefix>.nodes.csv" + "<prefix>.graphs.csv").
std::vector<Sample> load_samples(TaskKind task, const Corpus& corpus, std::span<const SplitRecord> rows,
                                 const std::filesystem::path& targets_prefix);

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const std::string& suffix);

/// Rows of the listed groups (empty: every training group).
std::vector<SplitRecord> group_rows(std::span<const SplitRecord> rows, std::span<const int> groups);
std::vector<SplitRecord> test_rows(std::span<const SplitRecord> rows);

/// Seeded hold-out of ceil(fraction * N) rows for validation.
void holdout(std::span<const SplitRecord> rows, double fraction, std::uint64_t seed, std::vector<SplitRecord>& train,
             std::vector<SplitRecord>& val);

// ---- models -------------------------------------------------------------------

/// Writes the checkpoint to path and the configuration to path + ".cfg".
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// ---- evaluation ---------------------------------------------------------------

/// Per-sample losses joined with split coordinates and graph degree.
std::vector<EvalResult> evaluate_rows(const Model& model, std::span<const Sample> samples,
                                      std::span<const SplitRecord> rows,
                                      std::span<const Assignment* const> assignments = {});

inline constexpr std::string_view kResultsHeader = "graph_id,feature_seed,pc1,pc2,deg_avg,loss";
void write_results(const std::filesystem::path& path, std::span<const EvalResult> results);
std::vector<EvalResult> read_results(const std::filesystem::path& path);
void write_grid_csv(const std::filesystem::path& path, const EvalGrid& grid);
void write_curve_csv(const std::filesystem::path& path, const Pc1Curve& curve);

/// Table 1 quantities plus message statistics as metric,value rows.
std::string format_report(const ValleyModeReport& rep, const std::optional<MessageStats>& stats);

// ---- meta-learning on graphs ------------------------------------------------------

struct MetaGnnOptions {
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::size_t few_shot = 5;
  std::size_t search_iters = 1000;
  std::uint64_t seed = 0;
  SaState init;
};

struct MetaTask {
  std::uint64_t graph_id = 0;
  std::vector<const Sample*> train_half;
  std::vector<const Sample*> test_half;
};

/// One task per distinct graph; its samples split 50/50 by order of feature
/// seed. A graph with a single sample uses it in both halves.
std::vector<MetaTask> make_meta_tasks(std::span<const Sample> samples);

struct MetaGnnResult {
  MetaResult meta;
  std::vector<MetaTask> tasks;
  RuleSearchResult rule;
};

/// BounceGrad on an update=assigned model followed by the meta-test degree
/// rule search on the first few_shot tasks' training halves.
MetaGnnResult meta_train_gnn(Model& model, std::span<const Sample> samples, const MetaGnnOptions& opts,
                             const MetaObserver& observer = {});

}  // namespace odgl
