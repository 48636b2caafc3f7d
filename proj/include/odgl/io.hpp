#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odgl/graph.hpp"

namespace odgl {

/// Shortest round-trippable decimal form ("%.17g").
std::string fmt(double x);

/// Writes to "<path>.tmp" and renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

std::vector<std::string> split_fields(std::string_view line, char delim);

double parse_double(std::string_view s);
std::int64_t parse_int(std::string_view s);
std::uint64_t parse_u64(std::string_view s);

/// Line reader for delimited text. Errors carry "<file>:<line>: ".
class RecordReader {
 public:
  /// If header is non-empty, the first line must equal it.
  RecordReader(const std::filesystem::path& path, char delim, std::string_view header);

  /// Next non-empty record; false at end of file.
  bool next();
  std::size_t line() const { return line_; }
  std::size_t size() const { return fields_.size(); }
  const std::string& str(std::size_t i) const;
  double num(std::size_t i) const;
  std::int64_t integer(std::size_t i) const;
  std::uint64_t u64(std::size_t i) const;
  void expect_fields(std::size_t n) const;
  [[noreturn]] void fail(const std::string& msg) const;

 private:
  std::string path_;
  std::ifstream in_;
  char delim_;
  std::size_t line_ = 0;
  std::vector<std::string> fields_;
};

// ---- corpus -----------------------------------------------------------------

struct CorpusRecord {
  std::uint64_t id = 0;
  std::uint32_t n = 0;
  double k = 0.0;
  double p = 0.0;
  std::uint64_t seed = 0;
  Graph graph;
};

/// id <tab> n <tab> k <tab> p <tab> seed <tab> "i:j i:j ..."
std::string format_corpus_line(const CorpusRecord& r);
void write_corpus(const std::filesystem::path& path, std::span<const CorpusRecord> records);
std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);

struct MeasuresRecord {
  std::uint64_t id = 0;
  GraphMeasures m;
};

inline constexpr std::string_view kMeasuresHeader = "id,apl,clust,davg,dmax,dmin,dstd,connected";
void write_measures(const std::filesystem::path& path, std::span<const MeasuresRecord> rows);
std::vector<MeasuresRecord> read_measures(const std::filesystem::path& path);

// ---- split ------------------------------------------------------------------

/// group 0 encodes the test split ("test" in the file); 1.. are training groups.
struct SplitRecord {
  int group = 0;
  std::uint64_t id = 0;
  double pc1 = 0.0;
  double pc2 = 0.0;
  std::uint64_t feature_seed = 0;
};

inline constexpr std::string_view kSplitHeader = "group,id,pc1,pc2,feature_seed";
void write_split(const std::filesystem::path& path, std::span<const SplitRecord> rows);
std::vector<SplitRecord> read_split(const std::filesystem::path& path);

// ---- targets ----------------------------------------------------------------

struct IsingTargetRow {
  std::uint64_t graph_id = 0;
  std::uint64_t feature_seed = 0;
  std::uint32_t node = 0;
  double b = 0.0;
  double p_plus = 0.0;
};

struct CouplingRow {
  std::uint64_t graph_id = 0;
  std::uint64_t feature_seed = 0;
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  double J = 0.0;
};

struct GtNodeRow {
  std::uint64_t graph_id = 0;
  std::uint64_t feature_seed = 0;
  std::uint32_t node = 0;
  std::int32_t sssp = 0;
  std::int32_t ecc = 0;
  double lapfeat = 0.0;
};

struct GtGraphRow {
  std::uint64_t graph_id = 0;
  std::uint64_t feature_seed = 0;
  std::int32_t diameter = 0;
  double specrad = 0.0;
  bool connected = false;
};

inline constexpr std::string_view kIsingTargetsHeader = "graph_id,feature_seed,node,b,p_plus";
inline constexpr std::string_view kCouplingsHeader = "graph_id,feature_seed,i,j,J";
inline constexpr std::string_view kGtNodeHeader = "graph_id,feature_seed,node,sssp,ecc,lapfeat";
inline constexpr std::string_view kGtGraphHeader = "graph_id,feature_seed,diameter,specrad,connected";

void write_ising_targets(const std::filesystem::path& path, std::span<const IsingTargetRow> rows);
std::vector<IsingTargetRow> read_ising_targets(const std::filesystem::path& path);
void write_couplings(const std::filesystem::path& path, std::span<const CouplingRow> rows);
std::vector<CouplingRow> read_couplings(const std::filesystem::path& path);
void write_gt_nodes(const std::filesystem::path& path, std::span<const GtNodeRow> rows);
std::vector<GtNodeRow> read_gt_nodes(const std::filesystem::path& path);
void write_gt_graphs(const std::filesystem::path& path, std::span<const GtGraphRow> rows);
std::vector<GtGraphRow> read_gt_graphs(const std::filesystem::path& path);

// ---- key=value ----------------------------------------------------------------

using KeyValues = std::map<std::string, std::string>;

/// '#' starts a comment line; blank lines are skipped.
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

}  // namespace odgl
