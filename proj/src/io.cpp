#include "odgl/io.hpp"

#include <charconv>
#include <cstdio>
#include <iterator>
#include <limits>
#include <sstream>
#include <system_error>

#include "odgl/error.hpp"

namespace odgl {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw FormatError("write failed on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split_fields(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s) {
  // from_chars for double is available in libstdc++ >= 11.
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw FormatError("not a number: '" + std::string(s) + "'");
  }
  return x;
}

std::int64_t parse_int(std::string_view s) {
  std::int64_t x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("not an integer: '" + std::string(s) + "'");
  return x;
}

std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError("not an unsigned integer: '" + std::string(s) + "'");
  return x;
}

RecordReader::RecordReader(const std::filesystem::path& path, char delim, std::string_view header)
    : path_(path.string()), in_(path), delim_(delim) {
  if (!in_) throw FormatError("cannot open " + path_);
  if (!header.empty()) {
    std::string first;
    if (!std::getline(in_, first)) fail("empty file, expected header '" + std::string(header) + "'");
    ++line_;
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (first != header) fail("expected header '" + std::string(header) + "', got '" + first + "'");
  }
}

bool RecordReader::next() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty() || text[0] == '#') continue;
    fields_ = split_fields(text, delim_);
    return true;
  }
  return false;
}

const std::string& RecordReader::str(std::size_t i) const {
  if (i >= fields_.size()) fail("missing field " + std::to_string(i + 1));
  return fields_[i];
}

double RecordReader::num(std::size_t i) const {
  try {
    return parse_double(str(i));
  } catch (const FormatError& e) {
    fail(e.what());
  }
}

std::int64_t RecordReader::integer(std::size_t i) const {
  try {
    return parse_int(str(i));
  } catch (const FormatError& e) {
    fail(e.what());
  }
}

std::uint64_t RecordReader::u64(std::size_t i) const {
  try {
    return parse_u64(str(i));
  } catch (const FormatError& e) {
    fail(e.what());
  }
}

void RecordReader::expect_fields(std::size_t n) const {
  if (fields_.size() != n)
    fail("expected " + std::to_string(n) + " fields, got " + std::to_string(fields_.size()));
}

void RecordReader::fail(const std::string& msg) const {
  throw FormatError(path_ + ":" + std::to_string(line_) + ": " + msg);
}

std::string format_corpus_line(const CorpusRecord& r) {
  std::string s = std::to_string(r.id) + '\t' + std::to_string(r.n) + '\t' + fmt(r.k) + '\t' + fmt(r.p) + '\t' +
                  std::to_string(r.seed) + '\t';
  bool first = true;
  for (const auto& [i, j] : r.graph.edges()) {
    if (!first) s += ' ';
    first = false;
    s += std::to_string(i);
    s += ':';
    s += std::to_string(j);
  }
  return s;
}

void write_corpus(const std::filesystem::path& path, std::span<const CorpusRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += format_corpus_line(r);
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  RecordReader rd(path, '\t', "");
  std::vector<CorpusRecord> out;
  while (rd.next()) {
    rd.expect_fields(6);
    CorpusRecord r;
    r.id = rd.u64(0);
    r.n = static_cast<std::uint32_t>(rd.u64(1));
    r.k = rd.num(2);
    r.p = rd.num(3);
    r.seed = rd.u64(4);
    std::vector<Edge> edges;
    const std::string& list = rd.str(5);
    if (!list.empty()) {
      for (const auto& tok : split_fields(list, ' ')) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) rd.fail("bad edge token '" + tok + "'");
        try {
          edges.emplace_back(static_cast<std::uint32_t>(parse_u64(std::string_view(tok).substr(0, colon))),
                             static_cast<std::uint32_t>(parse_u64(std::string_view(tok).substr(colon + 1))));
        } catch (const FormatError& e) {
          rd.fail(e.what());
        }
      }
    }
    try {
      r.graph = Graph(r.n, std::move(edges));
    } catch (const ParameterError& e) {
      rd.fail(e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_measures(const std::filesystem::path& path, std::span<const MeasuresRecord> rows) {
  std::string out(kMeasuresHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.id);
    for (double v : r.m.as_array()) out += ',' + fmt(v);
    out += r.m.connected ? ",1\n" : ",0\n";
  }
  write_file_atomic(path, out);
}

std::vector<MeasuresRecord> read_measures(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kMeasuresHeader);
  std::vector<MeasuresRecord> out;
  while (rd.next()) {
    rd.expect_fields(8);
    MeasuresRecord r;
    r.id = rd.u64(0);
    r.m.avg_path_length = rd.num(1);
    r.m.clustering = rd.num(2);
    r.m.deg_avg = rd.num(3);
    r.m.deg_max = rd.num(4);
    r.m.deg_min = rd.num(5);
    r.m.deg_std = rd.num(6);
    r.m.connected = rd.integer(7) != 0;
    out.push_back(r);
  }
  return out;
}

void write_split(const std::filesystem::path& path, std::span<const SplitRecord> rows) {
  std::string out(kSplitHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.group == 0 ? std::string("test") : std::to_string(r.group);
    out += ',' + std::to_string(r.id) + ',' + fmt(r.pc1) + ',' + fmt(r.pc2) + ',' + std::to_string(r.feature_seed) +
           '\n';
  }
  write_file_atomic(path, out);
}

std::vector<SplitRecord> read_split(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kSplitHeader);
  std::vector<SplitRecord> out;
  while (rd.next()) {
    rd.expect_fields(5);
    SplitRecord r;
    if (rd.str(0) == "test") {
      r.group = 0;
    } else {
      const auto g = rd.integer(0);
      if (g < 1) rd.fail("group must be 'test' or a positive integer");
      r.group = static_cast<int>(g);
    }
    r.id = rd.u64(1);
    r.pc1 = rd.num(2);
    r.pc2 = rd.num(3);
    r.feature_seed = rd.u64(4);
    out.push_back(r);
  }
  return out;
}

namespace {

std::string key_prefix(std::uint64_t graph_id, std::uint64_t feature_seed) {
  return std::to_string(graph_id) + ',' + std::to_string(feature_seed) + ',';
}

}  // namespace

void write_ising_targets(const std::filesystem::path& path, std::span<const IsingTargetRow> rows) {
  std::string out(kIsingTargetsHeader);
  out += '\n';
  for (const auto& r : rows)
    out += key_prefix(r.graph_id, r.feature_seed) + std::to_string(r.node) + ',' + fmt(r.b) + ',' + fmt(r.p_plus) + '\n';
  write_file_atomic(path, out);
}

std::vector<IsingTargetRow> read_ising_targets(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kIsingTargetsHeader);
  std::vector<IsingTargetRow> out;
  while (rd.next()) {
    rd.expect_fields(5);
    out.push_back({rd.u64(0), rd.u64(1), static_cast<std::uint32_t>(rd.u64(2)), rd.num(3), rd.num(4)});
  }
  return out;
}

void write_couplings(const std::filesystem::path& path, std::span<const CouplingRow> rows) {
  std::string out(kCouplingsHeader);
  out += '\n';
  for (const auto& r : rows)
    out += key_prefix(r.graph_id, r.feature_seed) + std::to_string(r.i) + ',' + std::to_string(r.j) + ',' + fmt(r.J) +
           '\n';
  write_file_atomic(path, out);
}

std::vector<CouplingRow> read_couplings(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kCouplingsHeader);
  std::vector<CouplingRow> out;
  while (rd.next()) {
    rd.expect_fields(5);
    out.push_back({rd.u64(0), rd.u64(1), static_cast<std::uint32_t>(rd.u64(2)), static_cast<std::uint32_t>(rd.u64(3)),
                   rd.num(4)});
  }
  return out;
}

void write_gt_nodes(const std::filesystem::path& path, std::span<const GtNodeRow> rows) {
  std::string out(kGtNodeHeader);
  out += '\n';
  for (const auto& r : rows)
    out += key_prefix(r.graph_id, r.feature_seed) + std::to_string(r.node) + ',' + std::to_string(r.sssp) + ',' +
           std::to_string(r.ecc) + ',' + fmt(r.lapfeat) + '\n';
  write_file_atomic(path, out);
}

std::vector<GtNodeRow> read_gt_nodes(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kGtNodeHeader);
  std::vector<GtNodeRow> out;
  while (rd.next()) {
    rd.expect_fields(6);
    out.push_back({rd.u64(0), rd.u64(1), static_cast<std::uint32_t>(rd.u64(2)), static_cast<std::int32_t>(rd.integer(3)),
                   static_cast<std::int32_t>(rd.integer(4)), rd.num(5)});
  }
  return out;
}

void write_gt_graphs(const std::filesystem::path& path, std::span<const GtGraphRow> rows) {
  std::string out(kGtGraphHeader);
  out += '\n';
  for (const auto& r : rows)
    out += key_prefix(r.graph_id, r.feature_seed) + std::to_string(r.diameter) + ',' + fmt(r.specrad) + ',' +
           (r.connected ? "1" : "0") + '\n';
  write_file_atomic(path, out);
}

std::vector<GtGraphRow> read_gt_graphs(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kGtGraphHeader);
  std::vector<GtGraphRow> out;
  while (rd.next()) {
    rd.expect_fields(5);
    out.push_back({rd.u64(0), rd.u64(1), static_cast<std::int32_t>(rd.integer(2)), rd.num(3), rd.integer(4) != 0});
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  KeyValues kv;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string::npos || text[first] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(line) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw FormatError(path.string() + ":" + std::to_string(line) + ": empty key");
    if (!kv.emplace(key, trim(text.substr(eq + 1))).second)
      throw FormatError(path.string() + ":" + std::to_string(line) + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + '=' + v + '\n';
  return out;
}

}  // namespace odgl
