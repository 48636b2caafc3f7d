#include "odgl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "odgl/error.hpp"
#include "odgl/graph_theory.hpp"
#include "odgl/ising.hpp"
#include "odgl/rng.hpp"

namespace odgl {

namespace {

constexpr std::uint64_t kTestLabel = 0x74657374ULL;

std::vector<double> linspace(double a, double b, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = count == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

using InstanceKey = std::pair<std::uint64_t, std::uint64_t>;

}  // namespace

std::vector<CorpusRecord> build_corpus(const CorpusSpec& spec) {
  if (spec.n < 4) throw ParameterError("corpus needs n >= 4 so that k can span [2, n - 2]");
  if (spec.grid_k == 0 || spec.grid_p == 0 || spec.seeds == 0) throw ParameterError("corpus grid must be non-empty");
  const auto ks = linspace(2.0, static_cast<double>(spec.n) - 2.0, spec.grid_k);
  auto ps = linspace(0.0, 1.0, spec.grid_p);
  for (auto& p : ps) p *= p;
  std::vector<CorpusRecord> out;
  out.reserve(spec.grid_k * spec.grid_p * spec.seeds);
  std::uint64_t id = 0;
  for (std::size_t ik = 0; ik < ks.size(); ++ik)
    for (std::size_t ip = 0; ip < ps.size(); ++ip)
      for (std::size_t s = 0; s < spec.seeds; ++s) {
        CorpusRecord r;
        r.id = id++;
        r.n = spec.n;
        r.k = ks[ik];
        r.p = ps[ip];
        r.seed = derive_seed(spec.seed, {ik, ip, s});
        r.graph = generate({r.n, r.k, r.p, r.seed});
        out.push_back(std::move(r));
      }
  return out;
}

std::vector<MeasuresRecord> compute_measures(std::span<const CorpusRecord> corpus) {
  std::vector<MeasuresRecord> out;
  out.reserve(corpus.size());
  for (const auto& r : corpus) out.push_back({r.id, measures(r.graph)});
  return out;
}

Corpus::Corpus(std::vector<CorpusRecord> records) : records_(std::move(records)) {
  graphs_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!index_.emplace(records_[i].id, i).second)
      throw FormatError("duplicate corpus id " + std::to_string(records_[i].id));
    graphs_.push_back(std::make_shared<const Graph>(records_[i].graph));
  }
}

const std::shared_ptr<const Graph>& Corpus::graph(std::uint64_t id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw FormatError("graph id " + std::to_string(id) + " is not in the corpus");
  return graphs_[it->second];
}

SplitOutput make_split(std::span<const CorpusRecord> corpus, std::span<const MeasuresRecord> meas,
                       const SplitOptions& opts) {
  if (corpus.size() != meas.size()) throw FormatError("measures file does not match the corpus size");
  std::vector<MeasureRow> rows;
  std::vector<IsoKey> keys;
  rows.reserve(corpus.size());
  keys.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].id != meas[i].id)
      throw FormatError("measures row " + std::to_string(i + 1) + " has id " + std::to_string(meas[i].id) +
                        ", corpus has " + std::to_string(corpus[i].id));
    rows.push_back(meas[i].m.as_array());
    keys.push_back(iso_key(corpus[i].graph));
  }
  SplitOutput out;
  out.pca = fit_pca(rows);
  for (const auto& r : rows) out.points.push_back(project(out.pca, r));
  out.centers = opts.centers.empty() ? default_centers(out.points, opts.default_center_count) : opts.centers;

  SplitSpec spec;
  spec.centers = out.centers;
  spec.radius = opts.radius;
  spec.test_rows = opts.bin_rows;
  spec.test_cols = opts.bin_cols;
  spec.group_size = opts.group_size;
  spec.seed = opts.seed;
  const auto groups = select_groups(out.points, spec, keys);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (const auto& m : groups[g]) {
      const auto& p = out.points[m.index];
      out.rows.push_back({static_cast<int>(g + 1), corpus[m.index].id, p.x, p.y, m.feature_seed});
    }
  for (std::size_t i : subsample_test(out.points, opts.bin_rows, opts.bin_cols, opts.seed)) {
    const auto& p = out.points[i];
    out.rows.push_back({0, corpus[i].id, p.x, p.y, derive_seed(opts.seed, {kTestLabel, corpus[i].id})});
  }
  return out;
}

std::vector<Point2> parse_centers(const std::string& text) {
  std::vector<Point2> out;
  for (const auto& item : split_fields(text, ';')) {
    if (item.empty()) continue;
    const auto xy = split_fields(item, ',');
    if (xy.size() != 2) throw ParameterError("center '" + item + "' is not of the form x,y");
    try {
      out.push_back({parse_double(xy[0]), parse_double(xy[1])});
    } catch (const FormatError& e) {
      throw ParameterError(std::string("bad center: ") + e.what());
    }
  }
  if (out.empty()) throw ParameterError("no centers given");
  return out;
}

std::pair<std::uint32_t, std::uint32_t> parse_grid(const std::string& text) {
  const auto parts = split_fields(text, 'x');
  if (parts.size() != 2) throw ParameterError("grid '" + text + "' is not of the form RxC");
  try {
    const auto r = parse_u64(parts[0]);
    const auto c = parse_u64(parts[1]);
    if (r == 0 || c == 0) throw ParameterError("grid dimensions must be positive");
    return {static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)};
  } catch (const FormatError& e) {
    throw ParameterError("bad grid '" + text + "': " + e.what());
  }
}

// ---- targets ----------------------------------------------------------------------

IsingTarget ising_target(const std::shared_ptr<const Graph>& g, std::uint64_t graph_id, std::uint64_t feature_seed,
                         const IsingTargetOptions& opts) {
  IsingTarget t;
  t.model = sample_model(*g, feature_seed);
  if (opts.method == IsingMethod::exact) {
    t.marginals = exact_marginals(t.model);
    return t;
  }
  GibbsConfig budget = opts.budget.value_or(default_gibbs_budget(g->num_nodes()));
  const bool exact_ref = g->num_nodes() <= kMaxExactNodes;
  const Marginals exact = exact_ref ? exact_marginals(t.model) : Marginals{};
  for (std::size_t round = 0;; ++round) {
    t.marginals = gibbs_marginals(t.model, budget.sweeps, budget.burn_in,
                                  derive_seed(opts.seed, {graph_id, feature_seed, round, 1}));
    const Marginals ref = exact_ref ? exact
                                    : gibbs_marginals(t.model, budget.sweeps, budget.burn_in,
                                                      derive_seed(opts.seed, {graph_id, feature_seed, round, 2}));
    t.accepted = accept_targets(t.marginals, ref);
    if (t.accepted || round >= opts.max_doublings) return t;
    budget.sweeps *= 2;
    budget.burn_in *= 2;
  }
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> unique_instances(std::span<const SplitRecord> rows) {
  std::vector<InstanceKey> out;
  std::map<InstanceKey, bool> seen;
  for (const auto& r : rows)
    if (seen.emplace(InstanceKey{r.id, r.feature_seed}, true).second) out.emplace_back(r.id, r.feature_seed);
  return out;
}

IsingTargetFiles make_ising_targets(const Corpus& corpus, std::span<const SplitRecord> rows,
                                    const IsingTargetOptions& opts) {
  IsingTargetFiles out;
  for (const auto& [id, fs] : unique_instances(rows)) {
    const auto& g = corpus.graph(id);
    const IsingTarget t = ising_target(g, id, fs, opts);
    if (!t.accepted) ++out.unaccepted;
    for (std::uint32_t v = 0; v < g->num_nodes(); ++v)
      out.targets.push_back({id, fs, v, t.model.b[v], t.marginals.p_plus[v]});
    for (std::size_t e = 0; e < g->num_edges(); ++e)
      out.couplings.push_back({id, fs, g->edges()[e].first, g->edges()[e].second, t.model.J[e]});
  }
  return out;
}

GtTargetFiles make_gtheory_targets(const Corpus& corpus, std::span<const SplitRecord> rows) {
  GtTargetFiles out;
  for (const auto& [id, fs] : unique_instances(rows)) {
    const auto& g = corpus.graph(id);
    const TaskFeatures f = make_features(*g, fs);
    const MultiTaskTarget t = multitask_targets(*g, f);
    for (std::uint32_t v = 0; v < g->num_nodes(); ++v) out.nodes.push_back({id, fs, v, t.sssp[v], t.ecc[v], t.lapfeat[v]});
    out.graphs.push_back({id, fs, t.diameter, t.spectral_radius, t.connected});
  }
  return out;
}

// ---- samples ------------------------------------------------------------------------

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const std::string& suffix) {
  auto p = prefix;
  p += suffix;
  return p;
}

std::vector<Sample> load_samples(TaskKind task, const Corpus& corpus, std::span<const SplitRecord> rows,
                                 const std::filesystem::path& prefix) {
  std::map<InstanceKey, Sample> built;
  if (task == TaskKind::ising) {
    std::map<InstanceKey, IsingModel> models;
    std::map<InstanceKey, Marginals> marg;
    for (const auto& r : read_ising_targets(with_suffix(prefix, ".targets.csv"))) {
      const InstanceKey key{r.graph_id, r.feature_seed};
      if (!corpus.contains(r.graph_id)) continue;
      auto& m = models[key];
      auto& p = marg[key];
      if (r.node != m.b.size())
        throw FormatError("targets for graph " + std::to_string(r.graph_id) + " are not in node order");
      m.b.push_back(r.b);
      p.p_plus.push_back(r.p_plus);
    }
    for (const auto& c : read_couplings(with_suffix(prefix, ".couplings.csv"))) {
      const InstanceKey key{c.graph_id, c.feature_seed};
      auto it = models.find(key);
      if (it == models.end()) continue;
      it->second.J.push_back(c.J);
    }
    for (auto& [key, m] : models) {
      const auto& g = corpus.graph(key.first);
      m.graph = *g;
      if (m.b.size() != g->num_nodes() || m.J.size() != g->num_edges())
        throw FormatError("targets for graph " + std::to_string(key.first) + " do not match its node/edge counts");
      built.emplace(key, make_ising_sample(g, key.first, key.second, m, marg[key]));
    }
  } else {
    std::map<InstanceKey, MultiTaskTarget> targets;
    for (const auto& r : read_gt_nodes(with_suffix(prefix, ".nodes.csv"))) {
      if (!corpus.contains(r.graph_id)) continue;
      auto& t = targets[{r.graph_id, r.feature_seed}];
      if (r.node != t.sssp.size())
        throw FormatError("targets for graph " + std::to_string(r.graph_id) + " are not in node order");
      t.sssp.push_back(r.sssp);
      t.ecc.push_back(r.ecc);
      t.lapfeat.push_back(r.lapfeat);
    }
    for (const auto& r : read_gt_graphs(with_suffix(prefix, ".graphs.csv"))) {
      auto it = targets.find({r.graph_id, r.feature_seed});
      if (it == targets.end()) continue;
      it->second.diameter = r.diameter;
      it->second.spectral_radius = r.specrad;
      it->second.connected = r.connected;
    }
    for (auto& [key, t] : targets) {
      const auto& g = corpus.graph(key.first);
      built.emplace(key, make_gtheory_sample(g, key.first, key.second, make_features(*g, key.second), t));
    }
  }
  std::vector<Sample> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    auto it = built.find({r.id, r.feature_seed});
    if (it == built.end())
      throw FormatError("no targets for graph " + std::to_string(r.id) + " feature seed " + std::to_string(r.feature_seed));
    out.push_back(it->second);
  }
  return out;
}

std::vector<SplitRecord> group_rows(std::span<const SplitRecord> rows, std::span<const int> groups) {
  std::vector<SplitRecord> out;
  for (const auto& r : rows) {
    if (r.group == 0) continue;
    if (groups.empty() || std::find(groups.begin(), groups.end(), r.group) != groups.end()) out.push_back(r);
  }
  return out;
}

std::vector<SplitRecord> test_rows(std::span<const SplitRecord> rows) {
  std::vector<SplitRecord> out;
  for (const auto& r : rows)
    if (r.group == 0) out.push_back(r);
  return out;
}

void holdout(std::span<const SplitRecord> rows, double fraction, std::uint64_t seed, std::vector<SplitRecord>& train,
             std::vector<SplitRecord>& val) {
  if (fraction < 0.0 || fraction >= 1.0) throw ParameterError("validation fraction must be in [0, 1)");
  train.clear();
  val.clear();
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0x76616cULL}));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  std::size_t nval = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rows.size())));
  if (rows.size() < 2) nval = 0;
  std::vector<bool> is_val(rows.size(), false);
  for (std::size_t i = 0; i < nval; ++i) is_val[idx[i]] = true;
  for (std::size_t i = 0; i < rows.size(); ++i) (is_val[i] ? val : train).push_back(rows[i]);
}

// ---- models -------------------------------------------------------------------

void save_model(const Model& model, const std::filesystem::path& path) {
  save_checkpoint(model.params(), path);
  write_file_atomic(with_suffix(path, ".cfg"), format_key_values(model.config().to_key_values()));
}

Model load_model(const std::filesystem::path& path) {
  const ModelConfig cfg = ModelConfig::from_key_values(read_key_values(with_suffix(path, ".cfg")));
  Model model(cfg, cfg.seed);
  const ParamSet saved = load_checkpoint(path);
  const std::string mismatch = path.string() + ": checkpoint does not match its configuration";
  try {
    if (saved.size() != model.params().size() || model.params().copy_matching(saved) != saved.size())
      throw FormatError(mismatch);
  } catch (const ParameterError& e) {
    throw FormatError(mismatch + " (" + e.what() + ")");
  }
  return model;
}

// ---- evaluation ------------------------------------------------------------------------

std::vector<EvalResult> evaluate_rows(const Model& model, std::span<const Sample> samples,
                                      std::span<const SplitRecord> rows, std::span<const Assignment* const> assignments) {
  if (samples.size() != rows.size()) throw ParameterError("samples and split rows are not aligned");
  const auto losses = evaluate(model, samples, 256, assignments);
  std::vector<EvalResult> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Graph& g = *samples[i].graph;
    const double davg = g.num_nodes() ? 2.0 * static_cast<double>(g.num_edges()) / g.num_nodes() : 0.0;
    out.push_back({rows[i].id, rows[i].feature_seed, rows[i].pc1, rows[i].pc2, davg, losses[i]});
  }
  return out;
}

void write_results(const std::filesystem::path& path, std::span<const EvalResult> results) {
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : results)
    out += std::to_string(r.graph_id) + ',' + std::to_string(r.feature_seed) + ',' + fmt(r.pc1) + ',' + fmt(r.pc2) +
           ',' + fmt(r.deg_avg) + ',' + fmt(r.loss) + '\n';
  write_file_atomic(path, out);
}

std::vector<EvalResult> read_results(const std::filesystem::path& path) {
  RecordReader rd(path, ',', kResultsHeader);
  std::vector<EvalResult> out;
  while (rd.next()) {
    rd.expect_fields(6);
    out.push_back({rd.u64(0), rd.u64(1), rd.num(2), rd.num(3), rd.num(4), rd.num(5)});
  }
  return out;
}

void write_grid_csv(const std::filesystem::path& path, const EvalGrid& g) {
  std::string out = "row,col,pc1_lo,pc1_hi,pc2_lo,pc2_hi,count,mean_log_loss\n";
  const double dx = (g.xmax - g.xmin) / static_cast<double>(g.cols);
  const double dy = (g.ymax - g.ymin) / static_cast<double>(g.rows);
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c) {
      out += std::to_string(r) + ',' + std::to_string(c) + ',' + fmt(g.xmin + dx * c) + ',' + fmt(g.xmin + dx * (c + 1)) +
             ',' + fmt(g.ymin + dy * r) + ',' + fmt(g.ymin + dy * (r + 1)) + ',' + std::to_string(g.count[r * g.cols + c]) +
             ',' + (g.occupied(r, c) ? fmt(g.value(r, c)) : std::string()) + '\n';
    }
  write_file_atomic(path, out);
}

void write_curve_csv(const std::filesystem::path& path, const Pc1Curve& c) {
  std::string out = "pc1,count,mean_log_loss,smoothed,valley\n";
  for (std::size_t i = 0; i < c.center.size(); ++i) {
    const bool valley = std::find(c.valleys.begin(), c.valleys.end(), i) != c.valleys.end();
    out += fmt(c.center[i]) + ',' + std::to_string(c.count[i]) + ',' + fmt(c.raw[i]) + ',' + fmt(c.smooth[i]) + ',' +
           (valley ? "1" : "0") + '\n';
  }
  write_file_atomic(path, out);
}

std::string format_report(const ValleyModeReport& rep, const std::optional<MessageStats>& stats) {
  std::string out = "metric,value\n";
  auto real = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("absent"); };
  auto count = [](const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : std::string("absent"); };
  for (int k = 0; k < 2; ++k) out += "valley" + std::to_string(k + 1) + "_log_loss," + real(rep.valley_loss[k]) + '\n';
  for (int k = 0; k < 2; ++k) out += "valley" + std::to_string(k + 1) + "_pc1," + real(rep.valley_pc1[k]) + '\n';
  for (int k = 0; k < 2; ++k) out += "mode" + std::to_string(k + 1) + "_nodes," + count(rep.mode_count[k]) + '\n';
  for (int k = 0; k < 2; ++k) out += "mode" + std::to_string(k + 1) + "_degree," + real(rep.mode_degree[k]) + '\n';
  if (stats) {
    out += "message_mean_magnitude," + fmt(stats->mean_magnitude) + '\n';
    out += "message_cov_trace," + fmt(stats->cov_trace) + '\n';
  }
  return out;
}

// ---- meta-learning on graphs --------------------------------------------------------------

std::vector<MetaTask> make_meta_tasks(std::span<const Sample> samples) {
  std::vector<MetaTask> tasks;
  std::map<std::uint64_t, std::size_t> where;
  std::vector<std::vector<const Sample*>> members;
  for (const auto& s : samples) {
    auto [it, fresh] = where.emplace(s.graph_id, tasks.size());
    if (fresh) {
      tasks.push_back({s.graph_id, {}, {}});
      members.emplace_back();
    }
    members[it->second].push_back(&s);
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    auto& m = members[t];
    std::stable_sort(m.begin(), m.end(), [](const Sample* a, const Sample* b) { return a->feature_seed < b->feature_seed; });
    if (m.size() == 1) {
      tasks[t].train_half = m;
      tasks[t].test_half = m;
      continue;
    }
    const std::size_t half = (m.size() + 1) / 2;
    tasks[t].train_half.assign(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(half));
    tasks[t].test_half.assign(m.begin() + static_cast<std::ptrdiff_t>(half), m.end());
  }
  return tasks;
}

MetaGnnResult meta_train_gnn(Model& model, std::span<const Sample> samples, const MetaGnnOptions& opts,
                             const MetaObserver& observer) {
  if (model.config().update != UpdateKind::assigned)
    throw ParameterError("meta-learning needs a model with update=assigned");
  if (samples.empty()) throw ParameterError("meta-learning needs training samples");
  MetaGnnResult res;
  res.tasks = make_meta_tasks(samples);
  const auto& tasks = res.tasks;
  AdamState adam;
  adam.lr = model.config().lr;
  adam.weight_decay = model.config().weight_decay;

  AssignmentLossFn train_loss = [&](std::span<const std::size_t> ids, std::span<const Assignment* const> a) {
    std::vector<const Sample*> ptrs;
    std::vector<const Assignment*> assign;
    std::vector<std::size_t> owner;
    for (std::size_t k = 0; k < ids.size(); ++k)
      for (const Sample* s : tasks[ids[k]].train_half) {
        ptrs.push_back(s);
        assign.push_back(a[k]);
        owner.push_back(k);
      }
    const auto losses = evaluate(model, ptrs, assign, 256);
    std::vector<double> sum(ids.size(), 0.0), cnt(ids.size(), 0.0);
    for (std::size_t i = 0; i < losses.size(); ++i) {
      sum[owner[i]] += losses[i];
      cnt[owner[i]] += 1.0;
    }
    for (std::size_t k = 0; k < ids.size(); ++k) sum[k] /= cnt[k];
    return sum;
  };
  GradFn grad = [&](std::span<const std::size_t> ids, std::span<const Assignment* const> a) {
    std::vector<const Sample*> ptrs;
    std::vector<const Assignment*> assign;
    for (std::size_t k = 0; k < ids.size(); ++k)
      for (const Sample* s : tasks[ids[k]].test_half) {
        ptrs.push_back(s);
        assign.push_back(a[k]);
      }
    return gradient_step(model, adam, ptrs, assign, model.eval_options());
  };

  std::vector<std::size_t> sizes;
  for (const auto& t : tasks) sizes.push_back(t.train_half.front()->graph->num_nodes());
  MetaConfig mc;
  mc.epochs = opts.epochs;
  mc.batch = opts.batch;
  mc.init = opts.init;
  mc.seed = opts.seed;
  res.meta = meta_train(sizes, train_loss, grad, mc, observer);

  std::vector<const Sample*> few;
  std::size_t max_degree = 0;
  for (std::size_t t = 0; t < std::min(opts.few_shot, tasks.size()); ++t)
    for (const Sample* s : tasks[t].train_half) {
      few.push_back(s);
      for (std::uint32_t v = 0; v < s->graph->num_nodes(); ++v) max_degree = std::max(max_degree, s->graph->degree(v));
    }
  auto rule_loss = [&](const DegreeRule& rule) {
    std::vector<Assignment> owned;
    owned.reserve(few.size());
    for (const Sample* s : few) owned.push_back(rule.apply(*s->graph));
    std::vector<const Assignment*> assign;
    for (const auto& a : owned) assign.push_back(&a);
    const auto losses = evaluate(model, few, assign, 256);
    return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  };
  res.rule = meta_test_search(max_degree, rule_loss, opts.search_iters, derive_seed(opts.seed, {kTestLabel}), opts.init);
  return res;
}

}  // namespace odgl
