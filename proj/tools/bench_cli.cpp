#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "odgl/error.hpp"
#include "odgl/pipeline.hpp"
#include "odgl/rng.hpp"

using namespace odgl;

namespace {

struct CorpusArgs {
  std::uint32_t n = 16;
  std::string grid = "60x60";
  std::size_t seeds = 5;
  std::uint64_t seed = 0;
  std::string out;
  std::string measures;
};

struct SplitArgs {
  std::string corpus, measures, centers, out;
  std::size_t center_count = 5;
  double radius = 0.5;
  std::string bins = "250x250";
  std::size_t group_size = 1000;
  std::uint64_t seed = 0;
};

struct TargetArgs {
  std::string corpus, split, out;
  std::string method = "exact";
  std::uint64_t sweeps = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::string config, corpus, split, targets, out;
  std::vector<int> groups;
  double val_fraction = 0.1;
};

struct EvalArgs {
  std::string model, corpus, split, targets, rule, out;
  std::string grid = "30x30";
};

struct AnalyzeArgs {
  std::string results, corpus, model, split, targets, out;
  double fraction = 0.4;
  double bandwidth = 0.15;
  double bin_width = 1.0;
};

struct MetaArgs {
  std::string config, corpus, split, targets, out;
  std::vector<int> groups;
  std::size_t epochs = 100;
  std::size_t batch = 32;
  std::size_t few_shot = 5;
  std::size_t iters = 1000;
  double temperature = 1e-5;
};

void run_corpus(const CorpusArgs& a) {
  const auto [gk, gp] = parse_grid(a.grid);
  const auto records = build_corpus({a.n, gk, gp, a.seeds, a.seed});
  write_corpus(a.out, records);
  if (!a.measures.empty()) write_measures(a.measures, compute_measures(records));
  std::cerr << "wrote " << records.size() << " graphs to " << a.out << "\n";
}

void run_split(const SplitArgs& a) {
  const auto corpus = read_corpus(a.corpus);
  const auto meas = a.measures.empty() ? compute_measures(corpus) : read_measures(a.measures);
  SplitOptions opts;
  if (!a.centers.empty()) opts.centers = parse_centers(a.centers);
  opts.default_center_count = a.center_count;
  opts.radius = a.radius;
  std::tie(opts.bin_rows, opts.bin_cols) = parse_grid(a.bins);
  opts.group_size = a.group_size;
  opts.seed = a.seed;
  const auto split = make_split(corpus, meas, opts);
  write_split(a.out, split.rows);
  std::map<int, std::size_t> sizes;
  for (const auto& r : split.rows) ++sizes[r.group];
  for (const auto& [g, count] : sizes)
    std::cerr << (g == 0 ? std::string("test") : "group " + std::to_string(g)) << ": " << count << " rows\n";
}

void run_targets_ising(const TargetArgs& a) {
  const Corpus corpus(read_corpus(a.corpus));
  const auto rows = read_split(a.split);
  IsingTargetOptions opts;
  if (a.method == "exact")
    opts.method = IsingMethod::exact;
  else if (a.method == "gibbs")
    opts.method = IsingMethod::gibbs;
  else
    throw ParameterError("--method must be exact or gibbs");
  if (a.sweeps > 0) opts.budget = GibbsConfig{a.sweeps, a.burn_in > 0 ? a.burn_in : a.sweeps / 10};
  opts.seed = a.seed;
  const auto files = make_ising_targets(corpus, rows, opts);
  write_ising_targets(with_suffix(a.out, ".targets.csv"), files.targets);
  write_couplings(with_suffix(a.out, ".couplings.csv"), files.couplings);
  if (files.unaccepted > 0)
    std::cerr << "warning: " << files.unaccepted << " instances did not meet the 0.02 agreement rule\n";
}

void run_targets_gtheory(const TargetArgs& a) {
  const Corpus corpus(read_corpus(a.corpus));
  const auto rows = read_split(a.split);
  const auto files = make_gtheory_targets(corpus, rows);
  write_gt_nodes(with_suffix(a.out, ".nodes.csv"), files.nodes);
  write_gt_graphs(with_suffix(a.out, ".graphs.csv"), files.graphs);
}

void write_trace(const std::string& path, const std::vector<EpochRecord>& trace) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (const auto& r : trace) out += std::to_string(r.epoch) + ',' + fmt(r.train_loss) + ',' + fmt(r.val_loss) + '\n';
  write_file_atomic(path, out);
}

void run_train(const TrainArgs& a) {
  ModelConfig cfg = ModelConfig::from_key_values(read_key_values(a.config));
  cfg.validate();
  if (cfg.update == UpdateKind::assigned) throw ParameterError("update=assigned models are trained with `meta`");
  const Corpus corpus(read_corpus(a.corpus));
  const auto split = read_split(a.split);
  const auto rows = group_rows(split, a.groups);
  if (rows.empty()) throw ParameterError("no training rows in the selected groups");
  std::vector<SplitRecord> train_rows, val_rows;
  holdout(rows, a.val_fraction, cfg.seed, train_rows, val_rows);
  const auto train_set = load_samples(cfg.task, corpus, train_rows, a.targets);
  const auto val_set = load_samples(cfg.task, corpus, val_rows, a.targets);
  if (cfg.task == TaskKind::gtheory) cfg.norm = fit_target_norm(train_set);
  Model model(cfg, cfg.seed);
  TrainOptions opts;
  opts.val_every = std::max<std::size_t>(1, cfg.epochs / 100);
  const auto trace = train(model, train_set, val_set, opts);
  save_model(model, a.out);
  write_trace(a.out + ".trace.csv", trace);
  std::cerr << "trained on " << train_set.size() << " samples, final loss " << trace.back().train_loss << "\n";
}

std::vector<EvalResult> evaluate_split(const Model& model, const Corpus& corpus, const std::vector<SplitRecord>& rows,
                                       const std::string& targets, const std::string& rule_path) {
  const auto samples = load_samples(model.config().task, corpus, rows, targets);
  std::vector<Assignment> owned;
  std::vector<const Assignment*> assign;
  if (model.config().update == UpdateKind::assigned) {
    if (rule_path.empty()) throw ParameterError("an update=assigned model needs --rule");
    const auto text = read_file(rule_path);
    const DegreeRule rule = DegreeRule::parse(text.substr(0, text.find('\n')));
    owned.reserve(samples.size());
    for (const auto& s : samples) owned.push_back(rule.apply(*s.graph));
    for (const auto& o : owned) assign.push_back(&o);
  }
  return evaluate_rows(model, samples, rows, assign);
}

void run_eval(const EvalArgs& a) {
  const Model model = load_model(a.model);
  const Corpus corpus(read_corpus(a.corpus));
  const auto rows = test_rows(read_split(a.split));
  if (rows.empty()) throw ParameterError("the split has no test rows");
  const auto results = evaluate_split(model, corpus, rows, a.targets, a.rule);
  const auto [gr, gc] = parse_grid(a.grid);
  const EvalGrid grid = heatmap(results, gr, gc);
  write_results(a.out + ".results.csv", results);
  write_grid_csv(a.out + ".grid.csv", grid);
  write_pgm(grid, a.out + ".pgm");
}

void run_analyze(const AnalyzeArgs& a) {
  const auto results = read_results(a.results);
  if (results.empty()) throw ParameterError("no results to analyze");
  const Corpus corpus(read_corpus(a.corpus));
  std::vector<const Graph*> graphs;
  for (const auto& r : results) graphs.push_back(corpus.graph(r.graph_id).get());
  const auto hist = top_fraction_histogram(results, graphs, a.fraction, a.bin_width);
  const auto curve = pc1_projection(results, a.bandwidth);
  std::optional<MessageStats> stats;
  if (!a.model.empty()) {
    if (a.split.empty() || a.targets.empty()) throw ParameterError("--model needs --split and --targets");
    const Model model = load_model(a.model);
    const auto rows = test_rows(read_split(a.split));
    const auto samples = load_samples(model.config().task, corpus, rows, a.targets);
    if (model.config().update == UpdateKind::assigned)
      throw ParameterError("message statistics are not defined for update=assigned models");
    stats = collect_message_stats(model, samples);
  }
  write_file_atomic(a.out, format_report(valley_mode_report(curve, hist), stats));
  write_curve_csv(with_suffix(a.out, ".curve.csv"), curve);
}

void run_meta(const MetaArgs& a) {
  ModelConfig cfg = ModelConfig::from_key_values(read_key_values(a.config));
  cfg.validate();
  if (cfg.update != UpdateKind::assigned) throw ParameterError("meta needs a config with update=assigned");
  const Corpus corpus(read_corpus(a.corpus));
  const auto rows = group_rows(read_split(a.split), a.groups);
  if (rows.empty()) throw ParameterError("no training rows in the selected groups");
  const auto samples = load_samples(cfg.task, corpus, rows, a.targets);
  if (cfg.task == TaskKind::gtheory) cfg.norm = fit_target_norm(samples);
  Model model(cfg, cfg.seed);
  MetaGnnOptions opts;
  opts.epochs = a.epochs;
  opts.batch = a.batch;
  opts.few_shot = a.few_shot;
  opts.search_iters = a.iters;
  opts.seed = cfg.seed;
  opts.init.T = a.temperature;
  const auto res = meta_train_gnn(model, samples, opts);
  save_model(model, a.out);
  write_file_atomic(a.out + ".rule.txt", res.rule.best.to_string() + "\n");
  std::string assign = "graph_id,node,module\n";
  for (std::size_t t = 0; t < res.tasks.size(); ++t) {
    const auto& m = res.meta.assignments.best[t];
    for (std::size_t v = 0; v < m.size(); ++v)
      assign += std::to_string(res.tasks[t].graph_id) + ',' + std::to_string(v) + ',' + std::to_string(m[v]) + '\n';
  }
  write_file_atomic(a.out + ".assignments.csv", assign);
  std::string trace = "iteration,grad_loss\n";
  for (std::size_t i = 0; i < res.meta.grad_loss.size(); ++i)
    trace += std::to_string(i) + ',' + fmt(res.meta.grad_loss[i]) + '\n';
  write_file_atomic(a.out + ".trace.csv", trace);
  std::cerr << "rule: " << res.rule.best.to_string() << " (loss " << res.rule.best_loss << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structurally controlled OOD graph benchmarks"};
  app.require_subcommand(1);

  CorpusArgs ca;
  auto* corpus = app.add_subcommand("corpus", "generate the graph corpus");
  corpus->add_option("--n", ca.n, "nodes per graph");
  corpus->add_option("--grid", ca.grid, "KxP grid over k and p");
  corpus->add_option("--seeds", ca.seeds, "graphs per grid point");
  corpus->add_option("--seed", ca.seed);
  corpus->add_option("--out", ca.out)->required();
  corpus->add_option("--measures", ca.measures, "also write the structural measures CSV");

  SplitArgs sa;
  auto* split = app.add_subcommand("split", "project the corpus and select train groups and the test split");
  split->add_option("--corpus", sa.corpus)->required();
  split->add_option("--measures", sa.measures, "measures CSV (computed when omitted)");
  split->add_option("--centers", sa.centers, "\"x1,y1;x2,y2\" (default: spread over the point cloud)");
  split->add_option("--center-count", sa.center_count);
  split->add_option("--radius", sa.radius);
  split->add_option("--bins", sa.bins, "RxC test subsampling bins");
  split->add_option("--group-size", sa.group_size);
  split->add_option("--seed", sa.seed);
  split->add_option("--out", sa.out)->required();

  TargetArgs ta;
  auto* targets = app.add_subcommand("targets", "generate ground-truth targets");
  targets->require_subcommand(1);
  auto* ising = targets->add_subcommand("ising", "marginal inference targets");
  auto* gtheory = targets->add_subcommand("gtheory", "graph-theory multitask targets");
  for (auto* sub : {ising, gtheory}) {
    sub->add_option("--corpus", ta.corpus)->required();
    sub->add_option("--split", ta.split)->required();
    sub->add_option("--out", ta.out, "output prefix")->required();
  }
  ising->add_option("--method", ta.method, "exact|gibbs");
  ising->add_option("--sweeps", ta.sweeps, "Gibbs sweeps (default depends on n)");
  ising->add_option("--burn-in", ta.burn_in);
  ising->add_option("--seed", ta.seed);

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "train a message-passing model");
  trainc->add_option("--config", tr.config, "key=value model config")->required();
  trainc->add_option("--corpus", tr.corpus)->required();
  trainc->add_option("--split", tr.split)->required();
  trainc->add_option("--targets", tr.targets, "targets prefix")->required();
  trainc->add_option("--groups", tr.groups, "training groups (default: all)")->delimiter(',');
  trainc->add_option("--val-fraction", tr.val_fraction);
  trainc->add_option("--out", tr.out, "checkpoint path")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate on the test split");
  eval->add_option("--model", ea.model)->required();
  eval->add_option("--corpus", ea.corpus)->required();
  eval->add_option("--split", ea.split)->required();
  eval->add_option("--targets", ea.targets)->required();
  eval->add_option("--rule", ea.rule, "module rule file for update=assigned models");
  eval->add_option("--grid", ea.grid, "RxC heatmap cells");
  eval->add_option("--out", ea.out, "output prefix")->required();

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "valley/mode report from evaluation results");
  analyze->add_option("--results", aa.results)->required();
  analyze->add_option("--corpus", aa.corpus)->required();
  analyze->add_option("--fraction", aa.fraction, "top fraction for the degree histogram");
  analyze->add_option("--bandwidth", aa.bandwidth, "PC1 smoothing bandwidth");
  analyze->add_option("--bin-width", aa.bin_width, "degree histogram bin width");
  analyze->add_option("--model", aa.model, "add message statistics for this model");
  analyze->add_option("--split", aa.split);
  analyze->add_option("--targets", aa.targets);
  analyze->add_option("--out", aa.out, "report CSV")->required();

  MetaArgs ma;
  auto* meta = app.add_subcommand("meta", "BounceGrad meta-learning of module assignments");
  meta->add_option("--config", ma.config)->required();
  meta->add_option("--corpus", ma.corpus)->required();
  meta->add_option("--split", ma.split)->required();
  meta->add_option("--targets", ma.targets)->required();
  meta->add_option("--groups", ma.groups)->delimiter(',');
  meta->add_option("--meta-epochs", ma.epochs);
  meta->add_option("--batch", ma.batch);
  meta->add_option("--few-shot", ma.few_shot);
  meta->add_option("--iters", ma.iters, "meta-test search iterations");
  meta->add_option("--temperature", ma.temperature, "initial annealing temperature")->check(CLI::PositiveNumber);
  meta->add_option("--out", ma.out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (corpus->parsed()) run_corpus(ca);
    else if (split->parsed()) run_split(sa);
    else if (ising->parsed()) run_targets_ising(ta);
    else if (gtheory->parsed()) run_targets_gtheory(ta);
    else if (trainc->parsed()) run_train(tr);
    else if (eval->parsed()) run_eval(ea);
    else if (analyze->parsed()) run_analyze(aa);
    else if (meta->parsed()) run_meta(ma);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
