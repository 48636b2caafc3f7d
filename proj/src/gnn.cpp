#include "odgl/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "odgl/error.hpp"
#include "odgl/rng.hpp"

namespace odgl {

namespace {

constexpr std::size_t kGtNodeTasks = 3;   // sssp, ecc, lapfeat
constexpr std::size_t kGtGraphTasks = 3;  // diameter, spectral radius, connected
constexpr double kGatePiEps = 1e-6;

// Component stream ids for weight initialization.
enum : std::uint64_t {
  kSeedEncNode = 1,
  kSeedEncEdge = 2,
  kSeedGateEncNode = 3,
  kSeedGateEncEdge = 4,
  kSeedGateHead = 5,
  kSeedDecNode = 6,
  kSeedDecGraph = 7,
  kSeedLayer = 100,
  kSeedGateLayer = 200,
};

Rng stream(std::uint64_t seed, std::uint64_t component, std::uint64_t part = 0) {
  return Rng(derive_seed(seed, {component, part}));
}

std::vector<std::size_t> message_dims(const ModelConfig& cfg) {
  if (cfg.message == MessageKind::mlp) return {3 * cfg.dim, cfg.dim, cfg.dim};
  return {3 * cfg.dim, cfg.dim};
}

TaskKind parse_task(const std::string& s) {
  if (s == "ising") return TaskKind::ising;
  if (s == "gtheory") return TaskKind::gtheory;
  throw ParameterError("unknown task '" + s + "' (expected ising|gtheory)");
}

UpdateKind parse_update(const std::string& s) {
  if (s == "single") return UpdateKind::single;
  if (s == "sigmoid") return UpdateKind::sigmoid_gate;
  if (s == "binary") return UpdateKind::binary_gate;
  if (s == "assigned") return UpdateKind::assigned;
  throw ParameterError("unknown update '" + s + "' (expected single|sigmoid|binary|assigned)");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    return static_cast<std::size_t>(parse_u64(v));
  } catch (const FormatError&) {
    throw ParameterError("config key '" + key + "' needs a non-negative integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const FormatError&) {
    throw ParameterError("config key '" + key + "' needs a number, got '" + v + "'");
  }
}

}  // namespace

std::string to_string(TaskKind t) { return t == TaskKind::ising ? "ising" : "gtheory"; }

std::string to_string(UpdateKind u) {
  switch (u) {
    case UpdateKind::single: return "single";
    case UpdateKind::sigmoid_gate: return "sigmoid";
    case UpdateKind::binary_gate: return "binary";
    case UpdateKind::assigned: return "assigned";
  }
  return "single";
}

ModelConfig ModelConfig::defaults(TaskKind task) {
  ModelConfig c;
  c.task = task;
  if (task == TaskKind::gtheory) {
    c.dim = 16;
    c.layers = 2;
    c.steps = 1;
    c.aggregation = Aggregation::max;
    c.attention = false;
    c.message = MessageKind::linear;
    c.lr = 3e-3;
    c.weight_decay = 1e-6;
    c.batch = 256;
    c.epochs = 5000;
  }
  return c;
}

void ModelConfig::validate() const {
  if (dim == 0 || layers == 0 || steps == 0) throw ParameterError("dim, layers and steps must be positive");
  if (batch == 0) throw ParameterError("batch must be positive");
  if (!(lr > 0.0)) throw ParameterError("lr must be positive");
  if (weight_decay < 0.0) throw ParameterError("weight decay must be non-negative");
  if (update == UpdateKind::binary_gate && !(tau > 0.0 && tau_final > 0.0))
    throw ParameterError("binary gating needs tau > 0");
  if (!(norm.lap_std > 0.0 && norm.spec_std > 0.0)) throw ParameterError("target scales must be positive");
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv["task"] = to_string(task);
  kv["update"] = to_string(update);
  kv["agg"] = aggregation == Aggregation::sum ? "sum" : "max";
  kv["attention"] = attention ? "1" : "0";
  kv["message"] = message == MessageKind::mlp ? "mlp" : "linear";
  kv["dim"] = std::to_string(dim);
  kv["layers"] = std::to_string(layers);
  kv["steps"] = std::to_string(steps);
  kv["lr"] = fmt(lr);
  kv["wd"] = fmt(weight_decay);
  kv["batch"] = std::to_string(batch);
  kv["epochs"] = std::to_string(epochs);
  kv["tau"] = fmt(tau);
  kv["tau_final"] = fmt(tau_final);
  kv["seed"] = std::to_string(seed);
  kv["norm_lap_mean"] = fmt(norm.lap_mean);
  kv["norm_lap_std"] = fmt(norm.lap_std);
  kv["norm_spec_mean"] = fmt(norm.spec_mean);
  kv["norm_spec_std"] = fmt(norm.spec_std);
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  auto it = kv.find("task");
  ModelConfig c = defaults(it == kv.end() ? TaskKind::ising : parse_task(it->second));
  for (const auto& [k, v] : kv) {
    if (k == "task") continue;
    if (k == "update") c.update = parse_update(v);
    else if (k == "agg") {
      if (v == "sum") c.aggregation = Aggregation::sum;
      else if (v == "max") c.aggregation = Aggregation::max;
      else throw ParameterError("unknown agg '" + v + "' (expected sum|max)");
    } else if (k == "attention") {
      if (v != "0" && v != "1") throw ParameterError("attention must be 0 or 1");
      c.attention = v == "1";
    } else if (k == "message") {
      if (v == "mlp") c.message = MessageKind::mlp;
      else if (v == "linear") c.message = MessageKind::linear;
      else throw ParameterError("unknown message '" + v + "' (expected mlp|linear)");
    } else if (k == "dim") c.dim = parse_size(k, v);
    else if (k == "layers") c.layers = parse_size(k, v);
    else if (k == "steps") c.steps = parse_size(k, v);
    else if (k == "lr") c.lr = parse_real(k, v);
    else if (k == "wd") c.weight_decay = parse_real(k, v);
    else if (k == "batch") c.batch = parse_size(k, v);
    else if (k == "epochs") c.epochs = parse_size(k, v);
    else if (k == "tau") c.tau = parse_real(k, v);
    else if (k == "tau_final") c.tau_final = parse_real(k, v);
    else if (k == "seed") c.seed = parse_size(k, v);
    else if (k == "norm_lap_mean") c.norm.lap_mean = parse_real(k, v);
    else if (k == "norm_lap_std") c.norm.lap_std = parse_real(k, v);
    else if (k == "norm_spec_mean") c.norm.spec_mean = parse_real(k, v);
    else if (k == "norm_spec_std") c.norm.spec_std = parse_real(k, v);
    else throw ParameterError("unknown config key '" + k + "'");
  }
  c.validate();
  return c;
}

// ---- samples and batches ------------------------------------------------------

Sample make_ising_sample(std::shared_ptr<const Graph> g, std::uint64_t graph_id, std::uint64_t feature_seed,
                         const IsingModel& model, const Marginals& target) {
  const std::size_t n = g->num_nodes();
  if (model.b.size() != n || model.J.size() != g->num_edges() || target.p_plus.size() != n)
    throw ParameterError("Ising sample sizes do not match the graph");
  Sample s;
  s.graph = std::move(g);
  s.graph_id = graph_id;
  s.feature_seed = feature_seed;
  s.node_x = Tensor::column(model.b);
  s.edge_x = Tensor::column(model.J);
  s.node_y = Tensor::column(target.p_plus);
  s.node_m = Tensor(n, 1, 1.0);
  return s;
}

Sample make_gtheory_sample(std::shared_ptr<const Graph> g, std::uint64_t graph_id, std::uint64_t feature_seed,
                           const TaskFeatures& f, const MultiTaskTarget& t) {
  const std::size_t n = g->num_nodes();
  if (f.source_onehot.size() != n || f.scalar.size() != n || t.sssp.size() != n || t.ecc.size() != n ||
      t.lapfeat.size() != n)
    throw ParameterError("graph-theory sample sizes do not match the graph");
  Sample s;
  s.graph = std::move(g);
  s.graph_id = graph_id;
  s.feature_seed = feature_seed;
  s.node_x = Tensor(n, 2);
  s.node_y = Tensor(n, kGtNodeTasks);
  s.node_m = Tensor(n, kGtNodeTasks);
  for (std::size_t i = 0; i < n; ++i) {
    s.node_x(i, 0) = f.source_onehot[i];
    s.node_x(i, 1) = f.scalar[i];
    s.node_y(i, 0) = t.sssp[i];
    s.node_y(i, 1) = t.ecc[i];
    s.node_y(i, 2) = t.lapfeat[i];
    s.node_m(i, 0) = t.sssp[i] >= 0 ? 1.0 : 0.0;
    s.node_m(i, 1) = t.ecc[i] >= 0 ? 1.0 : 0.0;
    s.node_m(i, 2) = 1.0;
  }
  s.edge_x = Tensor(s.graph->num_edges(), 1, 1.0);
  s.graph_y = Tensor(1, kGtGraphTasks, std::vector<double>{static_cast<double>(t.diameter), t.spectral_radius,
                                                           t.connected ? 1.0 : 0.0});
  s.graph_m = Tensor(1, kGtGraphTasks, std::vector<double>{t.diameter >= 0 ? 1.0 : 0.0, 1.0, 1.0});
  return s;
}

TargetNorm fit_target_norm(std::span<const Sample> samples) {
  double ls = 0, lss = 0, ss = 0, sss = 0;
  std::size_t ln = 0, sn = 0;
  for (const auto& s : samples) {
    if (s.node_y.cols() != kGtNodeTasks || s.graph_y.cols() != kGtGraphTasks)
      throw ParameterError("target normalization applies to graph-theory samples only");
    for (std::size_t i = 0; i < s.node_y.rows(); ++i) {
      ls += s.node_y(i, 2);
      lss += s.node_y(i, 2) * s.node_y(i, 2);
      ++ln;
    }
    ss += s.graph_y(0, 1);
    sss += s.graph_y(0, 1) * s.graph_y(0, 1);
    ++sn;
  }
  TargetNorm t;
  auto finish = [](double s, double s2, std::size_t n, double& mean, double& sd) {
    if (n < 2) return;
    mean = s / static_cast<double>(n);
    const double var = (s2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
    sd = var > 1e-12 ? std::sqrt(var) : 1.0;
  };
  finish(ls, lss, ln, t.lap_mean, t.lap_std);
  finish(ss, sss, sn, t.spec_mean, t.spec_std);
  return t;
}

Batch make_batch(std::span<const Sample* const> samples, const ModelConfig& cfg,
                 std::span<const Assignment* const> assignments) {
  if (samples.empty()) throw ParameterError("cannot batch zero samples");
  if (!assignments.empty() && assignments.size() != samples.size())
    throw ParameterError("assignments must align with samples");
  Batch b;
  b.num_graphs = samples.size();
  std::size_t edges = 0;
  for (const Sample* s : samples) {
    b.graph_offset.push_back(static_cast<std::uint32_t>(b.num_nodes));
    b.graph_size.push_back(s->graph->num_nodes());
    b.num_nodes += s->graph->num_nodes();
    edges += s->graph->num_edges();
  }
  const std::size_t fn = samples[0]->node_x.cols();
  const std::size_t fe = samples[0]->edge_x.cols();
  const std::size_t tn = samples[0]->node_y.cols();
  const std::size_t tg = samples[0]->graph_y.cols();

  b.node_x = Tensor(b.num_nodes, fn);
  b.edge_x = Tensor(2 * edges, fe);
  b.node_y = Tensor(b.num_nodes, tn);
  b.node_w = Tensor(b.num_nodes, tn);
  b.graph_y = Tensor(b.num_graphs, tg);
  b.graph_w = Tensor(b.num_graphs, tg);
  b.inv_size = Tensor(b.num_graphs, 1);
  b.module_alpha = Tensor(b.num_nodes, 1, 1.0);
  b.src.reserve(2 * edges);
  b.dst.reserve(2 * edges);
  b.node_graph.reserve(b.num_nodes);

  std::size_t e2 = 0;
  for (std::size_t gi = 0; gi < samples.size(); ++gi) {
    const Sample& s = *samples[gi];
    const Graph& g = *s.graph;
    const std::uint32_t off = b.graph_offset[gi];
    const std::size_t n = g.num_nodes();
    if (s.node_x.cols() != fn || s.edge_x.cols() != fe || s.node_y.cols() != tn || s.graph_y.cols() != tg)
      throw ParameterError("samples in one batch must share feature and target layouts");
    if (s.node_x.rows() != n || s.edge_x.rows() != g.num_edges()) throw ParameterError("sample does not match its graph");
    b.inv_size(gi, 0) = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      b.node_graph.push_back(static_cast<std::uint32_t>(gi));
      for (std::size_t c = 0; c < fn; ++c) b.node_x(off + i, c) = s.node_x(i, c);
    }
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      const auto [u, v] = g.edges()[e];
      b.src.push_back(off + u);
      b.dst.push_back(off + v);
      b.src.push_back(off + v);
      b.dst.push_back(off + u);
      for (std::size_t c = 0; c < fe; ++c) {
        b.edge_x(e2, c) = s.edge_x(e, c);
        b.edge_x(e2 + 1, c) = s.edge_x(e, c);
      }
      e2 += 2;
    }
    if (!assignments.empty()) {
      const Assignment& a = *assignments[gi];
      if (a.size() != n) throw ParameterError("assignment length does not match its graph");
      for (std::size_t i = 0; i < n; ++i) {
        if (a[i] > 1) throw ParameterError("module ids must be 0 or 1");
        b.module_alpha(off + i, 0) = a[i] == 0 ? 1.0 : 0.0;
      }
    }
  }

  if (cfg.task == TaskKind::ising) {
    for (std::size_t gi = 0; gi < samples.size(); ++gi) {
      const Sample& s = *samples[gi];
      const std::size_t n = b.graph_size[gi];
      const double w = 1.0 / (static_cast<double>(n) * static_cast<double>(b.num_graphs));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < tn; ++c) {
          b.node_y(b.graph_offset[gi] + i, c) = s.node_y(i, c);
          b.node_w(b.graph_offset[gi] + i, c) = s.node_m(i, c) * w;
        }
    }
    return b;
  }

  // Graph theory: normalize, then weight each task by 1 / (active tasks * defined entries).
  std::vector<double> node_count(tn, 0.0), graph_count(tg, 0.0);
  for (std::size_t gi = 0; gi < samples.size(); ++gi) {
    const Sample& s = *samples[gi];
    const double n = static_cast<double>(b.graph_size[gi]);
    for (std::size_t i = 0; i < b.graph_size[gi]; ++i) {
      const std::size_t r = b.graph_offset[gi] + i;
      b.node_y(r, 0) = s.node_y(i, 0) / n;
      b.node_y(r, 1) = s.node_y(i, 1) / n;
      b.node_y(r, 2) = (s.node_y(i, 2) - cfg.norm.lap_mean) / cfg.norm.lap_std;
      for (std::size_t c = 0; c < tn; ++c) {
        b.node_w(r, c) = s.node_m(i, c);
        node_count[c] += s.node_m(i, c);
      }
    }
    b.graph_y(gi, 0) = s.graph_y(0, 0) / n;
    b.graph_y(gi, 1) = (s.graph_y(0, 1) - cfg.norm.spec_mean) / cfg.norm.spec_std;
    b.graph_y(gi, 2) = s.graph_y(0, 2);
    for (std::size_t c = 0; c < tg; ++c) {
      b.graph_w(gi, c) = s.graph_m(0, c);
      graph_count[c] += s.graph_m(0, c);
    }
  }
  double active = 0.0;
  for (double c : node_count) active += c > 0 ? 1.0 : 0.0;
  for (double c : graph_count) active += c > 0 ? 1.0 : 0.0;
  for (std::size_t r = 0; r < b.num_nodes; ++r)
    for (std::size_t c = 0; c < tn; ++c)
      if (node_count[c] > 0) b.node_w(r, c) /= node_count[c] * active;
  for (std::size_t gi = 0; gi < b.num_graphs; ++gi)
    for (std::size_t c = 0; c < tg; ++c)
      if (graph_count[c] > 0) b.graph_w(gi, c) /= graph_count[c] * active;
  return b;
}

MessageStats message_stats(const Tensor& m) {
  MessageStats st;
  const std::size_t n = m.rows();
  const std::size_t d = m.cols();
  if (n == 0) return st;
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      sq += m(i, j) * m(i, j);
      mean[j] += m(i, j);
    }
    st.mean_magnitude += std::sqrt(sq);
  }
  st.mean_magnitude /= static_cast<double>(n);
  if (n < 2) return st;
  for (auto& x : mean) x /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) st.cov_trace += (m(i, j) - mean[j]) * (m(i, j) - mean[j]);
  st.cov_trace /= static_cast<double>(n - 1);
  return st;
}

double binary_gate_alpha(double pi, double g1, double g2, double tau) {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  pi = std::clamp(pi, kGatePiEps, 1.0 - kGatePiEps);
  const double x = (std::log(pi / (1.0 - pi)) + g1 - g2) / tau;
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// ---- model --------------------------------------------------------------------

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.dim;
  const std::size_t fn = node_feature_dim();
  const std::size_t fe = edge_feature_dim();
  {
    Rng r = stream(init_seed, kSeedEncNode);
    enc_node_ = Linear::create(params_, "enc.node", fn, d, r);
  }
  {
    Rng r = stream(init_seed, kSeedEncEdge);
    enc_edge_ = Linear::create(params_, "enc.edge", fe, d, r);
  }
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    Layer layer;
    Rng rm = stream(init_seed, kSeedLayer + l, 0);
    layer.message = Mlp::create(params_, p + "msg", message_dims(cfg_), rm);
    if (cfg_.attention) {
      Rng ra = stream(init_seed, kSeedLayer + l, 1);
      layer.att_w = Linear::create(params_, p + "att_w", 2 * d, d, ra);
      layer.att_v = Linear::create(params_, p + "att_v", d, 1, ra, false);
    }
    Rng r0 = stream(init_seed, kSeedLayer + l, 2);
    layer.update0 = GruCell::create(params_, p + "upd0", d, d, r0);
    if (is_multi_module(cfg_.update)) {
      Rng r1 = stream(init_seed, kSeedLayer + l, 3);
      layer.update1 = GruCell::create(params_, p + "upd1", d, d, r1);
    }
    layers_.push_back(std::move(layer));
  }
  if (is_gated(cfg_.update)) {
    Rng rn = stream(init_seed, kSeedGateEncNode);
    gate_enc_node_ = Linear::create(params_, "gate.enc.node", fn, d, rn);
    Rng re = stream(init_seed, kSeedGateEncEdge);
    gate_enc_edge_ = Linear::create(params_, "gate.enc.edge", fe, d, re);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string p = "gate.l" + std::to_string(l) + ".";
      GateLayer layer;
      Rng rm = stream(init_seed, kSeedGateLayer + l, 0);
      layer.message = Mlp::create(params_, p + "msg", message_dims(cfg_), rm);
      if (cfg_.attention) {
        Rng ra = stream(init_seed, kSeedGateLayer + l, 1);
        layer.att_w = Linear::create(params_, p + "att_w", 2 * d, d, ra);
        layer.att_v = Linear::create(params_, p + "att_v", d, 1, ra, false);
      }
      Rng ru = stream(init_seed, kSeedGateLayer + l, 2);
      layer.update = GruCell::create(params_, p + "upd", d, d, ru);
      gate_layers_.push_back(std::move(layer));
    }
    Rng rh = stream(init_seed, kSeedGateHead);
    gate_head_ = Mlp::create(params_, "gate.head", {d, d, 1}, rh);
  }
  {
    Rng r = stream(init_seed, kSeedDecNode);
    dec_node_ = Mlp::create(params_, "dec.node", {d, d, cfg_.task == TaskKind::ising ? 1 : kGtNodeTasks}, r);
  }
  if (cfg_.task == TaskKind::gtheory) {
    Rng r = stream(init_seed, kSeedDecGraph);
    dec_graph_ = Mlp::create(params_, "dec.graph", {d, d, kGtGraphTasks}, r);
  }
}

std::size_t Model::node_feature_dim() const { return cfg_.task == TaskKind::ising ? 1 : 2; }
std::size_t Model::edge_feature_dim() const { return 1; }

ForwardOptions Model::eval_options() const {
  return {cfg_.update == UpdateKind::binary_gate ? cfg_.tau_final : cfg_.tau, derive_seed(cfg_.seed, {0x6576616cULL})};
}

Var Model::propagate(Tape& tape, const Batch& batch, Var h, Var z, const Mlp& message, const Linear& att_w,
                     const Linear& att_v) const {
  Var hi = ad::gather_rows(h, batch.dst);
  Var hj = ad::gather_rows(h, batch.src);
  const Var parts[] = {hi, hj, z};
  Var m = message(tape, ad::concat_cols(parts));
  if (cfg_.attention) {
    const Var pair[] = {hi, hj};
    Var score = att_v(tape, ad::tanh(att_w(tape, ad::concat_cols(pair))));
    Var weight = ad::segment_softmax(score, batch.dst, batch.num_nodes);
    m = ad::mul(m, weight);
  }
  return cfg_.aggregation == Aggregation::sum ? ad::segment_sum(m, batch.dst, batch.num_nodes)
                                              : ad::segment_max(m, batch.dst, batch.num_nodes);
}

ForwardResult Model::forward(Tape& tape, const Batch& batch, const ForwardOptions& opts) const {
  if (batch.node_x.cols() != node_feature_dim() || batch.edge_x.cols() != edge_feature_dim())
    throw ParameterError("batch features do not match the model task");
  ForwardResult out;
  Var x = tape.constant(batch.node_x);
  Var ex = tape.constant(batch.edge_x);
  Var h = enc_node_(tape, x);
  Var z = enc_edge_(tape, ex);
  Var hg, zg;
  const bool gated = is_gated(cfg_.update);
  if (gated) {
    hg = gate_enc_node_(tape, x);
    zg = gate_enc_edge_(tape, ex);
  }
  Var fixed_alpha;
  if (cfg_.update == UpdateKind::assigned) fixed_alpha = tape.constant(batch.module_alpha);
  const double clamp_logit = std::log((1.0 - kGatePiEps) / kGatePiEps);

  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const Layer& layer = layers_[l];
    for (std::size_t s = 0; s < cfg_.steps; ++s) {
      Var agg = propagate(tape, batch, h, z, layer.message, layer.att_w, layer.att_v);
      out.last_message = agg;
      if (cfg_.update == UpdateKind::single) {
        h = layer.update0(tape, h, agg);
        continue;
      }
      Var alpha;
      if (gated) {
        const GateLayer& gl = gate_layers_[l];
        Var gagg = propagate(tape, batch, hg, zg, gl.message, gl.att_w, gl.att_v);
        hg = gl.update(tape, hg, gagg);
        Var score = gate_head_(tape, hg);
        if (cfg_.update == UpdateKind::sigmoid_gate) {
          alpha = ad::sigmoid(score);
        } else {
          const std::uint64_t ns = derive_seed(opts.noise_seed, {l, s});
          Tensor g1 = gumbel(batch.num_nodes, 1, derive_seed(ns, {1}));
          const Tensor g2 = gumbel(batch.num_nodes, 1, derive_seed(ns, {2}));
          for (std::size_t i = 0; i < g1.size(); ++i) g1[i] -= g2[i];
          Var logit = ad::add(ad::clamp(score, -clamp_logit, clamp_logit), tape.constant(std::move(g1)));
          alpha = ad::sigmoid(ad::scale(logit, 1.0 / opts.tau));
        }
      } else {
        alpha = fixed_alpha;
      }
      out.alphas.push_back(alpha);
      Var h0 = layer.update0(tape, h, agg);
      Var h1 = layer.update1(tape, h, agg);
      h = ad::add(ad::mul(h0, alpha), ad::mul(h1, ad::one_minus(alpha)));
    }
  }

  if (cfg_.task == TaskKind::ising) {
    out.node_out = ad::sigmoid(dec_node_(tape, h));
  } else {
    out.node_out = dec_node_(tape, h);
    Var pooled = ad::mul(ad::segment_sum(h, batch.node_graph, batch.num_graphs), tape.constant(batch.inv_size));
    out.graph_out = dec_graph_(tape, pooled);
    out.has_graph_out = true;
  }
  return out;
}

Var Model::loss(Tape& tape, const Batch& batch, const ForwardResult& fwd) const {
  if (cfg_.task == TaskKind::ising) return ad::weighted_sum(ad::bernoulli_kl(fwd.node_out, batch.node_y), batch.node_w);
  Var node_err = ad::square(ad::sub(fwd.node_out, tape.constant(batch.node_y)));
  Var graph_err = ad::square(ad::sub(fwd.graph_out, tape.constant(batch.graph_y)));
  return ad::add(ad::weighted_sum(node_err, batch.node_w), ad::weighted_sum(graph_err, batch.graph_w));
}

std::vector<double> Model::graph_losses(const Batch& batch, const ForwardResult& fwd) const {
  std::vector<double> out(batch.num_graphs, 0.0);
  const Tensor& pred = fwd.node_out.value();
  if (cfg_.task == TaskKind::ising) {
    for (std::size_t gi = 0; gi < batch.num_graphs; ++gi) {
      double s = 0.0;
      const std::size_t n = batch.graph_size[gi];
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = batch.graph_offset[gi] + i;
        s += bernoulli_kl(batch.node_y(r, 0), pred(r, 0));
      }
      out[gi] = n > 0 ? s / static_cast<double>(n) : 0.0;
    }
    return out;
  }
  const Tensor& gpred = fwd.graph_out.value();
  for (std::size_t gi = 0; gi < batch.num_graphs; ++gi) {
    double total = 0.0;
    int active = 0;
    for (std::size_t c = 0; c < kGtNodeTasks; ++c) {
      double se = 0.0, cnt = 0.0;
      for (std::size_t i = 0; i < batch.graph_size[gi]; ++i) {
        const std::size_t r = batch.graph_offset[gi] + i;
        if (batch.node_w(r, c) == 0.0) continue;
        const double e = pred(r, c) - batch.node_y(r, c);
        se += e * e;
        cnt += 1.0;
      }
      if (cnt > 0) {
        total += se / cnt;
        ++active;
      }
    }
    for (std::size_t c = 0; c < kGtGraphTasks; ++c) {
      if (batch.graph_w(gi, c) == 0.0) continue;
      const double e = gpred(gi, c) - batch.graph_y(gi, c);
      total += e * e;
      ++active;
    }
    out[gi] = active > 0 ? total / active : 0.0;
  }
  return out;
}

double tau_at(const ModelConfig& cfg, std::size_t epoch) {
  if (cfg.epochs <= 1) return cfg.tau;
  const double t = static_cast<double>(std::min(epoch, cfg.epochs - 1)) / static_cast<double>(cfg.epochs - 1);
  return cfg.tau * std::pow(cfg.tau_final / cfg.tau, t);
}

// ---- training and evaluation -----------------------------------------------------

double gradient_step(Model& model, AdamState& adam, std::span<const Sample* const> samples,
                     std::span<const Assignment* const> assignments, const ForwardOptions& opts) {
  const Batch batch = make_batch(samples, model.config(), assignments);
  Tape tape(model.params());
  const ForwardResult fwd = model.forward(tape, batch, opts);
  Var loss = model.loss(tape, batch, fwd);
  const double value = loss.value().item();
  tape.backward(loss);
  std::vector<Tensor> grads(model.params().size());
  tape.accumulate_param_grads(grads);
  adam_step(adam, model.params(), grads);
  return value;
}

std::vector<EpochRecord> train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                               const TrainOptions& opts) {
  if (train_set.empty()) throw ParameterError("training set is empty");
  const ModelConfig& cfg = model.config();
  if (cfg.update == UpdateKind::assigned)
    throw ParameterError("update=assigned is trained by the meta-learning loop, not by plain training");
  AdamState adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  Rng shuffle(derive_seed(cfg.seed, {0x73687566ULL}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochRecord> trace;
  const std::size_t val_every = std::max<std::size_t>(opts.val_every, 1);
  double last_val = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_int(i)]);
    const double tau = tau_at(cfg, epoch);
    double weighted = 0.0;
    std::size_t graphs = 0;
    try {
      for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch, ++b) {
        const std::size_t end = std::min(order.size(), start + cfg.batch);
        std::vector<const Sample*> ptrs;
        for (std::size_t i = start; i < end; ++i) ptrs.push_back(&train_set[order[i]]);
        const double l =
            gradient_step(model, adam, ptrs, {}, {tau, derive_seed(cfg.seed, {0x6e6f697365ULL, epoch, b})});
        if (!std::isfinite(l)) throw NumericError("non-finite loss");
        weighted += l * static_cast<double>(ptrs.size());
        graphs += ptrs.size();
      }
      for (std::size_t k = 0; k < model.params().size(); ++k)
        if (!model.params()[k].value.all_finite()) throw NumericError("non-finite parameter " + model.params()[k].name);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochRecord rec{epoch, weighted / static_cast<double>(graphs), last_val};
    if (!val_set.empty() && ((epoch + 1) % val_every == 0 || epoch + 1 == cfg.epochs))
      rec.val_loss = last_val = mean_loss(model, val_set);
    trace.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }
  return trace;
}

std::vector<double> evaluate(const Model& model, std::span<const Sample* const> samples,
                             std::span<const Assignment* const> assignments, std::size_t batch_size) {
  if (!assignments.empty() && assignments.size() != samples.size())
    throw ParameterError("assignments must align with samples");
  std::vector<double> out;
  out.reserve(samples.size());
  const ForwardOptions opts = model.eval_options();
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t len = std::min(samples.size() - start, batch_size);
    const Batch batch = make_batch(samples.subspan(start, len), model.config(),
                                   assignments.empty() ? assignments : assignments.subspan(start, len));
    Tape tape(model.params());
    const ForwardResult fwd = model.forward(tape, batch, opts);
    for (double l : model.graph_losses(batch, fwd)) out.push_back(l);
  }
  return out;
}

std::vector<double> evaluate(const Model& model, std::span<const Sample> samples, std::size_t batch_size,
                             std::span<const Assignment* const> assignments) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return evaluate(model, ptrs, assignments, batch_size);
}

double mean_loss(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) throw ParameterError("mean_loss of an empty set");
  const auto losses = evaluate(model, samples);
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

MessageStats collect_message_stats(const Model& model, std::span<const Sample> samples, std::size_t batch_size) {
  if (samples.empty()) return {};
  std::vector<double> rows;
  std::size_t d = 0, n = 0;
  const ForwardOptions opts = model.eval_options();
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    std::vector<const Sample*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&samples[i]);
    const Batch batch = make_batch(ptrs, model.config());
    Tape tape(model.params());
    const ForwardResult fwd = model.forward(tape, batch, opts);
    const Tensor& m = fwd.last_message.value();
    d = m.cols();
    n += m.rows();
    rows.insert(rows.end(), m.values().begin(), m.values().end());
  }
  return message_stats(Tensor(n, d, std::move(rows)));
}

}  // namespace odgl
