#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "odgl/graph.hpp"
#include "odgl/graph_theory.hpp"
#include "odgl/io.hpp"
#include "odgl/ising.hpp"
#include "odgl/nn.hpp"

namespace odgl {

enum class TaskKind { ising, gtheory };
enum class Aggregation { sum, max };
enum class UpdateKind { single, sigmoid_gate, binary_gate, assigned };
enum class MessageKind { mlp, linear };

/// Two update modules are present.
inline bool is_multi_module(UpdateKind u) { return u != UpdateKind::single; }
/// A gate processor computes the mixing weight.
inline bool is_gated(UpdateKind u) { return u == UpdateKind::sigmoid_gate || u == UpdateKind::binary_gate; }

/// Training-split statistics used to put graph-theory targets on one scale.
struct TargetNorm {
  double lap_mean = 0.0;
  double lap_std = 1.0;
  double spec_mean = 0.0;
  double spec_std = 1.0;
};

struct ModelConfig {
  TaskKind task = TaskKind::ising;
  std::size_t dim = 64;
  std::size_t layers = 1;
  std::size_t steps = 10;
  Aggregation aggregation = Aggregation::sum;
  bool attention = true;
  MessageKind message = MessageKind::mlp;
  UpdateKind update = UpdateKind::single;
  double tau = 1.0;        ///< Gumbel temperature at the first epoch
  double tau_final = 0.1;  ///< reached at the last epoch (exponential anneal)
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch = 32;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  TargetNorm norm;

  /// Marginal inference: attention, dim 64, 1 layer x 10 steps, MLP messages,
  /// sum aggregation, lr 1e-3, batch 32. Graph theory: dim 16, 2 layers x 1
  /// step, linear messages, max aggregation, lr 3e-3, batch 256, wd 1e-6.
  static ModelConfig defaults(TaskKind task);

  void validate() const;

  KeyValues to_key_values() const;
  /// Starts from defaults(task) and overrides the keys present.
  static ModelConfig from_key_values(const KeyValues& kv);
};

std::string to_string(TaskKind t);
std::string to_string(UpdateKind u);

/// One training/evaluation instance: a structural graph plus task features
/// and (optionally) targets. Edge features are aligned with graph->edges().
struct Sample {
  std::shared_ptr<const Graph> graph;
  std::uint64_t graph_id = 0;
  std::uint64_t feature_seed = 0;
  Tensor node_x;   ///< n x F
  Tensor edge_x;   ///< |E| x Fe
  Tensor node_y;   ///< n x Tn, raw targets
  Tensor node_m;   ///< n x Tn, 1 where the target is defined
  Tensor graph_y;  ///< 1 x Tg, raw targets (empty for node-only tasks)
  Tensor graph_m;
};

Sample make_ising_sample(std::shared_ptr<const Graph> g, std::uint64_t graph_id, std::uint64_t feature_seed,
                         const IsingModel& model, const Marginals& target);
Sample make_gtheory_sample(std::shared_ptr<const Graph> g, std::uint64_t graph_id, std::uint64_t feature_seed,
                           const TaskFeatures& features, const MultiTaskTarget& target);

/// Mean/std of the Laplacian-feature and spectral-radius targets.
TargetNorm fit_target_norm(std::span<const Sample> samples);

using Assignment = std::vector<std::uint8_t>;

/// Disjoint union of samples with every undirected edge in both directions.
struct Batch {
  std::size_t num_nodes = 0;
  std::size_t num_graphs = 0;
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  std::vector<std::uint32_t> node_graph;
  std::vector<std::uint32_t> graph_offset;
  std::vector<std::uint32_t> graph_size;
  Tensor node_x;
  Tensor edge_x;    ///< per directed edge
  Tensor inv_size;  ///< num_graphs x 1
  Tensor node_y;    ///< normalized targets
  Tensor node_w;    ///< loss weights, zero where masked
  Tensor graph_y;
  Tensor graph_w;
  Tensor module_alpha;  ///< num_nodes x 1; weight of module 0 under an assignment
};

/// assignments, when given, must align with samples (module id per node).
Batch make_batch(std::span<const Sample* const> samples, const ModelConfig& cfg,
                 std::span<const Assignment* const> assignments = {});

struct ForwardOptions {
  double tau = 1.0;
  std::uint64_t noise_seed = 0;
};

struct ForwardResult {
  Var node_out;
  Var graph_out;
  bool has_graph_out = false;
  Var last_message;  ///< aggregated messages of the final propagation step
  std::vector<Var> alphas;
};

struct MessageStats {
  double mean_magnitude = 0.0;
  double cov_trace = 0.0;
};

/// Mean L2 norm and trace of the sample covariance (n - 1 divisor) of rows.
MessageStats message_stats(const Tensor& messages);

/// alpha = sigmoid((logit(pi) + g1 - g2) / tau), pi clamped to [1e-6, 1 - 1e-6].
double binary_gate_alpha(double pi, double g1, double g2, double tau);

/// Encode-process-decode message-passing network.
///
/// Parameter names are stable across update strategies so that a
/// single-module model's parameters are a subset of a multi-module one's.
/// Each component draws its initial weights from its own seed stream.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& config() { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  ForwardResult forward(Tape& tape, const Batch& batch, const ForwardOptions& opts) const;
  /// Scalar training loss (mean over graphs of the per-graph loss).
  Var loss(Tape& tape, const Batch& batch, const ForwardResult& fwd) const;
  /// Per-graph loss values from a finished forward pass.
  std::vector<double> graph_losses(const Batch& batch, const ForwardResult& fwd) const;

  /// Options used for evaluation: final temperature and a fixed noise seed.
  ForwardOptions eval_options() const;

  std::size_t node_feature_dim() const;
  std::size_t edge_feature_dim() const;

 private:
  struct Layer {
    Mlp message;
    Linear att_w;
    Linear att_v;
    GruCell update0;
    GruCell update1;
  };
  struct GateLayer {
    Mlp message;
    Linear att_w;
    Linear att_v;
    GruCell update;
  };

  Var propagate(Tape& tape, const Batch& batch, Var h, Var z, const Mlp& message, const Linear& att_w,
                const Linear& att_v) const;

  ModelConfig cfg_;
  ParamSet params_;
  Linear enc_node_, enc_edge_;
  std::vector<Layer> layers_;
  Linear gate_enc_node_, gate_enc_edge_;
  std::vector<GateLayer> gate_layers_;
  Mlp gate_head_;
  Mlp dec_node_;
  Mlp dec_graph_;
};

/// tau at an epoch of the exponential anneal from cfg.tau to cfg.tau_final.
double tau_at(const ModelConfig& cfg, std::size_t epoch);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Evaluate the validation set every this many epochs (and at the last).
  std::size_t val_every = 1;
};

/// Mini-batch Adam training. Throws NumericError naming the epoch if the
/// loss becomes non-finite.
std::vector<EpochRecord> train(Model& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                               const TrainOptions& opts = {});

/// Per-sample losses in input order.
std::vector<double> evaluate(const Model& model, std::span<const Sample> samples, std::size_t batch_size = 256,
                             std::span<const Assignment* const> assignments = {});

std::vector<double> evaluate(const Model& model, std::span<const Sample* const> samples,
                             std::span<const Assignment* const> assignments, std::size_t batch_size = 256);

double mean_loss(const Model& model, std::span<const Sample> samples);

/// Final-step aggregated messages over every node of every sample.
MessageStats collect_message_stats(const Model& model, std::span<const Sample> samples, std::size_t batch_size = 256);

/// One Adam step on the loss of the given samples; returns the loss before the step.
double gradient_step(Model& model, AdamState& adam, std::span<const Sample* const> samples,
                     std::span<const Assignment* const> assignments, const ForwardOptions& opts);

}  // namespace odgl
