#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "odgl/gnn.hpp"
#include "odgl/graph.hpp"
#include "odgl/rng.hpp"

namespace odgl {

/// Simulated-annealing state shared by Bounce and ScheduleTemp.
struct SaState {
  double T = 1.0;
  double sa_r = 1.0;  ///< running acceptance rate
  double sa_f = 1.0;  ///< running factor
  double alpha = 0.95;
  std::size_t step = 0;
  std::size_t max_steps = 1;
};

/// ACC = exp(-5 step / max_steps); cools (T * alpha) when sa_r / sa_f < ACC,
/// otherwise heats (T / alpha). Returns the new temperature.
double schedule_temp(const SaState& s);

/// Strict improvements always pass; otherwise accept with probability
/// exp((loss_old - loss_new) / T).
bool accept(double loss_old, double loss_new, double T, Rng& rng);

/// Flips the module of one uniformly chosen node.
Assignment propose(const Assignment& a, Rng& rng);

/// Loss of each task under the paired assignment. Entries of tasks may repeat.
using AssignmentLossFn =
    std::function<std::vector<double>(std::span<const std::size_t> tasks, std::span<const Assignment* const> a)>;
/// Gradient step on the given tasks with assignments held fixed; returns the loss.
using GradFn = std::function<double(std::span<const std::size_t> tasks, std::span<const Assignment* const> a)>;

struct AssignmentState {
  std::vector<Assignment> current;
  std::vector<double> best_loss;
  std::vector<Assignment> best;
};

struct BounceCounts {
  std::size_t improved = 0;
  std::size_t accepted_worse = 0;
  std::size_t rejected = 0;
};

/// One Bounce pass over the given tasks. Proposals and their losses are
/// evaluated together; decisions and SA_r / SA_f updates are applied in task
/// order.
BounceCounts bounce(std::span<const std::size_t> tasks, AssignmentState& st, SaState& sa,
                    const AssignmentLossFn& loss, Rng& rng);

struct MetaConfig {
  std::size_t epochs = 100;
  std::size_t batch = 32;
  SaState init;
  std::uint64_t seed = 0;
};

enum class MetaPhase { schedule_temp, bounce, grad };

using MetaObserver = std::function<void(MetaPhase phase, std::size_t iteration, const SaState& sa)>;

struct MetaResult {
  SaState sa;
  AssignmentState assignments;
  std::vector<double> grad_loss;  ///< one entry per iteration
  std::size_t iterations = 0;
};

/// BounceGrad over shuffled minibatches of tasks: every iteration runs
/// ScheduleTemp, Bounce on the training halves, then Grad on the test halves.
/// The schedule step is the iteration index over the total iteration count.
/// Initial assignments are uniform random module ids.
MetaResult meta_train(std::span<const std::size_t> task_sizes, const AssignmentLossFn& train_loss,
                      const GradFn& grad, const MetaConfig& cfg, const MetaObserver& observer = {});

/// Module choice transferable across graph sizes: module 1 iff degree >= t,
/// or a constant module.
struct DegreeRule {
  bool constant = true;
  std::uint8_t module = 0;     ///< used when constant
  std::uint32_t threshold = 0;  ///< used otherwise

  Assignment apply(const Graph& g) const;
  /// "rule=threshold t=<int>" or "rule=constant m=<0|1>"
  std::string to_string() const;
  static DegreeRule parse(const std::string& text);
  friend bool operator==(const DegreeRule&, const DegreeRule&) = default;
};

/// Rules on a line: 0 is constant-1, 1..max_degree are thresholds, and
/// max_degree + 1 is constant-0.
DegreeRule rule_at(std::size_t index, std::size_t max_degree);

struct RuleSearchResult {
  DegreeRule best;
  double best_loss = 0.0;
  double initial_loss = 0.0;
  std::size_t evaluations = 0;
};

/// Annealed search over the rule line starting from constant-0. Losses are
/// cached per rule; the best rule seen is returned.
RuleSearchResult meta_test_search(std::size_t max_degree, const std::function<double(const DegreeRule&)>& loss,
                                  std::size_t iters, std::uint64_t seed, const SaState& init = {});

struct PlantedToyConfig {
  std::size_t tasks = 16;
  std::size_t nodes = 8;
  std::size_t points = 4;  ///< input draws per node and half
  std::size_t hidden = 16;
  std::size_t epochs = 300;
  std::size_t batch = 8;
  double lr = 1e-2;
  /// Starting temperature; must sit below the typical loss gap of a flip,
  /// otherwise the schedule keeps heating.
  double temperature = 1e-3;
  std::uint64_t seed = 0;
};

struct PlantedToyResult {
  double accuracy = 0.0;  ///< agreement with the planted modules up to a label swap
  std::vector<double> grad_loss;
  std::vector<MetaPhase> phases;
};

/// Two-function regression with the generating function planted per node
/// (module 0: tanh(2x), module 1: x^2 - 1); learns two MLP modules and the
/// assignment with BounceGrad.
PlantedToyResult run_planted_toy(const PlantedToyConfig& cfg);

}  // namespace odgl
