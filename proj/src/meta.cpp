#include "odgl/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "odgl/error.hpp"

namespace odgl {

double schedule_temp(const SaState& s) {
  const double step = s.max_steps > 0 ? static_cast<double>(s.step) / static_cast<double>(s.max_steps) : 0.0;
  const double acc = std::exp(-5.0 * step);
  return s.sa_r / s.sa_f < acc ? s.T * s.alpha : s.T / s.alpha;
}

bool accept(double loss_old, double loss_new, double T, Rng& rng) {
  if (loss_new < loss_old) return true;
  const double u = rng.uniform();
  if (!(T > 0.0)) return false;
  return u < std::exp((loss_old - loss_new) / T);
}

Assignment propose(const Assignment& a, Rng& rng) {
  if (a.empty()) throw ParameterError("cannot propose on an empty assignment");
  Assignment out = a;
  const auto i = rng.uniform_int(out.size());
  out[i] = out[i] == 0 ? 1 : 0;
  return out;
}

BounceCounts bounce(std::span<const std::size_t> tasks, AssignmentState& st, SaState& sa, const AssignmentLossFn& loss,
                    Rng& rng) {
  BounceCounts counts;
  if (tasks.empty()) return counts;
  std::vector<Assignment> proposals;
  proposals.reserve(tasks.size());
  for (std::size_t t : tasks) proposals.push_back(propose(st.current.at(t), rng));

  std::vector<std::size_t> eval_tasks;
  std::vector<const Assignment*> eval_assign;
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    eval_tasks.push_back(tasks[k]);
    eval_assign.push_back(&proposals[k]);
  }
  for (std::size_t t : tasks) {
    eval_tasks.push_back(t);
    eval_assign.push_back(&st.current[t]);
  }
  const std::vector<double> losses = loss(eval_tasks, eval_assign);
  if (losses.size() != eval_tasks.size()) throw ParameterError("loss callback returned the wrong number of values");

  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const std::size_t t = tasks[k];
    const double l_new = losses[k];
    const double l_old = losses[tasks.size() + k];
    const double f = std::min(1e-2, sa.sa_r / sa.sa_f);
    if (l_old < st.best_loss[t]) {
      st.best_loss[t] = l_old;
      st.best[t] = st.current[t];
    }
    if (accept(l_old, l_new, sa.T, rng)) {
      st.current[t] = std::move(proposals[k]);
      if (l_new >= l_old) {
        sa.sa_f = (1.0 - f) * sa.sa_f + f;
        sa.sa_r = (1.0 - f) * sa.sa_r + f;
        ++counts.accepted_worse;
      } else {
        ++counts.improved;
      }
      if (l_new < st.best_loss[t]) {
        st.best_loss[t] = l_new;
        st.best[t] = st.current[t];
      }
    } else {
      sa.sa_f = (1.0 - f) * sa.sa_f + f;
      sa.sa_r = (1.0 - f) * sa.sa_r;
      ++counts.rejected;
    }
  }
  return counts;
}

MetaResult meta_train(std::span<const std::size_t> task_sizes, const AssignmentLossFn& train_loss, const GradFn& grad,
                      const MetaConfig& cfg, const MetaObserver& observer) {
  if (task_sizes.empty()) throw ParameterError("meta_train needs at least one task");
  if (cfg.batch == 0) throw ParameterError("meta batch must be positive");
  if (!(cfg.init.T > 0.0) || !(cfg.init.alpha > 0.0 && cfg.init.alpha < 1.0))
    throw ParameterError("SA needs T > 0 and 0 < alpha < 1");
  Rng rng(derive_seed(cfg.seed, {0x6d657461ULL}));
  MetaResult res;
  res.sa = cfg.init;
  auto& st = res.assignments;
  for (std::size_t n : task_sizes) {
    Assignment a(n);
    for (auto& m : a) m = static_cast<std::uint8_t>(rng.uniform_int(2));
    st.current.push_back(a);
    st.best.push_back(a);
    st.best_loss.push_back(std::numeric_limits<double>::infinity());
  }
  const std::size_t per_epoch = (task_sizes.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t total = cfg.epochs * per_epoch;
  res.sa.max_steps = total;
  std::vector<std::size_t> order(task_sizes.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t it = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++it) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<std::size_t> tasks(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(tasks.begin(), tasks.end());

      res.sa.step = it;
      res.sa.T = schedule_temp(res.sa);
      if (observer) observer(MetaPhase::schedule_temp, it, res.sa);

      bounce(tasks, st, res.sa, train_loss, rng);
      if (observer) observer(MetaPhase::bounce, it, res.sa);

      std::vector<const Assignment*> fixed;
      for (std::size_t t : tasks) fixed.push_back(&st.current[t]);
      const double l = grad(tasks, fixed);
      if (!std::isfinite(l)) throw NumericError("meta-training loss became non-finite at iteration " + std::to_string(it));
      res.grad_loss.push_back(l);
      if (observer) observer(MetaPhase::grad, it, res.sa);
    }
  }
  res.iterations = it;
  return res;
}

// ---- meta-test rule search ------------------------------------------------------

Assignment DegreeRule::apply(const Graph& g) const {
  Assignment a(g.num_nodes());
  for (std::uint32_t v = 0; v < g.num_nodes(); ++v)
    a[v] = constant ? module : static_cast<std::uint8_t>(g.degree(v) >= threshold ? 1 : 0);
  return a;
}

std::string DegreeRule::to_string() const {
  if (constant) return "rule=constant m=" + std::to_string(module);
  return "rule=threshold t=" + std::to_string(threshold);
}

DegreeRule DegreeRule::parse(const std::string& text) {
  std::istringstream in(text);
  std::string kind, arg;
  in >> kind >> arg;
  DegreeRule r;
  if (kind == "rule=constant" && (arg == "m=0" || arg == "m=1")) {
    r.constant = true;
    r.module = arg == "m=1" ? 1 : 0;
    return r;
  }
  if (kind == "rule=threshold" && arg.rfind("t=", 0) == 0) {
    r.constant = false;
    try {
      r.threshold = static_cast<std::uint32_t>(parse_u64(arg.substr(2)));
    } catch (const FormatError&) {
      throw FormatError("bad threshold in rule '" + text + "'");
    }
    return r;
  }
  throw FormatError("cannot parse rule '" + text + "'");
}

DegreeRule rule_at(std::size_t index, std::size_t max_degree) {
  if (index > max_degree + 1) throw ParameterError("rule index out of range");
  DegreeRule r;
  if (index == 0) {
    r.constant = true;
    r.module = 1;
  } else if (index == max_degree + 1) {
    r.constant = true;
    r.module = 0;
  } else {
    r.constant = false;
    r.threshold = static_cast<std::uint32_t>(index);
  }
  return r;
}

RuleSearchResult meta_test_search(std::size_t max_degree, const std::function<double(const DegreeRule&)>& loss,
                                  std::size_t iters, std::uint64_t seed, const SaState& init) {
  if (!(init.T > 0.0)) throw ParameterError("SA needs T > 0");
  Rng rng(derive_seed(seed, {0x72756c65ULL}));
  const std::size_t last = max_degree + 1;
  std::map<std::size_t, double> cache;
  RuleSearchResult res;
  auto eval = [&](std::size_t idx) {
    auto it = cache.find(idx);
    if (it != cache.end()) return it->second;
    const double l = loss(rule_at(idx, max_degree));
    ++res.evaluations;
    cache.emplace(idx, l);
    return l;
  };
  SaState sa = init;
  sa.max_steps = std::max<std::size_t>(iters, 1);
  std::size_t cur = last;
  double cur_loss = eval(cur);
  res.initial_loss = cur_loss;
  std::size_t best = cur;
  double best_loss = cur_loss;
  for (std::size_t i = 0; i < iters && last > 0; ++i) {
    sa.step = i;
    sa.T = schedule_temp(sa);
    std::size_t next;
    if (cur == 0) next = 1;
    else if (cur == last) next = last - 1;
    else next = rng.uniform_int(2) == 0 ? cur - 1 : cur + 1;
    const double next_loss = eval(next);
    const double f = std::min(1e-2, sa.sa_r / sa.sa_f);
    if (accept(cur_loss, next_loss, sa.T, rng)) {
      if (next_loss >= cur_loss) {
        sa.sa_f = (1.0 - f) * sa.sa_f + f;
        sa.sa_r = (1.0 - f) * sa.sa_r + f;
      }
      cur = next;
      cur_loss = next_loss;
    } else {
      sa.sa_f = (1.0 - f) * sa.sa_f + f;
      sa.sa_r = (1.0 - f) * sa.sa_r;
    }
    if (cur_loss < best_loss) {
      best = cur;
      best_loss = cur_loss;
    }
  }
  res.best = rule_at(best, max_degree);
  res.best_loss = best_loss;
  return res;
}

// ---- planted toy ----------------------------------------------------------------

namespace {

double planted_fn(std::uint8_t module, double x) { return module == 0 ? std::tanh(2.0 * x) : x * x - 1.0; }

struct ToyTask {
  Assignment planted;
  Tensor x[2];  ///< per half: (nodes * points) x 1, node-major
  Tensor y[2];
};

}  // namespace

PlantedToyResult run_planted_toy(const PlantedToyConfig& cfg) {
  if (cfg.tasks == 0 || cfg.nodes == 0 || cfg.points == 0) throw ParameterError("planted toy needs non-empty tasks");
  Rng data(derive_seed(cfg.seed, {0x64617461ULL}));
  std::vector<ToyTask> tasks(cfg.tasks);
  for (auto& t : tasks) {
    t.planted.resize(cfg.nodes);
    for (auto& m : t.planted) m = static_cast<std::uint8_t>(data.uniform_int(2));
    for (int h = 0; h < 2; ++h) {
      t.x[h] = Tensor(cfg.nodes * cfg.points, 1);
      t.y[h] = Tensor(cfg.nodes * cfg.points, 1);
      for (std::size_t i = 0; i < cfg.nodes; ++i)
        for (std::size_t k = 0; k < cfg.points; ++k) {
          const double x = 4.0 * data.uniform() - 2.0;
          t.x[h][i * cfg.points + k] = x;
          t.y[h][i * cfg.points + k] = planted_fn(t.planted[i], x);
        }
    }
  }

  ParamSet params;
  Rng init(derive_seed(cfg.seed, {0x696e6974ULL}));
  const Mlp module0 = Mlp::create(params, "m0", {1, cfg.hidden, cfg.hidden, 1}, init);
  const Mlp module1 = Mlp::create(params, "m1", {1, cfg.hidden, cfg.hidden, 1}, init);
  AdamState adam;
  adam.lr = cfg.lr;

  // Loss of one task half as a tape expression: mean squared error with each
  // node's points routed to its assigned module.
  auto task_loss = [&](Tape& tape, std::size_t task, int half, const Assignment& a) {
    const ToyTask& t = tasks[task];
    Tensor w0(cfg.nodes * cfg.points, 1);
    for (std::size_t i = 0; i < cfg.nodes; ++i)
      for (std::size_t k = 0; k < cfg.points; ++k) w0[i * cfg.points + k] = a[i] == 0 ? 1.0 : 0.0;
    Var x = tape.constant(t.x[half]);
    Var alpha = tape.constant(std::move(w0));
    Var pred = ad::add(ad::mul(module0(tape, x), alpha), ad::mul(module1(tape, x), ad::one_minus(alpha)));
    Var err = ad::square(ad::sub(pred, tape.constant(t.y[half])));
    return ad::mean_all(err);
  };

  AssignmentLossFn train_loss = [&](std::span<const std::size_t> ids, std::span<const Assignment* const> a) {
    std::vector<double> out;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tape tape(params);
      out.push_back(task_loss(tape, ids[k], 0, *a[k]).value().item());
    }
    return out;
  };
  GradFn grad = [&](std::span<const std::size_t> ids, std::span<const Assignment* const> a) {
    Tape tape(params);
    Var total = task_loss(tape, ids[0], 1, *a[0]);
    for (std::size_t k = 1; k < ids.size(); ++k) total = ad::add(total, task_loss(tape, ids[k], 1, *a[k]));
    Var l = ad::scale(total, 1.0 / static_cast<double>(ids.size()));
    const double value = l.value().item();
    tape.backward(l);
    std::vector<Tensor> grads(params.size());
    tape.accumulate_param_grads(grads);
    adam_step(adam, params, grads);
    return value;
  };

  MetaConfig mc;
  mc.epochs = cfg.epochs;
  mc.batch = cfg.batch;
  mc.seed = cfg.seed;
  mc.init.T = cfg.temperature;
  PlantedToyResult res;
  std::vector<std::size_t> sizes(cfg.tasks, cfg.nodes);
  const MetaResult mr = meta_train(sizes, train_loss, grad, mc, [&](MetaPhase p, std::size_t, const SaState&) {
    res.phases.push_back(p);
  });
  res.grad_loss = mr.grad_loss;

  std::size_t agree = 0, total = 0;
  for (std::size_t t = 0; t < cfg.tasks; ++t)
    for (std::size_t i = 0; i < cfg.nodes; ++i) {
      agree += mr.assignments.current[t][i] == tasks[t].planted[i] ? 1 : 0;
      ++total;
    }
  const double acc = static_cast<double>(agree) / static_cast<double>(total);
  res.accuracy = std::max(acc, 1.0 - acc);
  return res;
}

}  // namespace odgl
