#include "odgl/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "odgl/error.hpp"
#include "odgl/nn.hpp"

namespace odgl::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) { return MapC(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }
Map view(Tensor& t) { return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ParameterError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ParameterError("operands live on different tapes");
  return *a.tape;
}

// Elementwise unary op helper: fwd(x) -> y, dydx(x, y) -> derivative.
template <typename Fwd, typename Deriv>
Var unary(std::string_view name, Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const std::uint32_t ai = a.id;
  return t.record(name, std::move(out), t.requires_grad(a), [ai, deriv](Tape& tp, std::uint32_t self) {
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ParameterError("tensor data length does not match shape");
}

Tensor Tensor::column(std::span<const double> v) { return Tensor(v.size(), 1, std::vector<double>(v.begin(), v.end())); }

double Tensor::item() const {
  if (size() != 1) throw ParameterError("item() on a tensor with " + std::to_string(size()) + " entries");
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) shape_error("+=", *this, o);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

const Tensor& Var::value() const { return tape->value(id); }

// ---- tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) { return record("constant", std::move(value), false, nullptr); }

Var Tape::param(std::size_t index) {
  if (params_ == nullptr) throw ParameterError("tape has no parameter set");
  if (index >= params_->size()) throw ParameterError("parameter index out of range");
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size(), -1);
  if (param_nodes_[index] >= 0) return Var{this, static_cast<std::uint32_t>(param_nodes_[index])};
  Var v = record("param", (*params_)[index].value, true, nullptr);
  nodes_[v.id].param = static_cast<std::int64_t>(index);
  param_nodes_[index] = v.id;
  return v;
}

Var Tape::record(std::string_view op, Tensor value, bool requires_grad, BackwardFn backward) {
  if (!value.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, -1, requires_grad ? std::move(backward) : nullptr});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ParameterError("loss belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) throw ParameterError("backward needs a scalar loss");
  if (backward_done_) throw ParameterError("backward already ran on this tape");
  backward_done_ = true;
  grad(loss.id)[0] = 1.0;
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
}

void Tape::accumulate_param_grads(std::vector<Tensor>& grads) const {
  for (const Node& n : nodes_) {
    if (n.param < 0 || n.grad.empty()) continue;
    Tensor& g = grads.at(static_cast<std::size_t>(n.param));
    if (g.empty()) g = Tensor(n.grad.rows(), n.grad.cols());
    g += n.grad;
  }
}

// ---- ops --------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  view(out).noalias() = view(av) * view(bv);
  const std::uint32_t ai = a.id, bi = b.id;
  const bool ra = t.requires_grad(a), rb = t.requires_grad(b);
  return t.record("matmul", std::move(out), ra || rb, [ai, bi, ra, rb](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (ra) view(tp.grad(ai)).noalias() += view(g) * view(tp.value(bi)).transpose();
    if (rb) view(tp.grad(bi)).noalias() += view(tp.value(ai)).transpose() * view(g);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool row_bcast = !av.same_shape(bv) && bv.rows() == 1 && bv.cols() == av.cols();
  if (!av.same_shape(bv) && !row_bcast) shape_error("add", av, bv);
  Tensor out = av;
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += row_bcast ? bv[i % cols] : bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  const bool ra = t.requires_grad(a), rb = t.requires_grad(b);
  return t.record("add", std::move(out), ra || rb, [ai, bi, ra, rb, row_bcast, cols](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (ra) tp.grad(ai) += g;
    if (rb) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[row_bcast ? i % cols : i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::uint32_t ai = a.id, bi = b.id;
  const bool ra = t.requires_grad(a), rb = t.requires_grad(b);
  return t.record("sub", std::move(out), ra || rb, [ai, bi, ra, rb](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    if (ra) tp.grad(ai) += g;
    if (rb) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool col_bcast = !av.same_shape(bv) && bv.cols() == 1 && bv.rows() == av.rows();
  if (!av.same_shape(bv) && !col_bcast) shape_error("mul", av, bv);
  const std::size_t cols = av.cols();
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * (col_bcast ? bv[i / cols] : bv[i]);
  const std::uint32_t ai = a.id, bi = b.id;
  const bool ra = t.requires_grad(a), rb = t.requires_grad(b);
  return t.record("mul", std::move(out), ra || rb, [ai, bi, ra, rb, col_bcast, cols](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(bi);
    if (ra) {
      Tensor& ga = tp.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (col_bcast ? y[i / cols] : y[i]);
    }
    if (rb) {
      Tensor& gb = tp.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[col_bcast ? i / cols : i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var one_minus(Var a) {
  return unary("one_minus", a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double m = av(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, av(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (out(i, j) = std::exp(av(i, j) - m));
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= s;
  }
  const std::uint32_t ai = a.id;
  return t.record("softmax_rows", std::move(out), t.requires_grad(a), [ai](Tape& tp, std::uint32_t self) {
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ParameterError("concat_cols needs at least one input");
  Tape& t = *parts[0].tape;
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  bool rg = false;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    if (p.tape != &t) throw ParameterError("operands live on different tapes");
    if (p.rows() != r) shape_error("concat_cols", parts[0].value(), p.value());
    c += p.cols();
    rg = rg || t.requires_grad(p);
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  Tensor out(r, c);
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pv.data() + i * pv.cols(), pv.cols(), out.data() + i * c + off);
    off += pv.cols();
  }
  return t.record("concat_cols", std::move(out), rg, [ids, widths](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) {
        off += widths[k];
        continue;
      }
      Tensor& gp = tp.grad(ids[k]);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < widths[k]; ++j) gp(i, j) += g(i, off + j);
      off += widths[k];
    }
  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> index) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const std::size_t c = av.cols();
  Tensor out(index.size(), c);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= av.rows()) throw ParameterError("gather_rows index out of range");
    std::copy_n(av.data() + index[k] * c, c, out.data() + k * c);
  }
  const std::uint32_t ai = a.id;
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return t.record("gather_rows", std::move(out), t.requires_grad(a), [ai, idx = std::move(idx), c](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) ga(idx[k], j) += g(k, j);
  });
}

Var segment_sum(Var a, std::span<const std::uint32_t> segment, std::size_t num_segments) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (segment.size() != av.rows()) throw ParameterError("segment_sum: segment ids must match rows");
  const std::size_t c = av.cols();
  Tensor out(num_segments, c);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    if (segment[k] >= num_segments) throw ParameterError("segment id out of range");
    for (std::size_t j = 0; j < c; ++j) out(segment[k], j) += av(k, j);
  }
  const std::uint32_t ai = a.id;
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return t.record("segment_sum", std::move(out), t.requires_grad(a), [ai, seg = std::move(seg), c](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t k = 0; k < seg.size(); ++k)
      for (std::size_t j = 0; j < c; ++j) ga(k, j) += g(seg[k], j);
  });
}

Var segment_max(Var a, std::span<const std::uint32_t> segment, std::size_t num_segments) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (segment.size() != av.rows()) throw ParameterError("segment_max: segment ids must match rows");
  const std::size_t c = av.cols();
  constexpr std::uint32_t kNone = UINT32_MAX;
  std::vector<std::uint32_t> arg(num_segments * c, kNone);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    if (segment[k] >= num_segments) throw ParameterError("segment id out of range");
    for (std::size_t j = 0; j < c; ++j) {
      std::uint32_t& best = arg[segment[k] * c + j];
      if (best == kNone || av(k, j) > av(best, j)) best = static_cast<std::uint32_t>(k);
    }
  }
  Tensor out(num_segments, c);
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t j = 0; j < c; ++j)
      if (arg[s * c + j] != kNone) out(s, j) = av(arg[s * c + j], j);
  const std::uint32_t ai = a.id;
  return t.record("segment_max", std::move(out), t.requires_grad(a), [ai, arg = std::move(arg), c](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < arg.size(); ++i)
      if (arg[i] != kNone) ga(arg[i], i % c) += g[i];
  });
}

Var segment_softmax(Var a, std::span<const std::uint32_t> segment, std::size_t num_segments) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (av.cols() != 1) throw ParameterError("segment_softmax expects a column vector");
  if (segment.size() != av.rows()) throw ParameterError("segment_softmax: segment ids must match rows");
  std::vector<double> top(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    if (segment[k] >= num_segments) throw ParameterError("segment id out of range");
    top[segment[k]] = std::max(top[segment[k]], av[k]);
  }
  Tensor out(av.rows(), 1);
  std::vector<double> denom(num_segments, 0.0);
  for (std::size_t k = 0; k < segment.size(); ++k) denom[segment[k]] += (out[k] = std::exp(av[k] - top[segment[k]]));
  for (std::size_t k = 0; k < segment.size(); ++k) out[k] /= denom[segment[k]];
  const std::uint32_t ai = a.id;
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return t.record("segment_softmax", std::move(out), t.requires_grad(a),
                  [ai, seg = std::move(seg), num_segments](Tape& tp, std::uint32_t self) {
                    const Tensor& y = tp.value(self);
                    const Tensor& g = tp.grad(self);
                    Tensor& ga = tp.grad(ai);
                    std::vector<double> dot(num_segments, 0.0);
                    for (std::size_t k = 0; k < seg.size(); ++k) dot[seg[k]] += g[k] * y[k];
                    for (std::size_t k = 0; k < seg.size(); ++k) ga[k] += y[k] * (g[k] - dot[seg[k]]);
                  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  double s = 0.0;
  for (double x : av.values()) s += x;
  const std::uint32_t ai = a.id;
  return t.record("sum_all", Tensor::scalar(s), t.requires_grad(a), [ai](Tape& tp, std::uint32_t self) {
    const double g = tp.grad(self)[0];
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean_all(Var a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ParameterError("mean_all of an empty tensor");
  return scale(sum_all(a), 1.0 / n);
}

Var weighted_sum(Var a, const Tensor& w) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (!av.same_shape(w)) shape_error("weighted_sum", av, w);
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * w[i];
  const std::uint32_t ai = a.id;
  return t.record("weighted_sum", Tensor::scalar(s), t.requires_grad(a), [ai, w](Tape& tp, std::uint32_t self) {
    const double g = tp.grad(self)[0];
    Tensor& ga = tp.grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
  });
}

Var bernoulli_kl(Var pred, const Tensor& target, double eps) {
  Tape& t = *pred.tape;
  const Tensor& pv = pred.value();
  if (!pv.same_shape(target)) shape_error("bernoulli_kl", pv, target);
  Tensor out(pv.rows(), pv.cols());
  Tensor tc = target;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double q = std::clamp(tc[i], eps, 1.0 - eps);
    tc[i] = q;
    const double p = std::clamp(pv[i], eps, 1.0 - eps);
    out[i] = q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
  }
  const std::uint32_t pi = pred.id;
  return t.record("bernoulli_kl", std::move(out), t.requires_grad(pred), [pi, tc = std::move(tc), eps](Tape& tp, std::uint32_t self) {
    const Tensor& p = tp.value(pi);
    const Tensor& g = tp.grad(self);
    Tensor& gp = tp.grad(pi);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!(p[i] > eps && p[i] < 1.0 - eps)) continue;
      gp[i] += g[i] * (-tc[i] / p[i] + (1.0 - tc[i]) / (1.0 - p[i]));
    }
  });
}

}  // namespace odgl::ad
