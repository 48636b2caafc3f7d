#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace odgl {
class ParamSet;
}

namespace odgl::ad {

/// Dense row-major 2D array of doubles. Vectors are n x 1 or 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Value of a 1 x 1 tensor.
  double item() const;
  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Tensor& operator+=(const Tensor& o);
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Single-threaded reverse-mode tape. Nodes are appended in evaluation order,
/// so reverse insertion order is a valid reverse topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  explicit Tape(const ParamSet& params) : params_(&params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(std::size_t index);
  /// Appends an op result. Throws NumericError on non-finite values.
  Var record(std::string_view op, Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  /// Adjoint buffer of a node, zero-allocated on first access.
  Tensor& grad(std::uint32_t id);
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d loss = 1 and sweeps the tape once in reverse.
  void backward(Var loss);

  /// Adds each parameter leaf's adjoint into grads[param index].
  void accumulate_param_grads(std::vector<Tensor>& grads) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::int64_t param = -1;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::int64_t> param_nodes_;
  const ParamSet* params_ = nullptr;
  bool backward_done_ = false;
};

// ---- operations ------------------------------------------------------------
// Shapes: r x c. Broadcasting is limited to the forms documented per op.

Var matmul(Var a, Var b);
/// a + b; b may be 1 x c (row broadcast over a's rows).
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product; b may be r x 1 (column broadcast over a's columns).
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// 1 - a
Var one_minus(Var a);
Var square(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var log(Var a);
/// Elementwise clamp; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);
Var softmax_rows(Var a);
Var concat_cols(std::span<const Var> parts);
/// out[k] = a[index[k]]
Var gather_rows(Var a, std::span<const std::uint32_t> index);
/// out[s] = sum over rows k with segment[k] == s.
Var segment_sum(Var a, std::span<const std::uint32_t> segment, std::size_t num_segments);
/// Column-wise max per segment; empty segments give 0. Ties go to the lowest
/// row index, and the gradient flows only to that row.
Var segment_max(Var a, std::span<const std::uint32_t> segment, std::size_t num_segments);
/// Softmax of a column vector (n x 1) within each segment.
Var segment_softmax(Var a, std::span<const std::uint32_t> segment, std::size_t num_segments);
Var sum_all(Var a);
Var mean_all(Var a);
/// sum(a .* w) for a constant weight tensor of a's shape.
Var weighted_sum(Var a, const Tensor& w);
/// Elementwise KL(target || pred) for Bernoulli pairs, both clamped to
/// [eps, 1 - eps]; no gradient flows where pred is clamped.
Var bernoulli_kl(Var pred, const Tensor& target, double eps = 1e-7);

}  // namespace odgl::ad
