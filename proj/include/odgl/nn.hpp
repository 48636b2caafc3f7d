#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "odgl/autodiff.hpp"
#include "odgl/rng.hpp"

namespace odgl {

using ad::Tape;
using ad::Tensor;
using ad::Var;

struct Parameter {
  std::string name;
  Tensor value;
};

/// Ordered, named collection of trainable tensors.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor init);
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t scalar_count() const;

  /// Copies values for every name present in both sets; returns the count.
  std::size_t copy_matching(const ParamSet& other);

  std::vector<Tensor> zeros_like() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

/// y = x W + b
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;
  std::size_t in = 0;
  std::size_t out = 0;

  static Linear create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool with_bias = true);
  Var operator()(Tape& tape, Var x) const;
};

/// Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  static Mlp create(ParamSet& ps, const std::string& name, const std::vector<std::size_t>& dims, Rng& rng);
  Var operator()(Tape& tape, Var x) const;
  std::size_t out() const { return layers.back().out; }
};

/// Standard GRU cell with the reset gate applied before the candidate's
/// recurrent matmul.
struct GruCell {
  Linear wz, uz, wr, ur, wh, uh;
  std::size_t hidden = 0;

  static GruCell create(ParamSet& ps, const std::string& name, std::size_t input, std::size_t hidden, Rng& rng);
  Var operator()(Tape& tape, Var h, Var m) const;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// Bias-corrected Adam with L2 weight decay folded into the gradient.
void adam_step(AdamState& state, ParamSet& params, const std::vector<Tensor>& grads);

/// -log(-log(u)), u ~ U(0,1) clamped to [1e-12, 1 - 1e-12].
Tensor gumbel(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Binary checkpoint: "ODGL1", then per parameter
/// u32 name length, name bytes, u32 rank, u64 dims, little-endian f64 data.
void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace odgl
