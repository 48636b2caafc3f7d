#include "odgl/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "odgl/error.hpp"
#include "odgl/io.hpp"

namespace odgl {

std::size_t ParamSet::add(std::string name, Tensor init) {
  if (find(name)) throw ParameterError("duplicate parameter name " + name);
  params_.push_back({std::move(name), std::move(init)});
  return params_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ParamSet::copy_matching(const ParamSet& other) {
  std::size_t copied = 0;
  for (auto& p : params_) {
    if (auto j = other.find(p.name)) {
      if (!other[*j].value.same_shape(p.value)) throw ParameterError("shape mismatch for parameter " + p.name);
      p.value = other[*j].value;
      ++copied;
    }
  }
  return copied;
}

std::vector<Tensor> ParamSet::zeros_like() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.rows(), p.value.cols());
  return out;
}

Tensor init_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor t(rows, cols);
  for (auto& x : t.values()) x = (2.0 * rng.uniform() - 1.0) * bound;
  return t;
}

Linear Linear::create(ParamSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = with_bias;
  l.weight = ps.add(name + ".w", init_uniform(in, out, in, rng));
  if (with_bias) l.bias = ps.add(name + ".b", init_uniform(1, out, in, rng));
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = ad::matmul(x, tape.param(weight));
  return has_bias ? ad::add(y, tape.param(bias)) : y;
}

Mlp Mlp::create(ParamSet& ps, const std::string& name, const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw ParameterError("an MLP needs at least input and output dims");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    m.layers.push_back(Linear::create(ps, name + "." + std::to_string(i), dims[i], dims[i + 1], rng));
  return m;
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, x);
    if (i + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

GruCell GruCell::create(ParamSet& ps, const std::string& name, std::size_t input, std::size_t hidden, Rng& rng) {
  GruCell g;
  g.hidden = hidden;
  g.wz = Linear::create(ps, name + ".wz", input, hidden, rng);
  g.uz = Linear::create(ps, name + ".uz", hidden, hidden, rng, false);
  g.wr = Linear::create(ps, name + ".wr", input, hidden, rng);
  g.ur = Linear::create(ps, name + ".ur", hidden, hidden, rng, false);
  g.wh = Linear::create(ps, name + ".wh", input, hidden, rng);
  g.uh = Linear::create(ps, name + ".uh", hidden, hidden, rng, false);
  return g;
}

Var GruCell::operator()(Tape& tape, Var h, Var m) const {
  if (h.cols() != hidden || m.cols() != wz.in || h.rows() != m.rows())
    throw ParameterError("GRU input dimensions do not match the cell");
  Var z = ad::sigmoid(ad::add(wz(tape, m), uz(tape, h)));
  Var r = ad::sigmoid(ad::add(wr(tape, m), ur(tape, h)));
  Var cand = ad::tanh(ad::add(wh(tape, m), uh(tape, ad::mul(r, h))));
  return ad::add(ad::mul(ad::one_minus(z), h), ad::mul(z, cand));
}

void adam_step(AdamState& s, ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) throw ParameterError("gradient count does not match parameters");
  if (s.m.empty()) {
    s.m = params.zeros_like();
    s.v = params.zeros_like();
  }
  if (s.m.size() != params.size()) throw ParameterError("Adam state does not match parameters");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].value;
    const Tensor& g = grads[k];
    if (!g.empty() && !g.same_shape(p)) throw ParameterError("gradient shape mismatch for " + params[k].name);
    if (!s.m[k].same_shape(p)) throw ParameterError("Adam accumulator shape mismatch for " + params[k].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = (g.empty() ? 0.0 : g[i]) + s.weight_decay * p[i];
      s.m[k][i] = s.beta1 * s.m[k][i] + (1.0 - s.beta1) * gi;
      s.v[k][i] = s.beta2 * s.v[k][i] + (1.0 - s.beta2) * gi * gi;
      const double mh = s.m[k][i] / c1;
      const double vh = s.v[k][i] / c2;
      p[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
    }
  }
}

Tensor gumbel(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x67756d62656cULL}));
  Tensor t(rows, cols);
  for (auto& x : t.values()) {
    const double u = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
    x = -std::log(-std::log(u));
  }
  return t;
}

namespace {

constexpr char kMagic[5] = {'O', 'D', 'G', 'L', '1'};

template <typename T>
void put_le(std::string& out, T x) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &x, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw FormatError("checkpoint truncated at byte " + std::to_string(pos));
  T x;
  std::memcpy(&x, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return x;
}

}  // namespace

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  std::string out(kMagic, sizeof(kMagic));
  for (const auto& p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, p.value.rows());
    put_le<std::uint64_t>(out, p.value.cols());
    for (double x : p.value.values()) put_le<double>(out, x);
  }
  write_file_atomic(path, out);
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path.string() + ": bad checkpoint magic");
  std::size_t pos = sizeof(kMagic);
  ParamSet ps;
  while (pos < data.size()) {
    const auto len = get_le<std::uint32_t>(data, pos);
    if (pos + len > data.size()) throw FormatError("checkpoint truncated in parameter name");
    std::string name = data.substr(pos, len);
    pos += len;
    const auto rank = get_le<std::uint32_t>(data, pos);
    if (rank < 1 || rank > 2) throw FormatError("unsupported rank " + std::to_string(rank) + " for " + name);
    std::uint64_t rows = get_le<std::uint64_t>(data, pos);
    std::uint64_t cols = rank == 2 ? get_le<std::uint64_t>(data, pos) : 1;
    Tensor t(rows, cols);
    for (auto& x : t.values()) x = get_le<double>(data, pos);
    ps.add(std::move(name), std::move(t));
  }
  return ps;
}

}  // namespace odgl
