#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "odgl/error.hpp"
#include "odgl/io.hpp"
#include "odgl/nn.hpp"

using namespace odgl;

namespace {

Tensor filled(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (auto& v : t.values()) v = rng.uniform() * 4.0 - 2.0;
  return t;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("odgl_nn_" + name);
}

}  // namespace

TEST_CASE("parameter sets") {
  ParamSet ps;
  CHECK(ps.add("a", Tensor(2, 2, 1.0)) == 0);
  CHECK(ps.add("b", Tensor(1, 3, 2.0)) == 1);
  CHECK_THROWS_AS(ps.add("a", Tensor(1, 1)), ParameterError);
  CHECK(ps.find("b") == 1);
  CHECK_FALSE(ps.find("c").has_value());
  CHECK(ps.scalar_count() == 7);

  ParamSet other;
  other.add("b", Tensor(1, 3, 9.0));
  other.add("z", Tensor(1, 1, 1.0));
  CHECK(ps.copy_matching(other) == 1);
  CHECK(ps[1].value[2] == 9.0);
  ParamSet bad;
  bad.add("a", Tensor(3, 3));
  CHECK_THROWS_AS(ps.copy_matching(bad), ParameterError);
}

TEST_CASE("uniform init respects the fan-in bound") {
  Rng rng(1);
  const Tensor t = init_uniform(50, 40, 25, rng);
  double lo = 1, hi = -1;
  for (double v : t.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= -0.2);
  CHECK(hi <= 0.2);
  CHECK(lo < -0.19);
  CHECK(hi > 0.19);
}

TEST_CASE("linear and mlp shapes and gradients") {
  Rng rng(2);
  ParamSet ps;
  const Mlp mlp = Mlp::create(ps, "mlp", {3, 5, 2}, rng);
  CHECK(ps.find("mlp.0.w").has_value());
  CHECK(ps.find("mlp.1.b").has_value());
  CHECK(mlp.out() == 2);
  const Tensor x = filled(4, 3, rng);
  Tape t(ps);
  CHECK(mlp(t, t.constant(x)).value().shape() == std::array<std::size_t, 2>{4, 2});
  const double err = gradcheck::max_error(ps, [&](Tape& tape) {
    return ad::sum_all(ad::tanh(mlp(tape, tape.constant(x))));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("gru closed forms") {
  Rng rng(3);
  ParamSet ps;
  const GruCell gru = GruCell::create(ps, "gru", 2, 3, rng);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (auto& v : ps[i].value.values()) v = 0.0;
  const Tensor h = filled(4, 3, rng), m = filled(4, 2, rng);
  {
    Tape t(ps);
    const Tensor out = gru(t, t.constant(h), t.constant(m)).value();
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(out[i] == doctest::Approx(h[i] / 2));
  }
  for (auto& v : ps[*ps.find("gru.wz.b")].value.values()) v = -50.0;
  for (auto& v : ps[*ps.find("gru.wh.b")].value.values()) v = 3.0;
  Tape t(ps);
  const Tensor out = gru(t, t.constant(h), t.constant(m)).value();
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(out[i] - h[i]) <= 1e-12);
  CHECK_THROWS_AS(gru(t, t.constant(Tensor(4, 2)), t.constant(m)), ParameterError);
}

TEST_CASE("gru gradient check") {
  Rng rng(4);
  ParamSet ps;
  const GruCell gru = GruCell::create(ps, "gru", 3, 4, rng);
  const Tensor h = filled(5, 4, rng), m = filled(5, 3, rng), w = filled(5, 4, rng);
  CHECK(gradcheck::max_error(ps, [&](Tape& t) {
          return ad::weighted_sum(gru(t, t.constant(h), t.constant(m)), w);
        }) <= 1e-4);
}

TEST_CASE("adam") {
  SUBCASE("converges on a quadratic") {
    ParamSet ps;
    ps.add("x", Tensor::scalar(0.0));
    AdamState s;
    s.lr = 0.1;
    for (int i = 0; i < 500; ++i) {
      const double x = ps[0].value.item();
      adam_step(s, ps, {Tensor::scalar(2.0 * (x - 5.0))});
    }
    CHECK(std::abs(ps[0].value.item() - 5.0) < 1e-3);
  }
  SUBCASE("first step moves by lr") {
    ParamSet ps;
    ps.add("x", Tensor(1, 3, {1.0, 1.0, 1.0}));
    AdamState s;
    s.lr = 0.01;
    adam_step(s, ps, {Tensor(1, 3, {3.0, -0.002, 40.0})});
    CHECK(ps[0].value[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(ps[0].value[1] == doctest::Approx(1.01).epsilon(1e-6));
    CHECK(ps[0].value[2] == doctest::Approx(0.99).epsilon(1e-9));
  }
  SUBCASE("zero gradient leaves parameters alone without decay") {
    ParamSet ps;
    ps.add("x", Tensor(1, 2, {0.5, -0.5}));
    AdamState s;
    adam_step(s, ps, {Tensor(1, 2, 0.0)});
    CHECK(ps[0].value == Tensor(1, 2, {0.5, -0.5}));
    AdamState d;
    d.weight_decay = 0.1;
    adam_step(d, ps, {Tensor()});
    CHECK(std::abs(ps[0].value[0]) < 0.5);
  }
  SUBCASE("shape mismatch") {
    ParamSet ps;
    ps.add("x", Tensor(1, 2));
    AdamState s;
    CHECK_THROWS_AS(adam_step(s, ps, {Tensor(2, 2)}), ParameterError);
  }
}

TEST_CASE("gumbel noise") {
  CHECK(gumbel(3, 4, 7) == gumbel(3, 4, 7));
  const Tensor g = gumbel(1000, 1000, 11);
  double sum = 0, sq = 0;
  for (double v : g.values()) sum += v;
  const double mean = sum / g.size();
  for (double v : g.values()) sq += (v - mean) * (v - mean);
  CHECK(std::abs(mean - 0.5772156649) <= 0.01);
  CHECK(std::abs(sq / g.size() - M_PI * M_PI / 6) <= 0.05);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(5);
  ParamSet ps;
  Linear::create(ps, "a", 3, 2, rng);
  Mlp::create(ps, "b", {2, 4, 1}, rng);
  const auto path = temp_file("ckpt.bin");
  save_checkpoint(ps, path);
  const ParamSet back = load_checkpoint(path);
  REQUIRE(back.size() == ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(back[i].name == ps[i].name);
    CHECK(back[i].value == ps[i].value);
  }
  const std::string bytes = read_file(path);
  CHECK(bytes.substr(0, 5) == "ODGL1");
  write_file_atomic(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  write_file_atomic(path, "NOPE!" + bytes.substr(5));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}
