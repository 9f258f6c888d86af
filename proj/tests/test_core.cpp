#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "wpb/autodiff.hpp"
#include "wpb/error.hpp"
#include "wpb/functional.hpp"
#include "wpb/rng.hpp"
#include "wpb/tensor.hpp"

using namespace wpb;
using wpb::testing::random_matrix;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter rng streams are reproducible and distinct") {
  CounterRng a = CounterRng::derive(5, {1, 2});
  CounterRng b = CounterRng::derive(5, {1, 2});
  CounterRng c = CounterRng::derive(5, {2, 1});
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    CHECK(va != c.next_u64());
  }
  CounterRng resumed(a.state());
  CHECK(resumed.next_u64() == a.next_u64());
}

TEST_CASE("rng distributions stay in range") {
  CounterRng rng = CounterRng::derive(1, {});
  double sum = 0.0, sq = 0.0;
  std::set<std::uint64_t> seen;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    const double r = rng.rademacher();
    REQUIRE((r == 1.0 || r == -1.0));
    const auto k = rng.below(7);
    REQUIRE(k < 7);
    seen.insert(k);
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  CHECK(seen.size() == 7);
  CHECK_THROWS_AS(rng.below(0), ValidationError);
}

TEST_CASE("tensor kernels on hand cases") {
  const Tensor r = ops::relu(Tensor::vector({-1, 0, 2}));
  CHECK(r.bit_equal(Tensor::vector({0, 0, 2})));

  const Tensor m = ops::matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4}));
  CHECK(m.shape() == Shape{1, 1});
  CHECK(m[0] == 11.0);

  CounterRng rng = CounterRng::derive(2, {});
  const Tensor z = ops::scale(random_matrix(3, 4, rng, -5, 5), 0.0);
  for (double v : z.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(ops::matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {1, 2})), ValidationError);
  CHECK_THROWS_AS(ops::add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), ValidationError);
}

TEST_CASE("broadcasting add and last-axis reductions") {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor row = Tensor::vector({10, 20, 30});
  const Tensor s = ops::add(a, row);
  CHECK(s.bit_equal(Tensor::matrix(2, 3, {11, 22, 33, 14, 25, 36})));
  CHECK(ops::sum_last(a).bit_equal(Tensor::matrix(2, 1, {6, 15})));
  CHECK(ops::max_last(a).bit_equal(Tensor::matrix(2, 1, {3, 6})));
  CHECK(ops::sum(a).item() == 21.0);
  const Tensor lse = ops::log_sum_exp(Tensor::matrix(1, 2, {1000.0, 1000.0}));
  CHECK(lse[0] == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  CHECK(ops::reduce_to_shape(a, Shape{3}).bit_equal(Tensor::vector({5, 7, 9})));
}

TEST_CASE("softmax examples and invariants") {
  const Tensor u = softmax_probabilities(Tensor::vector({0, 0, 0}));
  for (double p : u.data()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Tensor two = softmax_probabilities(Tensor::vector({std::log(2.0), 0.0}));
  CHECK(two[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  const Tensor big = softmax_probabilities(Tensor::vector({1000.0, 0.0}));
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);

  CHECK_THROWS_AS(softmax_probabilities(Tensor::vector({1.0})), ValidationError);

  CounterRng rng = CounterRng::derive(3, {});
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(9);
    Tensor z(Shape{c});
    const double spread = trial % 2 ? 50.0 : 3.0;
    for (auto& v : z.data()) v = rng.uniform(-spread, spread);
    const Tensor p = softmax_probabilities(z);
    double total = 0.0;
    for (double v : p.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

namespace {

double ce_value(const Tensor& logits, int label) {
  Tape t;
  return t.value(cross_entropy(t, t.leaf(logits), label)).item();
}

double kl_value(const Tensor& p, const Tensor& q) {
  Tape t;
  return t.value(kl_divergence(t, t.leaf(p), t.leaf(q))).item();
}

}  // namespace

TEST_CASE("cross-entropy examples and invariants") {
  CHECK(ce_value(Tensor::vector({0, 0}), 0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  for (double t : {-7.0, 0.0, 3.5, 1e3})
    for (int k = 0; k < 3; ++k) CHECK(ce_value(Tensor::vector({t, t, t}), k) == std::log(3.0));
  CHECK(ce_value(Tensor::vector({10, 0}), 0) == doctest::Approx(4.539889921686465e-05).epsilon(1e-12));
  CHECK_THROWS_AS(ce_value(Tensor::vector({0, 0}), 2), ValidationError);

  CounterRng rng = CounterRng::derive(4, {});
  for (int trial = 0; trial < 200; ++trial) {
    Tensor z(Shape{5});
    for (auto& v : z.data()) v = rng.uniform(-20, 20);
    CHECK(ce_value(z, static_cast<int>(rng.below(5))) >= 0.0);
  }
  // Batched rows agree with the single-vector form.
  const Tensor logits = Tensor::matrix(2, 3, {0.5, -1.0, 2.0, 3.0, 3.0, -4.0});
  const std::vector<int> y{2, 1};
  Tape t;
  const Tensor rows = t.value(cross_entropy_rows(t, t.leaf(logits), y));
  CHECK(rows[0] == doctest::Approx(ce_value(Tensor::vector({0.5, -1.0, 2.0}), 2)).epsilon(1e-15));
  CHECK(rows[1] == doctest::Approx(ce_value(Tensor::vector({3.0, 3.0, -4.0}), 1)).epsilon(1e-15));
}

TEST_CASE("kl divergence examples and invariants") {
  CHECK(kl_value(Tensor::vector({1.5, -2, 0.25}), Tensor::vector({1.5, -2, 0.25})) == doctest::Approx(0.0));
  const double forward = kl_value(Tensor::vector({std::log(2.0), 0.0}), Tensor::vector({0.0, 0.0}));
  CHECK(forward == doctest::Approx(0.056633012265132426).epsilon(1e-13));
  const double backward = kl_value(Tensor::vector({0.0, 0.0}), Tensor::vector({std::log(2.0), 0.0}));
  CHECK(backward == doctest::Approx(0.05889151782819172).epsilon(1e-12));
  CHECK(std::abs(forward - backward) > 1e-3);

  CounterRng rng = CounterRng::derive(5, {});
  for (int trial = 0; trial < 200; ++trial) {
    Tensor p(Shape{4}), q(Shape{4});
    for (auto& v : p.data()) v = rng.uniform(-10, 10);
    for (auto& v : q.data()) v = rng.uniform(-10, 10);
    CHECK(kl_value(p, q) >= -1e-12);
    const double shift = rng.uniform(-100, 100);
    Tensor shifted = p;
    for (auto& v : shifted.data()) v += shift;
    CHECK(std::abs(kl_value(p, shifted)) <= 1e-12);
  }
}

TEST_CASE("autodiff hand gradients") {
  {
    Tape t;
    const Var x = t.leaf(Tensor::scalar(3.0));
    const auto g = t.backward(t.mul(x, x), std::vector<Var>{x});
    CHECK(g.of(x).item() == 6.0);
  }
  {
    Tape t;
    const Var z = t.leaf(Tensor::vector({0, 0}));
    const auto g = t.backward(cross_entropy(t, z, 0), std::vector<Var>{z});
    CHECK(g.of(z)[0] == doctest::Approx(-0.5).epsilon(1e-15));
    CHECK(g.of(z)[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  {
    Tape t;
    const Var x = t.leaf(Tensor::vector({-1, 2}));
    const auto g = t.backward(t.sum(t.relu(x)), std::vector<Var>{x});
    CHECK(g.of(x).bit_equal(Tensor::vector({0, 1})));
  }
  {
    Tape t;
    const Var x = t.leaf(Tensor::vector({1, 2}));
    const Var unused = t.leaf(Tensor::vector({5, 5, 5}));
    const auto g = t.backward(t.sum(x), std::vector<Var>{x, unused});
    CHECK(g.of(unused).bit_equal(Tensor::vector({0, 0, 0})));
    CHECK_THROWS_AS(t.backward(x, std::vector<Var>{x}), ValidationError);
  }
}

TEST_CASE("finite differences examples") {
  auto squares = [](const Tensor& x) {
    double s = 0;
    for (double v : x.data()) s += v * v;
    return s;
  };
  const Tensor g = finite_difference_gradient(squares, Tensor::vector({1, 2}), 1e-5);
  CHECK(std::abs(g[0] - 2.0) <= 1e-8);
  CHECK(std::abs(g[1] - 4.0) <= 1e-8);

  const Tensor zero = finite_difference_gradient([](const Tensor&) { return 4.2; }, Tensor::vector({1, 2, 3}), 1e-5);
  for (double v : zero.data()) CHECK(v == 0.0);

  auto linear = [](const Tensor& x) { return x[0] - 2 * x[1] + 3 * x[2]; };
  const Tensor gl = finite_difference_gradient(linear, Tensor::vector({0.3, -0.7, 2.0}), 1e-5);
  CHECK(gl[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(gl[1] == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(gl[2] == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("every op's gradient matches central differences") {
  CounterRng rng = CounterRng::derive(6, {});
  const Tensor a0 = random_matrix(3, 4, rng, -1, 1);
  const Tensor b0 = random_matrix(4, 2, rng, -1, 1);
  const Tensor w0 = random_matrix(3, 4, rng, -1, 1);
  const Tensor row0 = Tensor::vector({0.3, -0.2, 0.9, 0.1});

  using Build = std::function<Var(Tape&, Var)>;
  const std::vector<std::pair<const char*, Build>> cases = {
      {"matmul", [&](Tape& t, Var a) { return t.sum(t.matmul(a, t.leaf(b0))); }},
      {"add-broadcast", [&](Tape& t, Var a) { return t.sum(t.mul(t.add(a, t.leaf(row0)), t.leaf(w0))); }},
      {"mul", [&](Tape& t, Var a) { return t.sum(t.mul(a, a)); }},
      {"relu", [&](Tape& t, Var a) { return t.sum(t.mul(t.relu(a), t.leaf(w0))); }},
      {"negate-scale", [&](Tape& t, Var a) { return t.sum(t.scale(t.negate(t.mul(a, t.leaf(w0))), 2.5)); }},
      {"exp", [&](Tape& t, Var a) { return t.sum(t.exp(a)); }},
      {"sum_last", [&](Tape& t, Var a) { return t.sum(t.mul(t.sum_last(a), t.sum_last(a))); }},
      {"max_last", [&](Tape& t, Var a) { return t.sum(t.max_last(t.mul(a, t.leaf(w0)))); }},
      {"log_sum_exp", [&](Tape& t, Var a) { return t.sum(t.log_sum_exp(t.scale(a, 3.0))); }},
      {"broadcast-row-grad", [&](Tape& t, Var a) {
         const Var r = t.leaf(row0);
         return t.sum(t.mul(t.add(t.leaf(w0), t.mul(r, r)), a));
       }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    Tape t;
    const Var a = t.leaf(a0);
    const auto g = t.backward(build(t, a), std::vector<Var>{a});
    const Tensor fd = finite_difference_gradient(
        [&](const Tensor& x) {
          Tape u;
          return u.value(build(u, u.leaf(x))).item();
        },
        a0, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i)
      CHECK(wpb::testing::close_rel(g.of(a)[i], fd[i], 1e-4, 1e-7));
    // Same graph, second sweep: bit-identical.
    CHECK(t.backward(build(t, a), std::vector<Var>{a}).of(a).bit_equal(g.of(a)));
  }
}
