#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "gega/gradcheck.hpp"
#include "gega/tensor.hpp"

using namespace gega;
using Catch::Matchers::ContainsSubstring;

namespace {

Tensor rnd(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
           double hi = 1.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

// Input samples that stay a safe distance from a kink at `pivot`.
Tensor rnd_away_from(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double pivot) {
  Tensor t = Tensor::uniform(std::move(shape), 0.1, 1.0, rng);
  std::bernoulli_distribution flip(0.5);
  for (double& v : t.values()) {
    if (flip(rng)) v = -v;
    v += pivot;
  }
  return t;
}

struct FdCase {
  std::string name;
  Primitive op;
  Tensor x0;
  std::function<Tensor(Tape&, const Tensor&)> f;
};

// Wraps one primitive application into a scalar function of the input in
// `slot`: f(x) = sum(op(...) .* R) with fixed random weights R.
FdCase make_case(const std::string& name, Primitive op,
                 std::vector<Tensor> inputs, std::size_t slot, OpArgs args,
                 std::mt19937_64& rng) {
  Tape probe(false);
  Tensor out0 = apply_primitive(probe, op, inputs, args);
  Tensor weights = rnd(out0.shape(), rng);
  Tensor x0 = inputs[slot];
  auto f = [op, inputs, slot, args, weights](Tape& t, const Tensor& x) {
    std::vector<Tensor> in = inputs;
    in[slot] = x;
    Tensor out = apply_primitive(t, op, in, args);
    return t.sum_all(t.mul(out, weights));
  };
  return FdCase{name, op, x0, std::move(f)};
}

std::vector<FdCase> fd_cases(std::mt19937_64& rng) {
  std::vector<FdCase> cases;
  auto add = [&](const std::string& name, Primitive op,
                 std::vector<Tensor> inputs, std::size_t slot,
                 OpArgs args = {}) {
    cases.push_back(make_case(name, op, std::move(inputs), slot, args, rng));
  };

  Tensor a23 = rnd({2, 3}, rng);
  Tensor b23 = rnd({2, 3}, rng);
  Tensor row3 = rnd({3}, rng);
  add("add lhs", Primitive::Add, {a23, b23}, 0);
  add("add rhs", Primitive::Add, {a23, b23}, 1);
  add("add row-broadcast lhs", Primitive::Add, {a23, row3}, 0);
  add("add row-broadcast rhs", Primitive::Add, {a23, row3}, 1);
  add("sub lhs", Primitive::Sub, {a23, b23}, 0);
  add("sub rhs", Primitive::Sub, {a23, b23}, 1);
  add("sub row-broadcast rhs", Primitive::Sub, {a23, row3}, 1);
  add("mul lhs", Primitive::Mul, {a23, b23}, 0);
  add("mul rhs", Primitive::Mul, {a23, b23}, 1);
  add("mul row-broadcast rhs", Primitive::Mul, {a23, row3}, 1);
  { OpArgs g; g.scalar = 0.7; add("add_scalar", Primitive::AddScalar, {a23}, 0, g); }
  { OpArgs g; g.scalar = -1.3; add("scalar_mul", Primitive::ScalarMul, {a23}, 0, g); }

  Tensor m32 = rnd({3, 2}, rng);
  Tensor v3 = rnd({3}, rng);
  add("matmul lhs", Primitive::MatMul, {a23, m32}, 0);
  add("matmul rhs", Primitive::MatMul, {a23, m32}, 1);
  add("matmul mat-vec lhs", Primitive::MatMul, {a23, v3}, 0);
  add("matmul mat-vec rhs", Primitive::MatMul, {a23, v3}, 1);
  add("matmul vec-mat lhs", Primitive::MatMul, {v3, m32}, 0);
  add("matmul vec-mat rhs", Primitive::MatMul, {v3, m32}, 1);
  add("transpose", Primitive::Transpose, {a23}, 0);

  { OpArgs g; g.axis = 0;
    add("concat-1d slot0", Primitive::Concat, {v3, rnd({2}, rng)}, 0, g);
    add("concat-1d slot1", Primitive::Concat, {v3, rnd({2}, rng)}, 1, g);
    add("concat rows", Primitive::Concat, {a23, rnd({4, 3}, rng)}, 0, g); }
  { OpArgs g; g.axis = 1;
    add("concat cols", Primitive::Concat, {a23, rnd({2, 2}, rng)}, 1, g); }
  { OpArgs g; g.col_begin = 1; g.col_end = 3;
    add("slice_cols", Primitive::SliceCols, {rnd({2, 4}, rng)}, 0, g); }
  { OpArgs g; g.indices = {2, 0, 2};
    add("gather_rows repeated", Primitive::GatherRows, {m32}, 0, g); }
  { OpArgs g; g.indices = {1, 3};
    add("gather_rows 1d", Primitive::GatherRows, {rnd({4}, rng)}, 0, g); }
  { OpArgs g; g.target_shape = {6};
    add("reshape flatten", Primitive::Reshape, {a23}, 0, g); }
  { OpArgs g; g.target_shape = {3, 2};
    add("reshape 2d", Primitive::Reshape, {a23}, 0, g); }

  { OpArgs g; g.axis = 0; add("softmax 1d", Primitive::Softmax, {rnd({4}, rng)}, 0, g); }
  { OpArgs g; g.axis = 1; add("softmax rows", Primitive::Softmax, {a23}, 0, g); }
  { OpArgs g; g.axis = 0; add("softmax cols", Primitive::Softmax, {a23}, 0, g); }
  { OpArgs g; g.axis = 0; add("logsumexp 1d", Primitive::LogSumExp, {rnd({4}, rng)}, 0, g); }
  { OpArgs g; g.axis = 1; add("logsumexp rows", Primitive::LogSumExp, {a23}, 0, g); }
  { OpArgs g; g.axis = 0; add("logsumexp cols", Primitive::LogSumExp, {a23}, 0, g); }

  add("relu", Primitive::Relu, {rnd_away_from({2, 3}, rng, 0.0)}, 0);
  add("tanh", Primitive::Tanh, {a23}, 0);
  add("sigmoid", Primitive::Sigmoid, {a23}, 0);
  add("exp", Primitive::Exp, {a23}, 0);
  add("log", Primitive::Log, {rnd({2, 3}, rng, 0.5, 1.5)}, 0);
  add("layer_norm rows", Primitive::LayerNorm, {rnd({3, 5}, rng)}, 0);
  add("layer_norm 1d", Primitive::LayerNorm, {rnd({6}, rng)}, 0);

  { OpArgs g; g.axis = 0; add("sum cols", Primitive::Sum, {a23}, 0, g); }
  { OpArgs g; g.axis = 1; add("sum rows", Primitive::Sum, {a23}, 0, g); }
  { OpArgs g; g.axis = 0; add("sum 1d", Primitive::Sum, {v3}, 0, g); }
  { OpArgs g; g.axis = 0; add("mean cols", Primitive::Mean, {a23}, 0, g); }
  { OpArgs g; g.axis = 1; add("mean rows", Primitive::Mean, {a23}, 0, g); }
  add("sum_all", Primitive::SumAll, {a23}, 0);
  add("normalize", Primitive::Normalize, {rnd({5}, rng, 0.2, 1.2)}, 0);
  add("normalize_rows", Primitive::NormalizeRows, {rnd({3, 4}, rng, 0.2, 1.2)}, 0);
  { OpArgs g; g.scalar = 0.0;
    add("clamp_min", Primitive::ClampMin, {rnd_away_from({2, 3}, rng, 0.0)}, 0, g); }

  return cases;
}

}  // namespace

TEST_CASE("softmax hand values and row normalization") {
  Tape t;
  Tensor y = t.softmax(Tensor::vec({0.0, 0.0}), 0);
  REQUIRE(y.at(0) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(y.at(1) == Catch::Approx(0.5).margin(1e-15));

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t rows = 1 + trial % 4, cols = 2 + trial % 5;
    Tensor x = rnd({rows, cols}, rng, -3.0, 3.0);
    if (trial % 3 == 0)
      for (double& v : x.values()) v += 1000.0;  // large-magnitude inputs
    if (trial % 3 == 1)
      for (double& v : x.values()) v -= 1000.0;
    Tensor s = t.softmax(x, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        REQUIRE(s.at(r, c) >= 0.0);
        sum += s.at(r, c);
      }
      REQUIRE(std::fabs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("logsumexp hand values, stability and bounds") {
  Tape t;
  REQUIRE(t.logsumexp(Tensor::vec({-2.75}), 0).item() == Catch::Approx(-2.75).margin(1e-12));
  REQUIRE(t.logsumexp(Tensor::vec({0.0, 0.0}), 0).item() ==
          Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(t.logsumexp(Tensor::vec({1000.0, 1000.0}), 0).item() ==
          Catch::Approx(1000.0 + std::log(2.0)).margin(1e-9));

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 6;
    Tensor x = rnd({n}, rng, -4.0, 4.0);
    double mx = x.at(0);
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x.at(i));
    const double v = t.logsumexp(x, 0).item();
    REQUIRE(v > mx);
    REQUIRE(v <= mx + std::log(static_cast<double>(n)) + 1e-12);
  }
}

TEST_CASE("matmul against identity and shape errors") {
  Tape t;
  Tensor eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::mt19937_64 rng(13);
  Tensor m = rnd({3, 4}, rng);
  Tensor out = t.matmul(eye, m);
  for (std::size_t i = 0; i < m.size(); ++i)
    REQUIRE(out.values()[i] == m.values()[i]);

  REQUIRE_THROWS_MATCHES(t.matmul(Tensor::zeros({3, 4}), Tensor::zeros({5, 2})),
                         TensorError,
                         Catch::Matchers::MessageMatches(
                             ContainsSubstring("matmul") &&
                             ContainsSubstring("[3 x 4]") &&
                             ContainsSubstring("[5 x 2]")));
}

TEST_CASE("sum of squares has exact gradient") {
  Tape t;
  Tensor x = Tensor::param({2}, {1.0, 2.0});
  Tensor loss = t.sum_all(t.mul(x, x));
  t.backward(loss);
  REQUIRE(x.grad()[0] == 2.0);
  REQUIRE(x.grad()[1] == 4.0);
}

TEST_CASE("softmax first-component gradient matches central differences") {
  auto f = [](Tape& t, const Tensor& x) {
    return t.sum_all(t.gather_rows(t.softmax(x, 0), {0}));
  };
  Tensor x0 = Tensor::vec({0.0, 0.0});
  GradCheckReport rep = finite_difference_check(f, x0);
  REQUIRE(rep.pass);
  REQUIRE(rep.coords[0].analytic == Catch::Approx(0.25).margin(1e-9));
  REQUIRE(rep.coords[1].analytic == Catch::Approx(-0.25).margin(1e-9));
}

TEST_CASE("every primitive passes central-difference gradient checks") {
  std::vector<bool> seen(std::size(kAllPrimitives), false);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    for (FdCase& fc : fd_cases(rng)) {
      INFO("seed " << seed << ", case " << fc.name);
      GradCheckReport rep = finite_difference_check(fc.f, fc.x0);
      INFO("max rel error " << rep.max_rel_error << " at coordinate "
                            << rep.worst_index);
      REQUIRE(rep.pass);
      for (std::size_t i = 0; i < std::size(kAllPrimitives); ++i)
        if (kAllPrimitives[i] == fc.op) seen[i] = true;
    }
  }
  for (std::size_t i = 0; i < std::size(kAllPrimitives); ++i) {
    INFO("primitive " << primitive_name(kAllPrimitives[i]) << " missing");
    REQUIRE(seen[i]);
  }
}

TEST_CASE("corrupted backward rule is caught by the checker") {
  auto bad = [](Tape& t, const Tensor& x) {
    Tensor y = t.custom_unary(
        x,
        [](const std::vector<double>& v) {
          std::vector<double> out(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
          return out;
        },
        [](const std::vector<double>&, const std::vector<double>& y,
           const std::vector<double>& g) {
          std::vector<double> dx(y.size());
          for (std::size_t i = 0; i < y.size(); ++i)
            dx[i] = g[i] * (1.0 - y[i] * y[i] + 0.1);  // deliberately wrong
          return dx;
        });
    return t.sum_all(y);
  };
  std::mt19937_64 rng(21);
  GradCheckReport rep = finite_difference_check(bad, rnd({4}, rng));
  REQUIRE_FALSE(rep.pass);
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  std::mt19937_64 rng(31);
  Tape t;
  Tensor x = rnd({6, 9}, rng, -5.0, 5.0);
  Tensor y = t.layer_norm(x);
  for (std::size_t r = 0; r < 6; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < 9; ++c) mu += y.at(r, c);
    mu /= 9.0;
    REQUIRE(std::fabs(mu) < 1e-7);
    double var = 0.0;
    for (std::size_t c = 0; c < 9; ++c) var += (y.at(r, c) - mu) * (y.at(r, c) - mu);
    var /= 9.0;
    REQUIRE(std::fabs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("backward replay is deterministic and accumulates") {
  std::mt19937_64 rng(41);
  Tensor x = Tensor::uniform({4, 4}, -1.0, 1.0, rng, true);
  Tensor w = Tensor::uniform({4, 4}, -1.0, 1.0, rng, true);
  Tape t;
  Tensor loss = t.sum_all(t.tanh(t.layer_norm(t.matmul(x, w))));
  t.backward(loss);
  std::vector<double> gx = x.grad(), gw = w.grad();

  t.zero_grads();
  x.zero_grad();
  w.zero_grad();
  t.backward(loss);
  REQUIRE(x.grad() == gx);  // bit-identical
  REQUIRE(w.grad() == gw);

  t.zero_grads();
  t.backward(loss);  // no leaf zeroing: grads accumulate
  for (std::size_t i = 0; i < gx.size(); ++i)
    REQUIRE(x.grad()[i] == 2.0 * gx[i]);
}

TEST_CASE("reverse replay visits each node exactly once") {
  Tensor x = Tensor::param({3}, {1.0, -2.0, 0.5});
  Tape t;
  Tensor y = t.add(x, x);
  Tensor z = t.add(y, y);
  t.backward(t.sum_all(z));
  for (double g : x.grad()) REQUIRE(g == 4.0);
}

TEST_CASE("tensors off the loss path keep zero gradients") {
  std::mt19937_64 rng(51);
  Tensor x = Tensor::uniform({3}, -1.0, 1.0, rng, true);
  Tensor w = Tensor::uniform({3}, -1.0, 1.0, rng, true);
  Tape t;
  Tensor unused = t.mul(w, w);
  Tensor loss = t.sum_all(t.tanh(x));
  t.backward(loss);
  for (double g : w.grad()) REQUIRE(g == 0.0);
  for (double g : unused.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("validation errors carry op names and shapes") {
  Tape t;
  REQUIRE_THROWS_MATCHES(
      t.add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), TensorError,
      Catch::Matchers::MessageMatches(ContainsSubstring("add") &&
                                      ContainsSubstring("[2 x 3]") &&
                                      ContainsSubstring("[2 x 4]")));
  REQUIRE_THROWS_AS(Tensor::zeros({3, 0}), TensorError);
  REQUIRE_THROWS_AS(t.log(Tensor::vec({1.0, 0.0})), TensorError);
  REQUIRE_THROWS_AS(t.normalize(Tensor::vec({0.0, 0.0})), TensorError);
  REQUIRE_THROWS_AS(t.softmax(Tensor::zeros({2, 2}), 2), TensorError);
  REQUIRE_THROWS_AS(t.logsumexp(Tensor::zeros({4}), 1), TensorError);
  REQUIRE_THROWS_AS(t.reshape(Tensor::zeros({2, 3}), {4}), TensorError);
  REQUIRE_THROWS_AS(t.gather_rows(Tensor::zeros({3, 2}), {3}), TensorError);
  REQUIRE_THROWS_AS(t.slice_cols(Tensor::zeros({3, 2}), 1, 4), TensorError);
  REQUIRE_THROWS_AS(t.backward(Tensor::zeros({2})), TensorError);
  REQUIRE_THROWS_AS(
      apply_primitive(t, Primitive::Relu, {Tensor::zeros({2}), Tensor::zeros({2})}),
      TensorError);
}

TEST_CASE("non-recording tape computes values without building a graph") {
  Tape t(false);
  Tensor x = Tensor::param({2}, {0.3, -0.3});
  Tensor y = t.tanh(x);
  REQUIRE(y.at(0) == Catch::Approx(std::tanh(0.3)));
  REQUIRE_FALSE(y.requires_grad());
  REQUIRE(t.size() == 0);
}
