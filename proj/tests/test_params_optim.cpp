#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gega/optim.hpp"
#include "gega/params.hpp"

using namespace gega;

TEST_CASE("named tensor blocks round-trip byte-identically") {
  std::mt19937_64 rng(11);
  ParamStore params;
  params.emplace("a.w", init_uniform({3, 4}, 4, rng));
  params.emplace("a.b", init_uniform({4}, 4, rng));
  params.emplace("z", Tensor::param({2, 2}, std::vector<double>(4, -0.125)));

  std::string blob;
  append_named_tensors(blob, params);
  std::size_t at = 0;
  ParamStore back = read_named_tensors(blob, at, true);
  REQUIRE(at == blob.size());
  REQUIRE(back.size() == params.size());
  for (const auto& [name, t] : params) {
    REQUIRE(back.count(name) == 1);
    REQUIRE(back.at(name).shape() == t.shape());
    REQUIRE(back.at(name).values() == t.values());
    REQUIRE(back.at(name).requires_grad());
  }

  std::string blob2;
  append_named_tensors(blob2, back);
  REQUIRE(blob2 == blob);
}

TEST_CASE("named tensor blocks reject corrupt input") {
  ParamStore params;
  params.emplace("w", Tensor::param({2}, {1.0, 1.0}));
  std::string blob;
  append_named_tensors(blob, params);

  std::size_t at = 0;
  std::string cut = blob.substr(0, blob.size() - 4);
  REQUIRE_THROWS_MATCHES(read_named_tensors(cut, at, false), TensorError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("truncated")));
}

TEST_CASE("adam minimizes a quadratic") {
  ParamStore params;
  params.emplace("x", Tensor::param({1}, {10.0}));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.max_grad_norm = 0.0;  // no clipping
  Adam opt(cfg);
  for (int i = 0; i < 500; ++i) {
    Tensor& x = params.at("x");
    x.zero_grad();
    x.grad()[0] = 2.0 * (x.values()[0] - 3.0);
    opt.step(params);
  }
  REQUIRE(params.at("x").values()[0] == Catch::Approx(3.0).margin(1e-3));
}

TEST_CASE("split learning rates follow the name prefix") {
  ParamStore params;
  params.emplace("encoder.w", Tensor::param({1}, {0.0}));
  params.emplace("head.w", Tensor::param({1}, {0.0}));
  AdamConfig cfg;
  cfg.lr = 1e-3;
  cfg.lr_added = 5e-3;
  cfg.max_grad_norm = 0.0;
  Adam opt(cfg);
  params.at("encoder.w").grad()[0] = 1.0;
  params.at("head.w").grad()[0] = 1.0;
  opt.step(params);
  // First Adam step moves by -rate * g / (|g| + eps), i.e. about -rate.
  REQUIRE(params.at("encoder.w").values()[0] ==
          Catch::Approx(-1e-3).epsilon(1e-6));
  REQUIRE(params.at("head.w").values()[0] ==
          Catch::Approx(-5e-3).epsilon(1e-6));
}

TEST_CASE("learning-rate schedule warms up then decays to zero") {
  AdamConfig cfg;
  cfg.warmup_ratio = 0.1;
  cfg.total_steps = 100;
  REQUIRE(schedule_scale(cfg, 1) == Catch::Approx(0.1));
  REQUIRE(schedule_scale(cfg, 5) == Catch::Approx(0.5));
  REQUIRE(schedule_scale(cfg, 10) == Catch::Approx(1.0));
  REQUIRE(schedule_scale(cfg, 55) == Catch::Approx(0.5));
  REQUIRE(schedule_scale(cfg, 100) == 0.0);
  REQUIRE(schedule_scale(cfg, 250) == 0.0);

  AdamConfig flat;
  flat.total_steps = 0;
  REQUIRE(schedule_scale(flat, 1) == 1.0);
  REQUIRE(schedule_scale(flat, 1000000) == 1.0);
}

TEST_CASE("gradient clipping rescales only oversized norms") {
  ParamStore params;
  params.emplace("a", Tensor::param({2}, {0.0, 0.0}));
  params.at("a").grad()[0] = 3.0;
  params.at("a").grad()[1] = 4.0;
  AdamConfig cfg;
  cfg.max_grad_norm = 1.0;
  Adam opt(cfg);

  const double before = opt.clip_gradients(params);
  REQUIRE(before == Catch::Approx(5.0));
  const auto& g = params.at("a").grad();
  REQUIRE(std::sqrt(g[0] * g[0] + g[1] * g[1]) == Catch::Approx(1.0));
  REQUIRE(g[0] == Catch::Approx(0.6));

  params.at("a").grad() = {0.1, 0.2};
  const double small = opt.clip_gradients(params);
  REQUIRE(small == Catch::Approx(std::sqrt(0.05)));
  REQUIRE(params.at("a").grad()[0] == 0.1);
  REQUIRE(params.at("a").grad()[1] == 0.2);
}

TEST_CASE("missing parameters are reported by name") {
  ParamStore params;
  REQUIRE_THROWS_MATCHES(fetch_param(params, "gega.mgc.wo"), TensorError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("gega.mgc.wo")));
}
