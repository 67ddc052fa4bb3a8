#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cbldm/nn/optim.hpp"
#include "doctest.h"

using namespace cbldm;

TEST_CASE("first AdamW step with gradient 1 moves by about -lr") {
  ParamStore ps;
  ps.add("w", Tensor::scalar(0.0f));
  AdamW opt(AdamWConfig{});  // lr 1e-3, no decay
  opt.step(ps, {Tensor::scalar(1.0f)});
  // bias correction makes m_hat = v_hat = 1 at step 1
  double expect = -1e-3 / (1.0 + 1e-8);
  CHECK(double(ps.item(0).value.data[0]) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("zero gradient and no decay is a fixed point") {
  ParamStore ps;
  ps.add("w", Tensor({3}, {1.0f, -2.0f, 0.5f}));
  AdamW opt(AdamWConfig{});
  for (int i = 0; i < 5; ++i) opt.step(ps, {Tensor::zeros({3})});
  CHECK(ps.item(0).value.data == std::vector<float>{1.0f, -2.0f, 0.5f});
}

TEST_CASE("lr = 0 is an identity even with decay") {
  ParamStore ps;
  ps.add("w", Tensor({2}, {0.7f, -0.3f}));
  AdamWConfig cfg;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.1;
  AdamW opt(cfg);
  opt.step(ps, {Tensor({2}, {5.0f, -2.0f})});
  CHECK(ps.item(0).value.data == std::vector<float>{0.7f, -0.3f});
}

TEST_CASE("weight decay is decoupled from the gradient") {
  // gradient 0: update reduces to p *= (1 - lr*wd)
  ParamStore ps;
  ps.add("w", Tensor::scalar(2.0f));
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg);
  opt.step(ps, {Tensor::scalar(0.0f)});
  CHECK(ps.item(0).value.data[0] == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-6));
}

TEST_CASE("identical runs produce bit-identical parameters") {
  auto run = [] {
    ParamStore ps;
    ps.add("w", Tensor({4}, {0.1f, 0.2f, 0.3f, 0.4f}));
    AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.02;
    AdamW opt(cfg);
    RngStream rng(99);
    for (int i = 0; i < 50; ++i) {
      Tensor g = sample_gaussian<float>(rng, {4});
      opt.step(ps, {g});
    }
    return ps.item(0).value.data;
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite gradient aborts with a diagnostic") {
  ParamStore ps;
  ps.add("w", Tensor::scalar(1.0f));
  AdamW opt(AdamWConfig{});
  Tensor bad = Tensor::scalar(std::numeric_limits<float>::quiet_NaN());
  CHECK_THROWS_AS(opt.step(ps, {bad}), Error);
}

TEST_CASE("param store rejects duplicate names and binds in order") {
  ParamStore ps;
  ps.add("a", Tensor::scalar(1.0f));
  ps.add("b", Tensor::scalar(2.0f));
  CHECK_THROWS_AS(ps.add("a", Tensor::scalar(3.0f)), Error);
  CHECK(ps.find("b") == 1);
  CHECK(ps.find("missing") == -1);

  TapeT<float> tape;
  auto vars = ps.bind(tape);
  REQUIRE(vars.size() == 2);
  CHECK(vars[0].val().data[0] == 1.0f);
  CHECK(vars[1].val().data[0] == 2.0f);
}

TEST_CASE("gradient descent on a quadratic converges") {
  // min (w - 3)^2 via autodiff + AdamW
  ParamStore ps;
  ps.add("w", Tensor::scalar(0.0f));
  AdamWConfig cfg;
  cfg.lr = 0.05;
  AdamW opt(cfg);
  for (int i = 0; i < 400; ++i) {
    TapeT<float> tape;
    auto vars = ps.bind(tape);
    VarT<float> d = add_const(vars[0], -3.0f);
    VarT<float> loss = mul(d, d);
    tape.backward(loss);
    opt.step(ps, ps.collect_grads(tape, vars));
  }
  CHECK(std::abs(double(ps.item(0).value.data[0]) - 3.0) < 1e-2);
}
