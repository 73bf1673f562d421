#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "pcotta/optim.hpp"
#include "pcotta/tape.hpp"

using namespace pcotta;

TEST_CASE("adamw leaves parameters alone on zero gradient, zero decay", "[optim]") {
  Parameter<float> p("p", TensorF({2, 2}, {1, 2, 3, 4}));
  AdamW<float>::Config cfg;
  cfg.lr = 0.1f;
  cfg.weight_decay = 0.0f;
  AdamW<float> opt({&p}, cfg);
  opt.step();
  CHECK(p.value.data == std::vector<float>{1, 2, 3, 4});
}

TEST_CASE("adamw first step matches hand evaluation", "[optim]") {
  // t=1, p=1, g=1, lr=0.1, wd=0: mhat=1, vhat=1, p <- 1 - 0.1/(1+1e-8)
  Parameter<float> p("p", TensorF::scalar(1.0f));
  p.grad.data[0] = 1.0f;
  AdamW<float>::Config cfg;
  cfg.lr = 0.1f;
  cfg.weight_decay = 0.0f;
  AdamW<float> opt({&p}, cfg);
  opt.step();
  CHECK(p.value.data[0] == Catch::Approx(0.9).margin(1e-6));
  CHECK(p.grad.data[0] == 0.0f);  // gradients zeroed afterward
}

TEST_CASE("adamw skips non-trainable parameters", "[optim]") {
  Parameter<float> frozen("frozen", TensorF::scalar(1.0f), /*train=*/false);
  frozen.grad.data[0] = 1.0f;
  AdamW<float>::Config cfg;
  cfg.lr = 0.1f;
  AdamW<float> opt({&frozen}, cfg);
  opt.step();
  CHECK(frozen.value.data[0] == 1.0f);
}

TEST_CASE("cosine schedule decays from base rate to zero", "[optim]") {
  AdamW<float>::Config cfg;
  cfg.lr = 0.5f;
  cfg.horizon = 100;
  AdamW<float> opt({}, cfg);
  CHECK(opt.lr_at(0) == Catch::Approx(0.5));
  CHECK(opt.lr_at(50) == Catch::Approx(0.25));
  CHECK(opt.lr_at(100) == Catch::Approx(0.0).margin(1e-9));
  CHECK(opt.lr_at(250) == Catch::Approx(0.0).margin(1e-9));
  // monotone decrease over the horizon
  float prev = opt.lr_at(0);
  for (int t = 1; t <= 100; ++t) {
    float cur = opt.lr_at(t);
    CHECK(cur <= prev + 1e-9f);
    prev = cur;
  }
}

TEST_CASE("adamw moment shapes follow parameter shapes", "[optim]") {
  Parameter<float> a("a", TensorF({3, 4}));
  Parameter<float> b("b", TensorF({5}));
  AdamW<float> opt({&a, &b}, {});
  REQUIRE(opt.moment1().size() == 2);
  CHECK(opt.moment1()[0].shape == a.value.shape);
  CHECK(opt.moment2()[1].shape == b.value.shape);
}
