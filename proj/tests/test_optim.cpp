#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using vio::Tensor;

TEST_CASE("adam first step matches the update formula by hand") {
  Tensor w = Tensor::from_data({1}, {2.0}, true);
  vio::ParamMap params{{"w", w}};
  vio::Adam opt(0.1);

  Tensor loss = vio::square(w);  // grad = 2w = 4
  loss.backward();
  opt.step(params);

  double g = 4.0;
  double m = 0.1 * g, v = 0.001 * g * g;
  double mhat = m / 0.1, vhat = v / 0.001;
  double expected = 2.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(w.values()[0] == Catch::Approx(expected).margin(1e-15));
  CHECK_FALSE(w.has_grad());  // step clears gradients
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("adam converges on a one-dimensional quadratic") {
  Tensor w = Tensor::from_data({1}, {0.0}, true);
  vio::ParamMap params{{"w", w}};
  vio::Adam opt(0.1);
  for (int i = 0; i < 50; ++i) {
    Tensor diff = vio::add(w, Tensor::scalar(-3.0));
    vio::square(diff).backward();
    opt.step(params);
  }
  CHECK(std::abs(w.values()[0] - 3.0) < 0.5);
}

TEST_CASE("adam names the parameter missing a gradient") {
  Tensor a = Tensor::from_data({1}, {1.0}, true);
  Tensor b = Tensor::from_data({1}, {1.0}, true);
  vio::ParamMap params{{"used", a}, {"left_out", b}};
  vio::Adam opt(0.01);
  vio::square(a).backward();
  try {
    opt.step(params);
    FAIL("expected ContractError");
  } catch (const vio::ContractError& e) {
    CHECK(std::string(e.what()).find("left_out") != std::string::npos);
  }
}

TEST_CASE("adam with zero learning rate leaves parameters untouched") {
  Tensor w = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  vio::ParamMap params{{"w", w}};
  std::vector<double> before = w.values();
  vio::Adam opt(0.0);
  vio::sum(vio::square(w)).backward();
  opt.step(params);
  CHECK(w.values() == before);
}

TEST_CASE("adam skips parameters that do not require gradients") {
  Tensor w = Tensor::from_data({1}, {1.0}, true);
  Tensor frozen = Tensor::from_data({1}, {5.0});  // no grad requested
  vio::ParamMap params{{"w", w}, {"frozen", frozen}};
  vio::Adam opt(0.1);
  vio::square(w).backward();
  opt.step(params);
  CHECK(frozen.values()[0] == 5.0);
  CHECK(w.values()[0] != 1.0);
}

TEST_CASE("adam moment state is keyed by name across steps") {
  // Two steps with the same gradient: second update uses accumulated moments,
  // so it differs from the first even though the gradient is identical.
  Tensor w = Tensor::from_data({1}, {10.0}, true);
  vio::ParamMap params{{"w", w}};
  vio::Adam opt(0.1);

  vio::scale(w, 3.0).backward();  // grad = 3
  opt.step(params);
  double after1 = w.values()[0];
  double delta1 = 10.0 - after1;

  vio::scale(w, 3.0).backward();
  opt.step(params);
  double delta2 = after1 - w.values()[0];
  // with constant gradients adam's bias-corrected step is nearly constant
  CHECK(delta1 == Catch::Approx(0.1).margin(1e-6));
  CHECK(delta2 == Catch::Approx(0.1).margin(1e-6));
  CHECK(opt.steps_taken() == 2);
}
