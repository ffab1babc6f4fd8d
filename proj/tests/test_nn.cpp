#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using vio::Tensor;

TEST_CASE("linear layer forward against a hand computation") {
  vio::Rng rng(1);
  vio::Linear lin(2, 3, true, rng);
  // w is (out, in), b is (out)
  std::vector<double> w{1, 2, 3, 4, 5, 6};
  std::copy(w.begin(), w.end(), lin.w.data());
  std::vector<double> b{0.5, -0.5, 1.0};
  std::copy(b.begin(), b.end(), lin.b.data());
  Tensor x = Tensor::from_data({1, 2}, {10.0, 20.0});
  Tensor y = lin.forward(x);
  CHECK(y.shape() == vio::Shape{1, 3});
  CHECK(y.values()[0] == 10 * 1 + 20 * 2 + 0.5);
  CHECK(y.values()[1] == 10 * 3 + 20 * 4 - 0.5);
  CHECK(y.values()[2] == 10 * 5 + 20 * 6 + 1.0);
}

TEST_CASE("glorot initialization stays within its bound") {
  vio::Rng rng(2);
  vio::Linear lin(50, 40, false, rng);
  double limit = std::sqrt(6.0 / (50 + 40));
  double mean = 0.0;
  for (int i = 0; i < lin.w.size(); ++i) {
    double v = lin.w.values()[static_cast<std::size_t>(i)];
    CHECK(std::abs(v) <= limit);
    mean += v;
  }
  mean /= lin.w.size();
  CHECK(std::abs(mean) < 0.02);
}

TEST_CASE("conv layer wraps conv2d with stored kernel geometry") {
  vio::Rng rng(3);
  vio::Conv2dLayer layer(1, 2, 3, 2, 1, true, rng);
  Tensor x = testutil::random_tensor({1, 8, 8}, rng);
  Tensor y = layer.forward(x);
  CHECK(y.shape() == vio::Shape{2, 4, 4});
}

TEST_CASE("batchnorm normalizes per channel in training mode") {
  vio::BatchNorm2d bn(2);
  vio::Rng rng(4);
  Tensor x = testutil::random_tensor({2, 6, 6}, rng, 3.0);
  // shift one channel far away to verify per-channel statistics
  for (int i = 0; i < 36; ++i) x.data()[i] += 10.0;
  Tensor y = bn.forward(x, true);
  for (int c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (int i = 0; i < 36; ++i) m += y.values()[static_cast<std::size_t>(c * 36 + i)];
    m /= 36.0;
    for (int i = 0; i < 36; ++i) {
      double d = y.values()[static_cast<std::size_t>(c * 36 + i)] - m;
      v += d * d;
    }
    v /= 36.0;
    CHECK(m == Catch::Approx(0.0).margin(1e-9));
    CHECK(v == Catch::Approx(1.0).margin(1e-6));
  }
  // eval mode uses running statistics and differs from training output
  Tensor ye = bn.forward(x, false);
  CHECK_FALSE(testutil::tensors_equal(y, ye));
}

TEST_CASE("gradcheck: batchnorm training mode") {
  vio::Rng rng(5);
  Tensor x = testutil::random_tensor({2, 3, 4}, rng);
  auto fn = [&] {
    vio::BatchNorm2d bn(2);  // fresh layer: running stats untouched by probes
    return vio::sum(vio::square(bn.forward(x, true)));
  };
  CHECK(testutil::gradcheck({x}, fn).max_err < 1e-4);
}

TEST_CASE("lstm single cell against hand-computed gates") {
  vio::Rng rng(6);
  vio::Lstm lstm(1, 1, 1, false, rng);
  // gate order in stacked weights: input, forget, cell, output
  double wi = 0.3, wf = -0.2, wg = 0.5, wo = 0.4;
  double ui = 0.1, uf = 0.2, ug = -0.3, uo = 0.25;
  double bi = 0.05, bf = 1.0, bg = -0.1, bo = 0.2;
  std::vector<double> w_ih{wi, wf, wg, wo}, w_hh{ui, uf, ug, uo};
  std::vector<double> b_ih{bi, bf, bg, bo}, b_hh(4, 0.0);
  std::copy(w_ih.begin(), w_ih.end(), lstm.fw_[0].w_ih.data());
  std::copy(w_hh.begin(), w_hh.end(), lstm.fw_[0].w_hh.data());
  std::copy(b_ih.begin(), b_ih.end(), lstm.fw_[0].b_ih.data());
  std::copy(b_hh.begin(), b_hh.end(), lstm.fw_[0].b_hh.data());

  double x0 = 0.7;
  Tensor seq = Tensor::from_data({1, 1, 1}, {x0});
  Tensor out = lstm.forward(seq);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double i = sig(wi * x0 + bi);
  double f = sig(wf * x0 + bf);
  double g = std::tanh(wg * x0 + bg);
  double o = sig(wo * x0 + bo);
  double c = f * 0.0 + i * g;
  double h = o * std::tanh(c);
  CHECK(out.values()[0] == Catch::Approx(h).margin(1e-12));
}

TEST_CASE("lstm zero weights give zero output") {
  vio::Rng rng(7);
  vio::Lstm lstm(3, 4, 2, true, rng);
  vio::ParamMap params;
  lstm.collect("lstm", params);
  testutil::fill_params(params, 0.0);
  Tensor seq = testutil::random_tensor({5, 1, 3}, rng);
  Tensor out = lstm.forward(seq);
  for (int i = 0; i < out.size(); ++i) CHECK(out.values()[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("lstm forget gate bias initialized to one") {
  vio::Rng rng(8);
  vio::Lstm lstm(3, 4, 1, false, rng);
  for (int j = 4; j < 8; ++j) CHECK(lstm.fw_[0].b_ih.values()[static_cast<std::size_t>(j)] == 1.0);
  CHECK(lstm.fw_[0].b_ih.values()[0] != 1.0);
}

TEST_CASE("bidirectional lstm with tied directions mirrors a reversed sequence") {
  vio::Rng rng(9);
  int hidden = 4, input = 3, T = 5;
  vio::Lstm lstm(input, hidden, 1, true, rng);
  // tie the backward direction to the forward weights
  std::copy(lstm.fw_[0].w_ih.values().begin(), lstm.fw_[0].w_ih.values().end(),
            lstm.bw_[0].w_ih.data());
  std::copy(lstm.fw_[0].w_hh.values().begin(), lstm.fw_[0].w_hh.values().end(),
            lstm.bw_[0].w_hh.data());
  std::copy(lstm.fw_[0].b_ih.values().begin(), lstm.fw_[0].b_ih.values().end(),
            lstm.bw_[0].b_ih.data());
  std::copy(lstm.fw_[0].b_hh.values().begin(), lstm.fw_[0].b_hh.values().end(),
            lstm.bw_[0].b_hh.data());

  Tensor seq = testutil::random_tensor({T, 1, input}, rng);
  std::vector<double> rev(seq.values().size());
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < input; ++k)
      rev[static_cast<std::size_t>(t * input + k)] =
          seq.values()[static_cast<std::size_t>((T - 1 - t) * input + k)];
  Tensor seq_rev = Tensor::from_data({T, 1, input}, rev);

  Tensor out = lstm.forward(seq);
  Tensor out_rev = lstm.forward(seq_rev);
  // forward half on the original equals backward half on the reversal, mirrored
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < hidden; ++k) {
      double fw_orig = out.values()[static_cast<std::size_t>(t * 2 * hidden + k)];
      double bw_rev =
          out_rev.values()[static_cast<std::size_t>((T - 1 - t) * 2 * hidden + hidden + k)];
      CHECK(fw_orig == bw_rev);
      double bw_orig = out.values()[static_cast<std::size_t>(t * 2 * hidden + hidden + k)];
      double fw_rev = out_rev.values()[static_cast<std::size_t>((T - 1 - t) * 2 * hidden + k)];
      CHECK(bw_orig == fw_rev);
    }
}

TEST_CASE("unidirectional lstm state threading equals one unsplit pass") {
  vio::Rng rng(10);
  vio::Lstm lstm(3, 5, 2, false, rng);
  Tensor seq = testutil::random_tensor({6, 1, 3}, rng);
  Tensor full = lstm.forward(seq);

  Tensor first = vio::slice(seq, 0, 0, 3);
  Tensor second = vio::slice(seq, 0, 3, 3);
  vio::LstmState mid;
  Tensor out1 = lstm.forward(first, nullptr, &mid);
  Tensor out2 = lstm.forward(second, &mid);

  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 5; ++k) {
      CHECK(out1.values()[static_cast<std::size_t>(t * 5 + k)] ==
            full.values()[static_cast<std::size_t>(t * 5 + k)]);
      CHECK(out2.values()[static_cast<std::size_t>(t * 5 + k)] ==
            full.values()[static_cast<std::size_t>((t + 3) * 5 + k)]);
    }
}

TEST_CASE("bidirectional initial state seeds only the forward direction") {
  vio::Rng rng(11);
  int hidden = 3;
  vio::Lstm lstm(2, hidden, 1, true, rng);
  Tensor seq = testutil::random_tensor({4, 1, 2}, rng);

  vio::LstmState init = lstm.zero_state(1);
  for (auto& h : init.h) std::fill(h.data(), h.data() + h.size(), 0.3);
  for (auto& c : init.c) std::fill(c.data(), c.data() + c.size(), -0.2);

  Tensor plain = lstm.forward(seq);
  Tensor seeded = lstm.forward(seq, &init);
  bool fw_changed = false;
  for (int t = 0; t < 4; ++t)
    for (int k = 0; k < hidden; ++k) {
      std::size_t fw_idx = static_cast<std::size_t>(t * 2 * hidden + k);
      std::size_t bw_idx = static_cast<std::size_t>(t * 2 * hidden + hidden + k);
      if (plain.values()[fw_idx] != seeded.values()[fw_idx]) fw_changed = true;
      CHECK(plain.values()[bw_idx] == seeded.values()[bw_idx]);
    }
  CHECK(fw_changed);
}

TEST_CASE("lstm rejects mismatched input width") {
  vio::Rng rng(12);
  vio::Lstm lstm(3, 4, 1, false, rng);
  Tensor bad = Tensor::zeros({2, 1, 5});
  CHECK_THROWS_AS(lstm.forward(bad), vio::DimensionError);
}

TEST_CASE("gradcheck: two-layer bidirectional lstm") {
  vio::Rng rng(13);
  vio::Lstm lstm(3, 4, 2, true, rng);
  Tensor seq = testutil::random_tensor({4, 1, 3}, rng);
  vio::ParamMap pm;
  lstm.collect("lstm", pm);
  std::vector<Tensor> params{seq};
  for (auto& kv : pm) params.push_back(kv.second);
  auto fn = [&] { return vio::sum(vio::square(lstm.forward(seq))); };
  CHECK(testutil::gradcheck(params, fn).max_err < 1e-3);
}

TEST_CASE("lstm batch dimension keeps samples independent") {
  vio::Rng rng(14);
  vio::Lstm lstm(2, 3, 1, false, rng);
  Tensor s1 = testutil::random_tensor({3, 1, 2}, rng);
  Tensor s2 = testutil::random_tensor({3, 1, 2}, rng);
  // batched input holding both samples
  std::vector<double> joint;
  for (int t = 0; t < 3; ++t) {
    joint.insert(joint.end(), s1.values().begin() + t * 2, s1.values().begin() + (t + 1) * 2);
    joint.insert(joint.end(), s2.values().begin() + t * 2, s2.values().begin() + (t + 1) * 2);
  }
  Tensor batch = Tensor::from_data({3, 2, 2}, joint);
  Tensor out_b = lstm.forward(batch);
  Tensor out_1 = lstm.forward(s1);
  Tensor out_2 = lstm.forward(s2);
  for (int t = 0; t < 3; ++t)
    for (int k = 0; k < 3; ++k) {
      CHECK(out_b.values()[static_cast<std::size_t>((t * 2 + 0) * 3 + k)] ==
            out_1.values()[static_cast<std::size_t>(t * 3 + k)]);
      CHECK(out_b.values()[static_cast<std::size_t>((t * 2 + 1) * 3 + k)] ==
            out_2.values()[static_cast<std::size_t>(t * 3 + k)]);
    }
}
