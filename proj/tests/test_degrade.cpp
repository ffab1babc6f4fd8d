#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using vio::DegradationSpec;
using vio::ImageFrame;
using vio::ImuReading;
using vio::SequenceDataset;
using vio::Tensor;

namespace {

ImageFrame make_frame(int h, int w, vio::Rng& rng) {
  ImageFrame f;
  f.timestamp = 0.0;
  f.pixels = testutil::random_tensor({1, h, w}, rng, 0.4);
  return f;
}

std::vector<ImuReading> make_block(int m, vio::Rng& rng) {
  std::vector<ImuReading> out;
  for (int i = 0; i < m; ++i) {
    ImuReading r;
    r.timestamp = 0.01 * i;
    for (int k = 0; k < 3; ++k) {
      r.accel[static_cast<std::size_t>(k)] = rng.uniform(-1, 1);
      r.gyro[static_cast<std::size_t>(k)] = rng.uniform(-1, 1);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("occlusion changes exactly the masked pixels") {
  vio::Rng rng(1);
  ImageFrame f = make_frame(20, 30, rng);
  DegradationSpec spec;
  spec.kind = "occlusion";
  spec.mask_height = 8;
  spec.mask_width = 5;
  spec.mask_value = 0.25;
  vio::Rng inj(7);
  ImageFrame g = vio::occlude(f, spec, inj);
  int changed = 0, masked_value_count = 0;
  for (int i = 0; i < f.pixels.size(); ++i) {
    std::size_t k = static_cast<std::size_t>(i);
    if (f.pixels.values()[k] != g.pixels.values()[k]) ++changed;
    if (g.pixels.values()[k] == 0.25) ++masked_value_count;
  }
  // every changed pixel took the mask value; mask area is 8*5 = 40
  CHECK(changed <= 40);
  CHECK(masked_value_count >= 40);
  // the mask forms a contiguous block: find its bounding box
  int min_x = 30, max_x = -1, min_y = 20, max_y = -1;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x)
      if (g.pixels.values()[static_cast<std::size_t>(y * 30 + x)] == 0.25 &&
          f.pixels.values()[static_cast<std::size_t>(y * 30 + x)] != 0.25) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  CHECK(max_x - min_x + 1 <= 5);
  CHECK(max_y - min_y + 1 <= 8);
}

TEST_CASE("occlusion with an exact-value probe counts the mask area") {
  // use a frame that cannot already contain the mask value
  ImageFrame f;
  f.pixels = Tensor::full({1, 20, 20}, 0.125);
  DegradationSpec spec;
  spec.mask_height = 20;
  spec.mask_width = 20;
  spec.mask_value = -0.375;
  vio::Rng inj(3);
  ImageFrame g = vio::occlude(f, spec, inj);
  int changed = 0;
  for (int i = 0; i < g.pixels.size(); ++i)
    if (g.pixels.values()[static_cast<std::size_t>(i)] == -0.375) ++changed;
  CHECK(changed == 400);

  spec.mask_height = 4;
  spec.mask_width = 7;
  vio::Rng inj2(4);
  ImageFrame h = vio::occlude(f, spec, inj2);
  changed = 0;
  for (int i = 0; i < h.pixels.size(); ++i)
    if (h.pixels.values()[static_cast<std::size_t>(i)] == -0.375) ++changed;
  CHECK(changed == 28);
}

TEST_CASE("zero-intensity injectors are the identity") {
  vio::Rng rng(2);
  ImageFrame f = make_frame(12, 16, rng);
  std::vector<ImuReading> block = make_block(10, rng);

  SECTION("occlusion with empty mask") {
    DegradationSpec spec;
    spec.mask_height = 0;
    spec.mask_width = 0;
    vio::Rng inj(1);
    ImageFrame g = vio::occlude(f, spec, inj);
    CHECK(testutil::tensors_equal(f.pixels, g.pixels));
  }
  SECTION("noise and blur at zero fraction and zero sigma") {
    DegradationSpec spec;
    spec.sp_fraction = 0.0;
    spec.blur_sigma = 0.0;
    vio::Rng inj(1);
    ImageFrame g = vio::noise_and_blur(f, spec, inj);
    CHECK(testutil::tensors_equal(f.pixels, g.pixels));
  }
  SECTION("image dropping at rate zero") {
    vio::SynthConfig cfg;
    cfg.num_frames = 6;
    SequenceDataset ds = vio::synthesize(cfg, 1);
    DegradationSpec spec;
    spec.rate = 0.0;
    vio::Rng inj(1);
    SequenceDataset out = vio::drop_images(ds, spec, inj);
    for (std::size_t i = 0; i < ds.windows.size(); ++i)
      CHECK(out.windows[i].frame_b == ds.windows[i].frame_b);
  }
  SECTION("imu noise at zero std and zero bias") {
    DegradationSpec spec;
    spec.accel_noise_std = 0.0;
    spec.gyro_bias = {0.0, 0.0, 0.0};
    vio::Rng inj(1);
    auto out = vio::imu_noise_bias(block, spec, inj);
    for (std::size_t i = 0; i < block.size(); ++i) {
      CHECK(out[i].accel == block[i].accel);
      CHECK(out[i].gyro == block[i].gyro);
    }
  }
  SECTION("imu dropping zero readings") {
    DegradationSpec spec;
    spec.drop_count = 0;
    vio::Rng inj(1);
    auto out = vio::drop_imu(block, spec, inj);
    for (std::size_t i = 0; i < block.size(); ++i) {
      CHECK(out[i].accel == block[i].accel);
      CHECK(out[i].timestamp == block[i].timestamp);
    }
  }
}

TEST_CASE("injectors are bit reproducible under the same seed") {
  vio::Rng rng(3);
  ImageFrame f = make_frame(16, 16, rng);
  std::vector<ImuReading> block = make_block(10, rng);

  DegradationSpec occ;
  occ.mask_height = 6;
  occ.mask_width = 6;
  vio::Rng a1(9), a2(9);
  CHECK(testutil::tensors_equal(vio::occlude(f, occ, a1).pixels, vio::occlude(f, occ, a2).pixels));

  DegradationSpec nb;
  nb.sp_fraction = 0.2;
  nb.blur_sigma = 0.8;
  vio::Rng b1(9), b2(9);
  CHECK(testutil::tensors_equal(vio::noise_and_blur(f, nb, b1).pixels,
                                vio::noise_and_blur(f, nb, b2).pixels));

  DegradationSpec im;
  im.accel_noise_std = 0.3;
  vio::Rng c1(9), c2(9);
  auto o1 = vio::imu_noise_bias(block, im, c1);
  auto o2 = vio::imu_noise_bias(block, im, c2);
  for (std::size_t i = 0; i < block.size(); ++i) CHECK(o1[i].accel == o2[i].accel);

  DegradationSpec dr;
  dr.drop_count = 4;
  vio::Rng d1(9), d2(9);
  auto p1 = vio::drop_imu(block, dr, d1);
  auto p2 = vio::drop_imu(block, dr, d2);
  for (std::size_t i = 0; i < block.size(); ++i) CHECK(p1[i].accel == p2[i].accel);
}

TEST_CASE("salt and pepper hits roughly the configured fraction") {
  ImageFrame f;
  f.pixels = Tensor::full({1, 100, 100}, 0.123);
  DegradationSpec spec;
  spec.sp_fraction = 0.1;
  spec.blur_sigma = 0.0;
  vio::Rng inj(17);
  ImageFrame g = vio::noise_and_blur(f, spec, inj);
  int hit = 0, extreme = 0;
  for (int i = 0; i < g.pixels.size(); ++i) {
    double v = g.pixels.values()[static_cast<std::size_t>(i)];
    if (v != 0.123) ++hit;
    if (v == 0.5 || v == -0.5) ++extreme;
  }
  // 10000 pixels at 10%: expect about 1000, allow 6 sigma (~±180)
  CHECK(hit >= 820);
  CHECK(hit <= 1180);
  CHECK(extreme == hit);  // corrupted pixels take exactly ±0.5
}

TEST_CASE("blur preserves a constant image and the overall mean") {
  ImageFrame f;
  f.pixels = Tensor::full({1, 24, 24}, 0.2);
  DegradationSpec spec;
  spec.sp_fraction = 0.0;
  spec.blur_sigma = 1.5;
  vio::Rng inj(5);
  ImageFrame g = vio::noise_and_blur(f, spec, inj);
  for (int i = 0; i < g.pixels.size(); ++i)
    CHECK(g.pixels.values()[static_cast<std::size_t>(i)] == Catch::Approx(0.2).margin(1e-12));

  // reflected borders make the kernel mass-preserving, so the mean survives
  vio::Rng rng(6);
  ImageFrame h = make_frame(24, 24, rng);
  double mean_before = 0.0;
  for (int i = 0; i < h.pixels.size(); ++i) mean_before += h.pixels.values()[static_cast<std::size_t>(i)];
  ImageFrame hb = vio::noise_and_blur(h, spec, inj);
  double mean_after = 0.0;
  for (int i = 0; i < hb.pixels.size(); ++i) mean_after += hb.pixels.values()[static_cast<std::size_t>(i)];
  CHECK(mean_after == Catch::Approx(mean_before).margin(1e-9));
  // blur reduces spatial variation
  double var_before = 0.0, var_after = 0.0;
  double n = h.pixels.size();
  for (int i = 0; i < h.pixels.size(); ++i) {
    double a = h.pixels.values()[static_cast<std::size_t>(i)] - mean_before / n;
    double b = hb.pixels.values()[static_cast<std::size_t>(i)] - mean_after / n;
    var_before += a * a;
    var_after += b * b;
  }
  CHECK(var_after < var_before);
}

TEST_CASE("imu noise and bias shift the channels as configured") {
  vio::Rng rng(7);
  std::vector<ImuReading> block = make_block(2000, rng);
  DegradationSpec spec;
  spec.accel_noise_std = 0.3;
  spec.gyro_bias = {0.05, -0.02, 0.1};
  vio::Rng inj(21);
  auto out = vio::imu_noise_bias(block, spec, inj);
  REQUIRE(out.size() == block.size());

  // gyro shift is exactly the bias on every reading
  for (std::size_t i = 0; i < block.size(); ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(out[i].gyro[static_cast<std::size_t>(k)] -
                block[i].gyro[static_cast<std::size_t>(k)] ==
            Catch::Approx(spec.gyro_bias[static_cast<std::size_t>(k)]).margin(1e-15));

  // accel deltas are zero-mean with the configured std (6000 samples)
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < block.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      double d = out[i].accel[static_cast<std::size_t>(k)] - block[i].accel[static_cast<std::size_t>(k)];
      sum += d;
      sum_sq += d * d;
    }
  double n = 6000.0;
  double mean = sum / n;
  double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.02);
  CHECK(stddev == Catch::Approx(0.3).epsilon(0.05));
}

TEST_CASE("imu dropping repeats predecessors and cascades") {
  vio::Rng rng(8);
  std::vector<ImuReading> block = make_block(10, rng);
  DegradationSpec spec;
  spec.drop_count = 3;
  vio::Rng inj(33);
  auto out = vio::drop_imu(block, spec, inj);
  REQUIRE(out.size() == 10);
  // first reading always survives
  CHECK(out[0].accel == block[0].accel);
  int replaced = 0;
  for (std::size_t i = 1; i < 10; ++i)
    if (out[i].accel != block[i].accel) {
      ++replaced;
      // replaced reading equals its predecessor in the output (cascade)
      CHECK(out[i].accel == out[i - 1].accel);
      CHECK(out[i].gyro == out[i - 1].gyro);
    }
  CHECK(replaced == 3);

  CHECK_THROWS_AS(vio::drop_imu(block, [] {
                    DegradationSpec s;
                    s.drop_count = 10;
                    return s;
                  }(), inj),
                  vio::ConfigError);
}

TEST_CASE("image dropping repeats the first frame of affected windows") {
  vio::SynthConfig cfg;
  cfg.num_frames = 101;
  SequenceDataset ds = vio::synthesize(cfg, 9);
  DegradationSpec spec;
  spec.rate = 0.2;
  vio::Rng inj(5);
  SequenceDataset out = vio::drop_images(ds, spec, inj);
  int dropped = 0;
  for (std::size_t i = 0; i < out.windows.size(); ++i) {
    if (out.windows[i].frame_b == out.windows[i].frame_a)
      ++dropped;
    else
      CHECK(out.windows[i].frame_b == ds.windows[i].frame_b);
    // imu and targets are untouched
    CHECK(out.windows[i].target.translation == ds.windows[i].target.translation);
    REQUIRE(out.windows[i].imu.size() == ds.windows[i].imu.size());
  }
  // 100 windows at 20%: expect about 20, allow 6 sigma (±24)
  CHECK(dropped >= 1);
  CHECK(dropped <= 44);
  CHECK_THROWS_AS(vio::drop_images(ds, [] {
                    DegradationSpec s;
                    s.rate = 1.0;
                    return s;
                  }(), inj),
                  vio::ConfigError);
}

TEST_CASE("suites touch only their own modality") {
  vio::SynthConfig cfg;
  cfg.num_frames = 12;
  cfg.image_noise = 0.05;
  SequenceDataset ds = vio::synthesize(cfg, 10);

  SequenceDataset nominal = vio::build_degraded_suite(ds, "nominal", 77);
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    CHECK(testutil::tensors_equal(nominal.frames[i].pixels, ds.frames[i].pixels));
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    CHECK(nominal.windows[i].imu[0].accel == ds.windows[i].imu[0].accel);

  SequenceDataset vision = vio::build_degraded_suite(ds, "vision", 77);
  bool image_changed = false;
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    if (!testutil::tensors_equal(vision.frames[i].pixels, ds.frames[i].pixels))
      image_changed = true;
  CHECK(image_changed);
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    for (std::size_t j = 0; j < ds.windows[i].imu.size(); ++j) {
      CHECK(vision.windows[i].imu[j].accel == ds.windows[i].imu[j].accel);
      CHECK(vision.windows[i].imu[j].gyro == ds.windows[i].imu[j].gyro);
    }

  SequenceDataset inertial = vio::build_degraded_suite(ds, "inertial", 77);
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    CHECK(testutil::tensors_equal(inertial.frames[i].pixels, ds.frames[i].pixels));
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    CHECK(inertial.windows[i].frame_b == ds.windows[i].frame_b);
  bool imu_changed = false;
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    for (std::size_t j = 0; j < ds.windows[i].imu.size(); ++j)
      if (inertial.windows[i].imu[j].gyro != ds.windows[i].imu[j].gyro) imu_changed = true;
  CHECK(imu_changed);
}

TEST_CASE("combined suite equals vision and inertial applied independently") {
  vio::SynthConfig cfg;
  cfg.num_frames = 10;
  cfg.image_noise = 0.05;
  SequenceDataset ds = vio::synthesize(cfg, 11);

  SequenceDataset all = vio::build_degraded_suite(ds, "all", 55);
  SequenceDataset vision = vio::build_degraded_suite(ds, "vision", 55);
  SequenceDataset inertial = vio::build_degraded_suite(ds, "inertial", 55);

  // frames in `all` match the vision-only frames bit for bit
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    CHECK(testutil::tensors_equal(all.frames[i].pixels, vision.frames[i].pixels));
  // imu in `all` matches the inertial-only blocks bit for bit
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    for (std::size_t j = 0; j < ds.windows[i].imu.size(); ++j) {
      CHECK(all.windows[i].imu[j].accel == inertial.windows[i].imu[j].accel);
      CHECK(all.windows[i].imu[j].gyro == inertial.windows[i].imu[j].gyro);
    }
  // frame_b dropping matches the vision-only result
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    CHECK(all.windows[i].frame_b == vision.windows[i].frame_b);
}

TEST_CASE("suites are deterministic and reject unknown names") {
  vio::SynthConfig cfg;
  cfg.num_frames = 8;
  SequenceDataset ds = vio::synthesize(cfg, 12);
  SequenceDataset a = vio::build_degraded_suite(ds, "all", 5);
  SequenceDataset b = vio::build_degraded_suite(ds, "all", 5);
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    CHECK(testutil::tensors_equal(a.frames[i].pixels, b.frames[i].pixels));
  for (std::size_t i = 0; i < ds.windows.size(); ++i)
    for (std::size_t j = 0; j < ds.windows[i].imu.size(); ++j)
      CHECK(a.windows[i].imu[j].accel == b.windows[i].imu[j].accel);

  SequenceDataset c = vio::build_degraded_suite(ds, "all", 6);
  bool differs = false;
  for (std::size_t i = 0; i < ds.frames.size() && !differs; ++i)
    differs = !testutil::tensors_equal(a.frames[i].pixels, c.frames[i].pixels);
  CHECK(differs);

  CHECK_THROWS_AS(vio::build_degraded_suite(ds, "storm", 5), vio::ConfigError);
}

TEST_CASE("occlusion rejects masks larger than the image") {
  vio::Rng rng(13);
  ImageFrame f = make_frame(10, 10, rng);
  DegradationSpec spec;
  spec.mask_height = 11;
  spec.mask_width = 4;
  vio::Rng inj(1);
  CHECK_THROWS_AS(vio::occlude(f, spec, inj), vio::ConfigError);
}
