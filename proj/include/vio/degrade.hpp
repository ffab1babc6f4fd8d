#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "vio/dataset.hpp"
#include "vio/rng.hpp"

namespace vio {

// Parameters for one corruption protocol. `rate` is the fraction of affected
// items when the spec is applied across a dataset (frames for image
// corruptions, windows for the others); the remaining fields are
// kind-specific.
struct DegradationSpec {
  std::string kind;  // occlusion | noise_blur | missing_image | imu_noise_bias | missing_imu
  double rate = 1.0;

  // occlusion
  int mask_height = 200;
  int mask_width = 200;
  double mask_value = 0.0;

  // noise_blur
  double sp_fraction = 0.05;  // salt-and-pepper pixel fraction
  double blur_sigma = 1.0;

  // imu_noise_bias
  double accel_noise_std = 0.3;                       // m/s^2
  std::array<double, 3> gyro_bias{0.05, 0.05, 0.05};  // rad/s

  // missing_imu
  int drop_count = 3;
};

// ---------------------------------------------------------------------------
// Per-item injectors
// ---------------------------------------------------------------------------

// Overwrites a mask_height x mask_width block at a seeded uniform location
// with mask_value across all channels. Every other pixel is bit-identical.
inline ImageFrame occlude(const ImageFrame& frame, const DegradationSpec& spec, Rng& rng) {
  int h = frame.pixels.dim(1), w = frame.pixels.dim(2), c = frame.pixels.dim(0);
  if (spec.mask_height > h || spec.mask_width > w)
    throw ConfigError("occlude: mask " + std::to_string(spec.mask_height) + "x" +
                      std::to_string(spec.mask_width) + " exceeds image " + std::to_string(h) +
                      "x" + std::to_string(w));
  ImageFrame out;
  out.timestamp = frame.timestamp;
  out.pixels = frame.pixels.detach();
  if (spec.mask_height <= 0 || spec.mask_width <= 0) return out;
  int y0 = static_cast<int>(rng.uniform_int(0, h - spec.mask_height));
  int x0 = static_cast<int>(rng.uniform_int(0, w - spec.mask_width));
  for (int ch = 0; ch < c; ++ch)
    for (int y = y0; y < y0 + spec.mask_height; ++y)
      for (int x = x0; x < x0 + spec.mask_width; ++x)
        out.pixels.data()[(static_cast<std::size_t>(ch) * h + y) * w + x] = spec.mask_value;
  return out;
}

namespace detail {

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

inline void gaussian_blur_inplace(Tensor& img, double sigma) {
  if (sigma <= 0.0) return;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    double v = std::exp(-0.5 * j * j / (sigma * sigma));
    kernel[static_cast<std::size_t>(j + radius)] = v;
    sum += v;
  }
  for (double& v : kernel) v /= sum;

  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    double* plane = img.data() + static_cast<std::size_t>(ch) * h * w;
    // horizontal
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int j = -radius; j <= radius; ++j)
          s += kernel[static_cast<std::size_t>(j + radius)] * plane[y * w + reflect_index(x + j, w)];
        tmp[static_cast<std::size_t>(y) * w + x] = s;
      }
    // vertical
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int j = -radius; j <= radius; ++j)
          s += kernel[static_cast<std::size_t>(j + radius)] * tmp[static_cast<std::size_t>(reflect_index(y + j, h)) * w + x];
        plane[y * w + x] = s;
      }
  }
}

}  // namespace detail

// Salt-and-pepper replacement at sp_fraction (each corrupted pixel goes to
// +0.5 or -0.5 with equal probability), followed by a separable Gaussian blur
// truncated at 3 sigma with reflected borders. Zero fraction and zero sigma
// make this the identity.
inline ImageFrame noise_and_blur(const ImageFrame& frame, const DegradationSpec& spec, Rng& rng) {
  if (spec.sp_fraction < 0.0 || spec.sp_fraction > 1.0)
    throw ConfigError("noise_and_blur: sp_fraction must be in [0,1]");
  if (spec.blur_sigma < 0.0) throw ConfigError("noise_and_blur: blur_sigma must be >= 0");
  ImageFrame out;
  out.timestamp = frame.timestamp;
  out.pixels = frame.pixels.detach();
  if (spec.sp_fraction > 0.0) {
    for (int i = 0; i < out.pixels.size(); ++i)
      if (rng.bernoulli(spec.sp_fraction))
        out.pixels.data()[i] = rng.bernoulli(0.5) ? 0.5 : -0.5;
  }
  detail::gaussian_blur_inplace(out.pixels, spec.blur_sigma);
  return out;
}

// Replaces the second frame of affected windows with the first: the repeated
// frame stands in for a dropped image. IMU blocks and targets are untouched.
inline SequenceDataset drop_images(const SequenceDataset& ds, const DegradationSpec& spec,
                                   Rng& rng) {
  if (spec.rate < 0.0 || spec.rate >= 1.0)
    throw ConfigError("drop_images: rate must be in [0,1)");
  SequenceDataset out = ds;
  for (SampleWindow& w : out.windows)
    if (spec.rate > 0.0 && rng.bernoulli(spec.rate)) w.frame_b = w.frame_a;
  return out;
}

// Adds seeded zero-mean Gaussian noise to the accelerometer channels and a
// constant bias vector to the gyroscope channels.
inline std::vector<ImuReading> imu_noise_bias(const std::vector<ImuReading>& block,
                                              const DegradationSpec& spec, Rng& rng) {
  if (spec.accel_noise_std < 0.0) throw ConfigError("imu_noise_bias: noise std must be >= 0");
  std::vector<ImuReading> out = block;
  for (ImuReading& r : out) {
    if (spec.accel_noise_std > 0.0)
      for (int k = 0; k < 3; ++k) r.accel[static_cast<std::size_t>(k)] += rng.normal(0.0, spec.accel_noise_std);
    for (int k = 0; k < 3; ++k) r.gyro[static_cast<std::size_t>(k)] += spec.gyro_bias[static_cast<std::size_t>(k)];
  }
  return out;
}

// Replaces drop_count seeded distinct readings (never the first) with their
// predecessor, preserving block length. Consecutive drops cascade, repeating
// the last intact reading.
inline std::vector<ImuReading> drop_imu(const std::vector<ImuReading>& block,
                                        const DegradationSpec& spec, Rng& rng) {
  int m = static_cast<int>(block.size());
  if (spec.drop_count < 0 || spec.drop_count >= m)
    throw ConfigError("drop_imu: drop count " + std::to_string(spec.drop_count) +
                      " must be in [0, block length " + std::to_string(m) + ")");
  std::vector<ImuReading> out = block;
  if (spec.drop_count == 0) return out;
  std::vector<int> idx(static_cast<std::size_t>(m - 1));
  std::iota(idx.begin(), idx.end(), 1);
  for (int i = 0; i < spec.drop_count; ++i) {
    int j = i + static_cast<int>(rng.uniform_int(0, m - 2 - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::vector<int> drops(idx.begin(), idx.begin() + spec.drop_count);
  std::sort(drops.begin(), drops.end());
  for (int d : drops) out[static_cast<std::size_t>(d)] = out[static_cast<std::size_t>(d) - 1];
  return out;
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

// Default suite intensities. The sensor-failure protocols are qualitative in
// origin; these numbers are this repo's documented constants.
struct SuiteDefaults {
  double occlusion_rate = 0.5;       // fraction of frames occluded
  double noise_blur_rate = 0.5;      // fraction of frames with noise+blur
  double sp_fraction = 0.05;
  double blur_sigma = 1.0;
  double missing_image_rate = 0.2;   // fraction of windows with repeated frame
  double imu_noise_rate = 0.5;       // fraction of windows with noisy/biased imu
  double accel_noise_std = 0.3;      // m/s^2
  double gyro_bias = 0.05;           // rad/s, per axis
  double missing_imu_rate = 0.3;     // fraction of windows with dropped readings
  int imu_drop_count = 3;            // capped at block length - 1
};

namespace detail {

// Seed stream tags, one per injector, so vision and inertial corruption draw
// from independent streams and commute.
inline constexpr std::uint64_t kSeedOcclusion = 0xd10c;
inline constexpr std::uint64_t kSeedNoiseBlur = 0xd20c;
inline constexpr std::uint64_t kSeedMissingImage = 0xd30c;
inline constexpr std::uint64_t kSeedImuNoise = 0xd40c;
inline constexpr std::uint64_t kSeedMissingImu = 0xd50c;

inline void apply_vision_suite(SequenceDataset& ds, const SuiteDefaults& d, std::uint64_t seed) {
  int h = ds.config.image_height, w = ds.config.image_width;
  int mask = std::min(h, w) / 2;

  DegradationSpec occ;
  occ.kind = "occlusion";
  occ.rate = d.occlusion_rate;
  occ.mask_height = mask;
  occ.mask_width = mask;
  Rng occ_rng(derive_seed(seed, kSeedOcclusion));
  for (ImageFrame& f : ds.frames)
    if (occ_rng.bernoulli(occ.rate)) f = occlude(f, occ, occ_rng);

  DegradationSpec nb;
  nb.kind = "noise_blur";
  nb.rate = d.noise_blur_rate;
  nb.sp_fraction = d.sp_fraction;
  nb.blur_sigma = d.blur_sigma;
  Rng nb_rng(derive_seed(seed, kSeedNoiseBlur));
  for (ImageFrame& f : ds.frames)
    if (nb_rng.bernoulli(nb.rate)) f = noise_and_blur(f, nb, nb_rng);

  DegradationSpec mi;
  mi.kind = "missing_image";
  mi.rate = d.missing_image_rate;
  Rng mi_rng(derive_seed(seed, kSeedMissingImage));
  ds = drop_images(ds, mi, mi_rng);
}

inline void apply_inertial_suite(SequenceDataset& ds, const SuiteDefaults& d, std::uint64_t seed) {
  DegradationSpec nb;
  nb.kind = "imu_noise_bias";
  nb.rate = d.imu_noise_rate;
  nb.accel_noise_std = d.accel_noise_std;
  nb.gyro_bias = {d.gyro_bias, d.gyro_bias, d.gyro_bias};
  Rng nb_rng(derive_seed(seed, kSeedImuNoise));
  for (SampleWindow& w : ds.windows)
    if (nb_rng.bernoulli(nb.rate)) w.imu = imu_noise_bias(w.imu, nb, nb_rng);

  DegradationSpec di;
  di.kind = "missing_imu";
  di.rate = d.missing_imu_rate;
  Rng di_rng(derive_seed(seed, kSeedMissingImu));
  for (SampleWindow& w : ds.windows) {
    di.drop_count = std::min(d.imu_drop_count, static_cast<int>(w.imu.size()) - 1);
    if (di_rng.bernoulli(di.rate)) w.imu = drop_imu(w.imu, di, di_rng);
  }
}

}  // namespace detail

// Applies a named corruption bundle: `nominal` (identity), `inertial` (IMU
// noise/bias + dropped readings), `vision` (occlusion + noise/blur + repeated
// frames), or `all` (both). Deterministic under (suite, seed); the vision and
// inertial streams use independent derived seeds, so `all` equals either
// composition order.
inline SequenceDataset build_degraded_suite(const SequenceDataset& ds, const std::string& suite,
                                            std::uint64_t seed,
                                            const SuiteDefaults& defaults = SuiteDefaults{}) {
  SequenceDataset out = ds;
  if (suite == "nominal") return out;
  if (suite == "vision") {
    detail::apply_vision_suite(out, defaults, seed);
    return out;
  }
  if (suite == "inertial") {
    detail::apply_inertial_suite(out, defaults, seed);
    return out;
  }
  if (suite == "all") {
    detail::apply_vision_suite(out, defaults, seed);
    detail::apply_inertial_suite(out, defaults, seed);
    return out;
  }
  throw ConfigError("unknown degradation suite '" + suite +
                    "' (expected nominal, inertial, vision, or all)");
}

}  // namespace vio
