#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vio/errors.hpp"
#include "vio/geometry.hpp"
#include "vio/image_io.hpp"
#include "vio/rng.hpp"
#include "vio/tensor.hpp"

namespace vio {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct ImageFrame {
  double timestamp = 0.0;            // seconds
  Tensor pixels;                     // (channels, height, width), values in [-0.5, 0.5]
};

struct ImuReading {
  double timestamp = 0.0;            // seconds
  std::array<double, 3> accel{0, 0, 0};  // m/s^2
  std::array<double, 3> gyro{0, 0, 0};   // rad/s

  std::array<double, 6> as_vector() const {
    return {accel[0], accel[1], accel[2], gyro[0], gyro[1], gyro[2]};
  }
};

// One training sample: a consecutive image pair (stored as frame indices into
// the owning dataset so repeated frames share pixels), the synchronized IMU
// block between them, and the ground-truth relative pose.
struct SampleWindow {
  int frame_a = 0;
  int frame_b = 0;
  std::vector<ImuReading> imu;
  Pose6D target;
};

struct DatasetConfig {
  int image_channels = 1;
  int image_height = 184;
  int image_width = 608;
  int imu_per_frame = 10;
  double frame_rate_hz = 10.0;
};

struct SequenceDataset {
  DatasetConfig config;
  std::vector<ImageFrame> frames;
  std::vector<SampleWindow> windows;
  std::vector<RigidTransform> absolute;  // one per frame
  std::vector<std::string> warnings;

  const ImageFrame& frame_a(const SampleWindow& w) const {
    return frames[static_cast<std::size_t>(w.frame_a)];
  }
  const ImageFrame& frame_b(const SampleWindow& w) const {
    return frames[static_cast<std::size_t>(w.frame_b)];
  }
  const ImageFrame& frame_a(int window) const { return frame_a(windows[static_cast<std::size_t>(window)]); }
  const ImageFrame& frame_b(int window) const { return frame_b(windows[static_cast<std::size_t>(window)]); }
};

// Contiguous run of windows used as one training sub-trajectory.
struct Segment {
  int start = 0;
  int length = 0;
};

inline double path_length(const std::vector<RigidTransform>& absolute) {
  double d = 0.0;
  for (std::size_t i = 1; i < absolute.size(); ++i) {
    double dx = absolute[i].t[0] - absolute[i - 1].t[0];
    double dy = absolute[i].t[1] - absolute[i - 1].t[1];
    double dz = absolute[i].t[2] - absolute[i - 1].t[2];
    d += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return d;
}

// (imu_per_frame, 1, 6) sequence tensor for the inertial encoder.
inline Tensor imu_block_tensor(const SampleWindow& w) {
  int m = static_cast<int>(w.imu.size());
  Tensor t = Tensor::zeros({m, 1, 6});
  for (int i = 0; i < m; ++i) {
    auto v = w.imu[static_cast<std::size_t>(i)].as_vector();
    for (int j = 0; j < 6; ++j) t.data()[i * 6 + j] = v[static_cast<std::size_t>(j)];
  }
  return t;
}

// (length, 6) target tensor over a segment, rows [tx, ty, tz, yaw, pitch, roll].
inline Tensor target_tensor(const SequenceDataset& ds, const Segment& seg) {
  Tensor t = Tensor::zeros({seg.length, 6});
  for (int i = 0; i < seg.length; ++i) {
    const Pose6D& p = ds.windows[static_cast<std::size_t>(seg.start + i)].target;
    for (int j = 0; j < 3; ++j) {
      t.data()[i * 6 + j] = p.translation[static_cast<std::size_t>(j)];
      t.data()[i * 6 + 3 + j] = p.angles[static_cast<std::size_t>(j)];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Pose file: one line per frame, 12 whitespace-separated floats forming the
// row-major 3x4 [R|t] block of the absolute camera-to-world transform.
inline void write_poses(const std::string& path, const std::vector<RigidTransform>& poses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose file: " + path);
  for (const RigidTransform& p : poses) {
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) {
        out << detail::fmt_double(p.r[static_cast<std::size_t>(3 * row + col)]) << ' ';
      }
      out << detail::fmt_double(p.t[static_cast<std::size_t>(row)]);
      out << (row == 2 ? '\n' : ' ');
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<RigidTransform> read_poses(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose file: " + path);
  std::vector<RigidTransform> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::array<double, 12> v{};
    for (int i = 0; i < 12; ++i)
      if (!(is >> v[static_cast<std::size_t>(i)]))
        throw FormatError(path + ":" + std::to_string(line_no) + ": expected 12 floats per pose line");
    std::string extra;
    if (is >> extra)
      throw FormatError(path + ":" + std::to_string(line_no) + ": trailing tokens after 12 floats");
    RigidTransform p;
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) p.r[static_cast<std::size_t>(3 * row + col)] = v[static_cast<std::size_t>(4 * row + col)];
      p.t[static_cast<std::size_t>(row)] = v[static_cast<std::size_t>(4 * row + 3)];
    }
    validate_rotation(p.r, path + ":" + std::to_string(line_no));
    poses.push_back(p);
  }
  return poses;
}

inline constexpr const char* kImuCsvHeader = "timestamp,ax,ay,az,wx,wy,wz";

inline void write_imu_csv(const std::string& path, const std::vector<ImuReading>& readings) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write imu file: " + path);
  out << kImuCsvHeader << '\n';
  for (const ImuReading& r : readings) {
    out << detail::fmt_double(r.timestamp);
    for (int i = 0; i < 3; ++i) out << ',' << detail::fmt_double(r.accel[static_cast<std::size_t>(i)]);
    for (int i = 0; i < 3; ++i) out << ',' << detail::fmt_double(r.gyro[static_cast<std::size_t>(i)]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<ImuReading> read_imu_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open imu file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty imu file");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != kImuCsvHeader)
    throw FormatError(path + ": expected header '" + std::string(kImuCsvHeader) + "', got '" + line + "'");
  std::vector<ImuReading> readings;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::array<double, 7> v{};
    const char* p = line.c_str();
    for (int i = 0; i < 7; ++i) {
      char* end = nullptr;
      v[static_cast<std::size_t>(i)] = std::strtod(p, &end);
      if (end == p)
        throw FormatError(path + ":" + std::to_string(line_no) + ": expected 7 numeric fields");
      p = end;
      if (i < 6) {
        while (*p == ' ') ++p;
        if (*p != ',')
          throw FormatError(path + ":" + std::to_string(line_no) + ": expected 7 comma-separated fields");
        ++p;
      }
    }
    for (double c : v)
      if (!std::isfinite(c))
        throw FormatError(path + ":" + std::to_string(line_no) + ": non-finite imu component");
    ImuReading r;
    r.timestamp = v[0];
    r.accel = {v[1], v[2], v[3]};
    r.gyro = {v[4], v[5], v[6]};
    if (!readings.empty() && r.timestamp < readings.back().timestamp)
      throw FormatError(path + ":" + std::to_string(line_no) + ": timestamps not ordered");
    readings.push_back(r);
  }
  return readings;
}

// ---------------------------------------------------------------------------
// Synchronization
// ---------------------------------------------------------------------------

namespace detail {

// Picks imu_per_frame readings for the interval [t_a, t_b]: candidates are the
// readings inside the interval, and each of the equally spaced slot times
// t_a + j*(t_b-t_a)/m is matched to its nearest candidate (ties to the earlier
// reading). An interval with fewer candidates than slots is padded by these
// nearest-repeats; an empty interval repeats `fallback` and both cases record
// a warning.
inline std::vector<ImuReading> select_window_imu(const std::vector<ImuReading>& readings,
                                                double t_a, double t_b, int m, int window_index,
                                                const ImuReading* fallback,
                                                std::vector<std::string>& warnings) {
  auto lo = std::lower_bound(readings.begin(), readings.end(), t_a,
                             [](const ImuReading& r, double t) { return r.timestamp < t; });
  auto hi = std::upper_bound(readings.begin(), readings.end(), t_b,
                             [](double t, const ImuReading& r) { return t < r.timestamp; });
  std::vector<ImuReading> out;
  out.reserve(static_cast<std::size_t>(m));
  long count = hi - lo;
  if (count == 0) {
    ImuReading pad = fallback ? *fallback : ImuReading{t_a, {0, 0, 0}, {0, 0, 0}};
    warnings.push_back("window " + std::to_string(window_index) +
                       ": no imu readings in image interval; repeating last reading");
    out.assign(static_cast<std::size_t>(m), pad);
    return out;
  }
  if (count < m)
    warnings.push_back("window " + std::to_string(window_index) + ": only " +
                       std::to_string(count) + " imu readings for " + std::to_string(m) +
                       " slots; padding by repetition");
  double span = t_b - t_a;
  for (int j = 0; j < m; ++j) {
    double slot = t_a + span * j / m;
    const ImuReading* best = &*lo;
    double best_d = std::abs(best->timestamp - slot);
    for (auto it = lo; it != hi; ++it) {
      double d = std::abs(it->timestamp - slot);
      if (d < best_d) {
        best = &*it;
        best_d = d;
      }
    }
    out.push_back(*best);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::filesystem::path> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("image directory missing: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline SequenceDataset assemble(std::vector<ImageFrame> frames,
                                std::vector<RigidTransform> poses,
                                const std::vector<ImuReading>& readings,
                                const DatasetConfig& cfg) {
  SequenceDataset ds;
  ds.config = cfg;
  ds.frames = std::move(frames);
  ds.absolute = std::move(poses);
  int n = static_cast<int>(ds.frames.size());
  ImuReading last_reading;
  bool have_last = false;
  for (int i = 0; i + 1 < n; ++i) {
    SampleWindow w;
    w.frame_a = i;
    w.frame_b = i + 1;
    w.imu = select_window_imu(readings, ds.frames[static_cast<std::size_t>(i)].timestamp,
                              ds.frames[static_cast<std::size_t>(i + 1)].timestamp,
                              cfg.imu_per_frame, i, have_last ? &last_reading : nullptr,
                              ds.warnings);
    last_reading = w.imu.back();
    have_last = true;
    bool gimbal = false;
    w.target = absolute_to_relative(ds.absolute[static_cast<std::size_t>(i)],
                                    ds.absolute[static_cast<std::size_t>(i + 1)], &gimbal);
    if (gimbal)
      ds.warnings.push_back("window " + std::to_string(i) +
                            ": pitch at gimbal lock; roll fixed to 0");
    ds.windows.push_back(std::move(w));
  }
  return ds;
}

}  // namespace detail

// Ingests a raw sequence: a directory of zero-padded PNG frames, an IMU CSV,
// and a pose file with one absolute transform per frame. Frame timestamps are
// index / frame_rate_hz. Leaving any image dimension non-positive adopts the
// first frame's dimensions; explicit dimensions are enforced on every frame.
inline SequenceDataset load_sequence(const std::string& image_dir, const std::string& imu_file,
                                     const std::string& pose_file, const DatasetConfig& cfg) {
  auto files = detail::list_images(image_dir);
  std::vector<RigidTransform> poses = read_poses(pose_file);
  if (files.size() != poses.size())
    throw FormatError("frame count mismatch: " + std::to_string(files.size()) + " images vs " +
                      std::to_string(poses.size()) + " pose lines");
  if (files.size() < 2) throw FormatError("sequence needs at least 2 frames");
  std::vector<ImuReading> readings = read_imu_csv(imu_file);

  DatasetConfig resolved = cfg;
  std::vector<ImageFrame> frames;
  frames.reserve(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    ImageFrame f;
    f.timestamp = static_cast<double>(i) / resolved.frame_rate_hz;
    f.pixels = read_png(files[i].string());
    if (i == 0 && (resolved.image_channels < 1 || resolved.image_height < 1 ||
                   resolved.image_width < 1)) {
      resolved.image_channels = f.pixels.dim(0);
      resolved.image_height = f.pixels.dim(1);
      resolved.image_width = f.pixels.dim(2);
    }
    if (f.pixels.dim(0) != resolved.image_channels || f.pixels.dim(1) != resolved.image_height ||
        f.pixels.dim(2) != resolved.image_width)
      throw FormatError(files[i].string() + ": image is " + shape_str(f.pixels.shape()) +
                        ", config expects (" + std::to_string(resolved.image_channels) + ", " +
                        std::to_string(resolved.image_height) + ", " +
                        std::to_string(resolved.image_width) + ")");
    frames.push_back(std::move(f));
  }
  return detail::assemble(std::move(frames), std::move(poses), readings, resolved);
}

// ---------------------------------------------------------------------------
// Dataset directory layout
// ---------------------------------------------------------------------------
//
//   <dir>/manifest.json    format marker, config, window->frame mapping
//   <dir>/poses.txt        absolute ground truth
//   <dir>/imu.csv          synchronized per-window blocks, concatenated
//   <dir>/images/%06d.png  one file per frame

inline constexpr const char* kDatasetFormat = "vio-dataset";
inline constexpr int kDatasetVersion = 1;

inline void save_dataset(const std::string& dir, const SequenceDataset& ds,
                         const nlohmann::json& provenance = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  write_poses((fs::path(dir) / "poses.txt").string(), ds.absolute);

  std::vector<ImuReading> flat;
  for (const SampleWindow& w : ds.windows) flat.insert(flat.end(), w.imu.begin(), w.imu.end());
  write_imu_csv((fs::path(dir) / "imu.csv").string(), flat);

  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    write_png((fs::path(dir) / "images" / name).string(), ds.frames[i].pixels);
  }

  nlohmann::json m;
  m["format"] = kDatasetFormat;
  m["version"] = kDatasetVersion;
  m["image"] = {{"channels", ds.config.image_channels},
                {"height", ds.config.image_height},
                {"width", ds.config.image_width}};
  m["imu_per_frame"] = ds.config.imu_per_frame;
  m["frame_rate_hz"] = ds.config.frame_rate_hz;
  m["frames"] = ds.frames.size();
  nlohmann::json wins = nlohmann::json::array();
  for (const SampleWindow& w : ds.windows) wins.push_back({w.frame_a, w.frame_b});
  m["windows"] = std::move(wins);
  if (!provenance.is_null() && !provenance.empty()) m["provenance"] = provenance;
  std::ofstream out((fs::path(dir) / "manifest.json").string());
  if (!out) throw IoError("cannot write manifest in " + dir);
  out << m.dump(2) << '\n';
  if (!out) throw IoError("write failed: manifest in " + dir);
}

inline nlohmann::json read_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in((fs::path(dir) / "manifest.json").string());
  if (!in) throw IoError("manifest.json missing in " + dir);
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir + "/manifest.json is not valid JSON: " + std::string(e.what()));
  }
  if (m.value("format", "") != kDatasetFormat)
    throw FormatError(dir + "/manifest.json has wrong format marker");
  if (m.value("version", 0) != kDatasetVersion)
    throw FormatError(dir + "/manifest.json has unsupported version");
  return m;
}

// Loads a dataset directory written by save_dataset. The manifest supplies the
// config and the window->frame mapping (which encodes repeated frames).
inline SequenceDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  nlohmann::json m = read_manifest(dir);
  DatasetConfig cfg;
  cfg.image_channels = m["image"]["channels"].get<int>();
  cfg.image_height = m["image"]["height"].get<int>();
  cfg.image_width = m["image"]["width"].get<int>();
  cfg.imu_per_frame = m["imu_per_frame"].get<int>();
  cfg.frame_rate_hz = m["frame_rate_hz"].get<double>();

  SequenceDataset ds = load_sequence((fs::path(dir) / "images").string(),
                                     (fs::path(dir) / "imu.csv").string(),
                                     (fs::path(dir) / "poses.txt").string(), cfg);
  if (m.contains("windows")) {
    const auto& wins = m["windows"];
    if (wins.size() != ds.windows.size())
      throw FormatError(dir + ": manifest lists " + std::to_string(wins.size()) +
                        " windows, data yields " + std::to_string(ds.windows.size()));
    for (std::size_t i = 0; i < ds.windows.size(); ++i) {
      int a = wins[i][0].get<int>(), b = wins[i][1].get<int>();
      if (a < 0 || b < 0 || a >= static_cast<int>(ds.frames.size()) ||
          b >= static_cast<int>(ds.frames.size()))
        throw FormatError(dir + ": manifest window " + std::to_string(i) +
                          " references a frame out of range");
      ds.windows[i].frame_a = a;
      ds.windows[i].frame_b = b;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

// Splits [0, windows) into consecutive segments with lengths drawn uniformly
// from [min_len, max_len]. A tail shorter than a draw becomes its own segment
// when it still reaches min_len; otherwise the final segment is the last
// min_len windows, overlapping its predecessor so every window is covered.
inline std::vector<Segment> segment(const SequenceDataset& ds, int min_len, int max_len,
                                    std::uint64_t seed,
                                    std::vector<std::string>* warnings = nullptr) {
  if (min_len < 2 || min_len > max_len)
    throw ConfigError("segment: need 2 <= min_len <= max_len, got [" + std::to_string(min_len) +
                      ", " + std::to_string(max_len) + "]");
  int n = static_cast<int>(ds.windows.size());
  std::vector<Segment> segs;
  if (n < min_len) {
    if (warnings)
      warnings->push_back("segment: dataset has " + std::to_string(n) +
                          " windows, fewer than min_len " + std::to_string(min_len));
    return segs;
  }
  Rng rng(derive_seed(seed, 0x5e61));
  int pos = 0;
  while (pos < n) {
    int remaining = n - pos;
    if (remaining < min_len) {
      segs.push_back({n - min_len, min_len});
      break;
    }
    int len = static_cast<int>(rng.uniform_int(min_len, max_len));
    if (len > remaining) len = remaining;
    segs.push_back({pos, len});
    pos += len;
  }
  return segs;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::string path_shape = "line";  // line | arc | figure8
  int num_frames = 33;
  double speed = 1.0;          // m/s along the path
  double turn_radius = 20.0;   // arc radius, m
  double figure_scale = 20.0;  // figure-eight lobe scale, m
  double imu_noise_std = 0.0;  // added to all 6 imu components
  double image_noise = 0.0;    // amplitude of seeded pixel noise
  int image_channels = 1;
  int image_height = 16;
  int image_width = 32;
  int imu_per_frame = 10;
  double frame_rate_hz = 10.0;
};

namespace detail {

struct PathPoint {
  double x = 0, y = 0;      // position
  double vx = 0, vy = 0;    // first derivative
  double ax = 0, ay = 0;    // second derivative
};

// Planar scripted paths with analytic derivatives. Heading follows the
// velocity: yaw = atan2(vy, vx), turn rate = (vx*ay - vy*ax) / speed^2.
inline PathPoint eval_path(const SynthConfig& cfg, double t) {
  PathPoint p;
  if (cfg.path_shape == "line") {
    p.x = cfg.speed * t;
    p.vx = cfg.speed;
  } else if (cfg.path_shape == "arc") {
    double w = cfg.speed / cfg.turn_radius;
    p.x = cfg.turn_radius * std::sin(w * t);
    p.y = cfg.turn_radius * (1.0 - std::cos(w * t));
    p.vx = cfg.speed * std::cos(w * t);
    p.vy = cfg.speed * std::sin(w * t);
    p.ax = -cfg.speed * w * std::sin(w * t);
    p.ay = cfg.speed * w * std::cos(w * t);
  } else if (cfg.path_shape == "figure8") {
    double s = cfg.figure_scale;
    double w = cfg.speed / s;
    double u = w * t;
    p.x = s * std::sin(u);
    p.y = 0.5 * s * std::sin(2.0 * u);
    p.vx = s * w * std::cos(u);
    p.vy = s * w * std::cos(2.0 * u);
    p.ax = -s * w * w * std::sin(u);
    p.ay = -2.0 * s * w * w * std::sin(2.0 * u);
  } else {
    throw ConfigError("synthesize: unknown path shape '" + cfg.path_shape + "'");
  }
  return p;
}

inline double path_yaw(const PathPoint& p) {
  if (p.vx == 0.0 && p.vy == 0.0) return 0.0;
  return std::atan2(p.vy, p.vx);
}

inline double path_turn_rate(const PathPoint& p) {
  double v2 = p.vx * p.vx + p.vy * p.vy;
  if (v2 == 0.0) return 0.0;
  return (p.vx * p.ay - p.vy * p.ax) / v2;
}

// Deterministic moving sinusoid pattern driven by the camera pose, so that
// consecutive frames differ consistently with the motion.
inline Tensor render_frame(const SynthConfig& cfg, double px, double py, double yaw, Rng& rng) {
  Tensor img = Tensor::zeros({cfg.image_channels, cfg.image_height, cfg.image_width});
  for (int c = 0; c < cfg.image_channels; ++c)
    for (int y = 0; y < cfg.image_height; ++y)
      for (int x = 0; x < cfg.image_width; ++x) {
        double phase = 0.8 * px + 1.3 * py + 2.1 * yaw + 0.7 * c;
        double v = 0.45 * std::sin(0.37 * x + 0.53 * y + phase) *
                   std::cos(0.21 * x - 0.29 * y + 0.5 * phase);
        if (cfg.image_noise > 0.0) v += rng.uniform(-cfg.image_noise, cfg.image_noise);
        if (v > 0.5) v = 0.5;
        if (v < -0.5) v = -0.5;
        // Snap to the PNG byte grid so a saved-then-reloaded dataset carries
        // bitwise-identical pixel values.
        v = byte_to_pixel(pixel_to_byte(v));
        img.data()[(static_cast<std::size_t>(c) * cfg.image_height + y) * cfg.image_width + x] = v;
      }
  return img;
}

}  // namespace detail

// Generates a deterministic dataset from a scripted planar path. Ground truth
// is exact; IMU readings come from the path's analytic derivatives expressed
// in the body frame (angular velocity (0, 0, turn rate), specific force
// R(yaw)ᵀ·(ax, ay, 0), no gravity term), plus optional seeded noise.
inline SequenceDataset synthesize(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.num_frames < 2) throw ConfigError("synthesize: need at least 2 frames");
  if (cfg.imu_per_frame < 1) throw ConfigError("synthesize: imu_per_frame must be >= 1");
  if (cfg.frame_rate_hz <= 0) throw ConfigError("synthesize: frame_rate_hz must be positive");

  Rng img_rng(derive_seed(seed, 0x1a6e));
  Rng imu_rng(derive_seed(seed, 0x12b0));

  std::vector<ImageFrame> frames;
  std::vector<RigidTransform> poses;
  double dt = 1.0 / cfg.frame_rate_hz;
  for (int i = 0; i < cfg.num_frames; ++i) {
    double t = i * dt;
    detail::PathPoint p = detail::eval_path(cfg, t);
    double yaw = detail::path_yaw(p);
    RigidTransform pose;
    pose.r = rotation_from_euler(yaw, 0.0, 0.0);
    pose.t = {p.x, p.y, 0.0};
    poses.push_back(pose);
    ImageFrame f;
    f.timestamp = t;
    f.pixels = detail::render_frame(cfg, p.x, p.y, yaw, img_rng);
    frames.push_back(std::move(f));
  }

  std::vector<ImuReading> readings;
  int m = cfg.imu_per_frame;
  for (int i = 0; i + 1 < cfg.num_frames; ++i)
    for (int j = 0; j < m; ++j) {
      double t = i * dt + dt * j / m;
      detail::PathPoint p = detail::eval_path(cfg, t);
      double yaw = detail::path_yaw(p);
      double cy = std::cos(yaw), sy = std::sin(yaw);
      ImuReading r;
      r.timestamp = t;
      r.accel = {cy * p.ax + sy * p.ay, -sy * p.ax + cy * p.ay, 0.0};
      r.gyro = {0.0, 0.0, detail::path_turn_rate(p)};
      if (cfg.imu_noise_std > 0.0) {
        for (int k = 0; k < 3; ++k) r.accel[static_cast<std::size_t>(k)] += imu_rng.normal(0.0, cfg.imu_noise_std);
        for (int k = 0; k < 3; ++k) r.gyro[static_cast<std::size_t>(k)] += imu_rng.normal(0.0, cfg.imu_noise_std);
      }
      readings.push_back(r);
    }

  DatasetConfig dcfg;
  dcfg.image_channels = cfg.image_channels;
  dcfg.image_height = cfg.image_height;
  dcfg.image_width = cfg.image_width;
  dcfg.imu_per_frame = cfg.imu_per_frame;
  dcfg.frame_rate_hz = cfg.frame_rate_hz;
  return detail::assemble(std::move(frames), std::move(poses), readings, dcfg);
}

}  // namespace vio
