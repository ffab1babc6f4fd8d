#pragma once

#include <array>
#include <cmath>
#include <string>

#include "vio/errors.hpp"

namespace vio {

inline constexpr double kPi = 3.14159265358979323846;

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

// Relative camera pose: translation in meters plus Z-Y-X (yaw, pitch, roll)
// Euler angles in radians, each wrapped to (-pi, pi].
struct Pose6D {
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  std::array<double, 3> angles{0.0, 0.0, 0.0};  // yaw, pitch, roll

  double yaw() const { return angles[0]; }
  double pitch() const { return angles[1]; }
  double roll() const { return angles[2]; }
};

// Rigid transform with row-major 3x3 rotation block.
struct RigidTransform {
  std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> t{0, 0, 0};

  static RigidTransform identity() { return RigidTransform{}; }
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a.r[static_cast<std::size_t>(3 * i + k)] * b.r[static_cast<std::size_t>(3 * k + j)];
      out.r[static_cast<std::size_t>(3 * i + j)] = s;
    }
  for (int i = 0; i < 3; ++i) {
    // Accumulate the rotated translation before adding a's offset so that
    // compose(inverse(x), x) cancels exactly: the sum matches the one formed
    // inside inverse() term for term, making the identity bitwise zero.
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += a.r[static_cast<std::size_t>(3 * i + k)] * b.t[static_cast<std::size_t>(k)];
    out.t[static_cast<std::size_t>(i)] = s + a.t[static_cast<std::size_t>(i)];
  }
  return out;
}

inline RigidTransform inverse(const RigidTransform& a) {
  RigidTransform out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.r[static_cast<std::size_t>(3 * i + j)] = a.r[static_cast<std::size_t>(3 * j + i)];
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s -= out.r[static_cast<std::size_t>(3 * i + k)] * a.t[static_cast<std::size_t>(k)];
    out.t[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

// R = Rz(yaw) * Ry(pitch) * Rx(roll).
inline std::array<double, 9> rotation_from_euler(double yaw, double pitch, double roll) {
  double cy = std::cos(yaw), sy = std::sin(yaw);
  double cp = std::cos(pitch), sp = std::sin(pitch);
  double cr = std::cos(roll), sr = std::sin(roll);
  return {cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
          sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
          -sp,     cp * sr,                cp * cr};
}

// Inverse of rotation_from_euler. Within 1e-6 of pitch = ±pi/2 the
// decomposition degenerates (yaw and roll share an axis); the deterministic
// branch fixes roll = 0 and reports the event through `gimbal_lock`.
inline std::array<double, 3> euler_from_rotation(const std::array<double, 9>& r,
                                                 bool* gimbal_lock = nullptr) {
  double s = -r[6];
  if (s > 1.0) s = 1.0;
  if (s < -1.0) s = -1.0;
  double pitch = std::asin(s);
  bool locked = std::abs(std::abs(pitch) - kPi / 2.0) < 1e-6;
  if (gimbal_lock) *gimbal_lock = locked;
  double yaw, roll;
  if (locked) {
    roll = 0.0;
    yaw = std::atan2(-r[1], r[4]);
  } else {
    yaw = std::atan2(r[3], r[0]);
    roll = std::atan2(r[7], r[8]);
  }
  return {wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)};
}

inline RigidTransform transform_from_pose(const Pose6D& p) {
  RigidTransform out;
  out.r = rotation_from_euler(p.angles[0], p.angles[1], p.angles[2]);
  out.t = p.translation;
  return out;
}

inline Pose6D pose_from_transform(const RigidTransform& a, bool* gimbal_lock = nullptr) {
  Pose6D p;
  p.translation = a.t;
  p.angles = euler_from_rotation(a.r, gimbal_lock);
  return p;
}

// Relative motion from the previous frame to the next, expressed in the
// previous frame: inverse(p_prev) ∘ p_next.
inline Pose6D absolute_to_relative(const RigidTransform& p_prev, const RigidTransform& p_next,
                                   bool* gimbal_lock = nullptr) {
  return pose_from_transform(compose(inverse(p_prev), p_next), gimbal_lock);
}

// Applies a relative Pose6D on the right of an absolute transform.
inline RigidTransform relative_to_absolute(const RigidTransform& p_prev, const Pose6D& rel) {
  return compose(p_prev, transform_from_pose(rel));
}

// Largest absolute entry of RᵀR - I.
inline double orthogonality_error(const std::array<double, 9>& r) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[static_cast<std::size_t>(3 * k + i)] * r[static_cast<std::size_t>(3 * k + j)];
      if (i == j) s -= 1.0;
      worst = std::max(worst, std::abs(s));
    }
  return worst;
}

inline double determinant(const std::array<double, 9>& r) {
  return r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
         r[2] * (r[3] * r[7] - r[4] * r[6]);
}

inline void validate_rotation(const std::array<double, 9>& r, const std::string& context) {
  double err = orthogonality_error(r);
  if (err > 1e-3)
    throw FormatError(context + ": rotation block deviates from orthogonality by " +
                      std::to_string(err));
  if (determinant(r) <= 0.0)
    throw FormatError(context + ": rotation block has non-positive determinant");
}

// Rotation angle in radians, computed as atan2(|skew part|, (trace-1)/2).
// Identical rotations give exactly 0 because the skew part vanishes bitwise.
inline double rotation_angle(const std::array<double, 9>& r) {
  double sx = 0.5 * (r[7] - r[5]);
  double sy = 0.5 * (r[2] - r[6]);
  double sz = 0.5 * (r[3] - r[1]);
  double s = std::sqrt(sx * sx + sy * sy + sz * sz);
  double c = 0.5 * (r[0] + r[4] + r[8] - 1.0);
  return std::atan2(s, c);
}

}  // namespace vio
