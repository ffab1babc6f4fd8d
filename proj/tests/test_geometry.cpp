#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using vio::Pose6D;
using vio::RigidTransform;

TEST_CASE("wrap_angle maps onto the half-open interval") {
  CHECK(vio::wrap_angle(0.0) == 0.0);
  CHECK(vio::wrap_angle(vio::kPi) == Catch::Approx(vio::kPi).margin(1e-15));
  CHECK(vio::wrap_angle(-vio::kPi) == Catch::Approx(vio::kPi).margin(1e-15));
  CHECK(vio::wrap_angle(vio::kPi + 0.1) == Catch::Approx(-vio::kPi + 0.1).margin(1e-12));
  CHECK(vio::wrap_angle(-vio::kPi - 0.1) == Catch::Approx(vio::kPi - 0.1).margin(1e-12));
  CHECK(vio::wrap_angle(3.0 * vio::kPi) == Catch::Approx(vio::kPi).margin(1e-12));
  CHECK(vio::wrap_angle(7.0) == Catch::Approx(7.0 - 2.0 * vio::kPi).margin(1e-12));
  for (double a : {-10.0, -3.2, -0.5, 0.0, 1.0, 3.2, 15.0}) {
    double w = vio::wrap_angle(a);
    CHECK(w > -vio::kPi);
    CHECK(w <= vio::kPi);
    CHECK(std::abs(std::remainder(w - a, 2.0 * vio::kPi)) < 1e-9);
  }
}

TEST_CASE("euler round trip over a grid of angles") {
  for (double yaw : {-2.5, -0.7, 0.0, 1.1, 3.0})
    for (double pitch : {-1.3, -0.4, 0.0, 0.9, 1.4})
      for (double roll : {-3.0, -1.0, 0.0, 0.6, 2.2}) {
        auto r = vio::rotation_from_euler(yaw, pitch, roll);
        CHECK(vio::orthogonality_error(r) < 1e-12);
        CHECK(vio::determinant(r) == Catch::Approx(1.0).margin(1e-12));
        bool locked = false;
        auto e = vio::euler_from_rotation(r, &locked);
        CHECK_FALSE(locked);
        CHECK(e[0] == Catch::Approx(vio::wrap_angle(yaw)).margin(1e-9));
        CHECK(e[1] == Catch::Approx(vio::wrap_angle(pitch)).margin(1e-9));
        CHECK(e[2] == Catch::Approx(vio::wrap_angle(roll)).margin(1e-9));
      }
}

TEST_CASE("gimbal lock decomposition still reproduces the rotation") {
  for (double pitch : {vio::kPi / 2.0, -vio::kPi / 2.0}) {
    auto r = vio::rotation_from_euler(0.4, pitch, -0.3);
    bool locked = false;
    auto e = vio::euler_from_rotation(r, &locked);
    CHECK(locked);
    CHECK(e[2] == 0.0);  // deterministic branch pins roll
    auto r2 = vio::rotation_from_euler(e[0], e[1], e[2]);
    for (int i = 0; i < 9; ++i)
      CHECK(r2[static_cast<std::size_t>(i)] ==
            Catch::Approx(r[static_cast<std::size_t>(i)]).margin(1e-9));
  }
}

TEST_CASE("compose and inverse cancel") {
  RigidTransform a;
  a.r = vio::rotation_from_euler(0.3, -0.2, 0.7);
  a.t = {1.0, -2.0, 0.5};
  RigidTransform b;
  b.r = vio::rotation_from_euler(-1.1, 0.4, 0.1);
  b.t = {0.2, 3.0, -1.0};

  RigidTransform ab = vio::compose(a, b);
  RigidTransform back = vio::compose(vio::inverse(a), ab);
  for (int i = 0; i < 9; ++i)
    CHECK(back.r[static_cast<std::size_t>(i)] ==
          Catch::Approx(b.r[static_cast<std::size_t>(i)]).margin(1e-12));
  for (int i = 0; i < 3; ++i)
    CHECK(back.t[static_cast<std::size_t>(i)] ==
          Catch::Approx(b.t[static_cast<std::size_t>(i)]).margin(1e-12));

  RigidTransform ident = vio::compose(a, vio::inverse(a));
  CHECK(vio::orthogonality_error(ident.r) < 1e-12);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(ident.t[static_cast<std::size_t>(i)]) < 1e-12);
  CHECK(vio::rotation_angle(ident.r) == Catch::Approx(0.0).margin(1e-7));
}

TEST_CASE("relative and absolute pose conversions invert each other") {
  RigidTransform prev;
  prev.r = vio::rotation_from_euler(0.5, 0.1, -0.4);
  prev.t = {2.0, 1.0, -0.5};
  RigidTransform next;
  next.r = vio::rotation_from_euler(0.8, -0.3, 0.2);
  next.t = {2.5, 1.5, -0.2};

  Pose6D rel = vio::absolute_to_relative(prev, next);
  RigidTransform rebuilt = vio::relative_to_absolute(prev, rel);
  for (int i = 0; i < 9; ++i)
    CHECK(rebuilt.r[static_cast<std::size_t>(i)] ==
          Catch::Approx(next.r[static_cast<std::size_t>(i)]).margin(1e-9));
  for (int i = 0; i < 3; ++i)
    CHECK(rebuilt.t[static_cast<std::size_t>(i)] ==
          Catch::Approx(next.t[static_cast<std::size_t>(i)]).margin(1e-9));
}

TEST_CASE("identical transforms give exactly zero relative rotation") {
  // RtR is exactly symmetric in floating point (same products, same summation
  // order), so the skew part vanishes bitwise and atan2(0, c) returns 0.
  RigidTransform p;
  p.r = vio::rotation_from_euler(1.2, 0.3, -0.9);
  p.t = {4.0, -1.0, 2.0};
  RigidTransform d = vio::compose(vio::inverse(p), p);
  CHECK(vio::rotation_angle(d.r) == 0.0);
}

TEST_CASE("rotation_angle matches known axis-angle cases") {
  CHECK(vio::rotation_angle(RigidTransform::identity().r) == 0.0);
  // pure yaw: angle equals the yaw magnitude
  for (double a : {0.1, 1.0, 2.5}) {
    auto r = vio::rotation_from_euler(a, 0.0, 0.0);
    CHECK(vio::rotation_angle(r) == Catch::Approx(a).margin(1e-12));
  }
  // pure roll likewise
  auto r = vio::rotation_from_euler(0.0, 0.0, 0.7);
  CHECK(vio::rotation_angle(r) == Catch::Approx(0.7).margin(1e-12));
  // 180-degree rotation
  auto half = vio::rotation_from_euler(vio::kPi, 0.0, 0.0);
  CHECK(vio::rotation_angle(half) == Catch::Approx(vio::kPi).margin(1e-9));
}

TEST_CASE("validate_rotation rejects malformed blocks") {
  auto good = vio::rotation_from_euler(0.2, 0.1, -0.3);
  CHECK_NOTHROW(vio::validate_rotation(good, "test"));

  auto scaled = good;
  for (auto& v : scaled) v *= 1.5;
  CHECK_THROWS_AS(vio::validate_rotation(scaled, "test"), vio::FormatError);

  // reflection: orthogonal but determinant -1
  std::array<double, 9> mirror{1, 0, 0, 0, 1, 0, 0, 0, -1};
  CHECK_THROWS_AS(vio::validate_rotation(mirror, "test"), vio::FormatError);

  try {
    vio::validate_rotation(scaled, "pose line 7");
    FAIL("expected FormatError");
  } catch (const vio::FormatError& e) {
    CHECK(std::string(e.what()).find("pose line 7") != std::string::npos);
  }
}

TEST_CASE("pose transform round trip preserves translation exactly") {
  Pose6D p;
  p.translation = {0.125, -2.5, 3.75};  // exactly representable
  p.angles = {0.3, -0.2, 0.1};
  RigidTransform t = vio::transform_from_pose(p);
  CHECK(t.t == p.translation);
  Pose6D back = vio::pose_from_transform(t);
  CHECK(back.translation == p.translation);
  for (int i = 0; i < 3; ++i)
    CHECK(back.angles[static_cast<std::size_t>(i)] ==
          Catch::Approx(p.angles[static_cast<std::size_t>(i)]).margin(1e-12));
}
