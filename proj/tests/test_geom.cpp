#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "printers.hpp"
#include "ronin/error.hpp"
#include "ronin/geom.hpp"
#include "ronin/rng.hpp"

using namespace ronin;
using namespace ronin::geom;

namespace {

constexpr double kPi = std::numbers::pi;

using Mat3 = std::array<std::array<double, 3>, 3>;

// Rotation matrix straight from the quaternion components.
Mat3 matrix_of(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

Vec3 mat_apply(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
  return c;
}

UnitQuaternion random_quat(Rng& rng) {
  return UnitQuaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
}

double angle_diff(double a, double b) { return std::abs(wrap_angle(a - b)); }

}  // namespace

TEST(Quaternion, ConstructorNormalizesAndCanonicalizes) {
  UnitQuaternion q(-2.0, 0.0, 0.0, 2.0);
  EXPECT_NEAR(q.w() * q.w() + q.x() * q.x() + q.y() * q.y() + q.z() * q.z(), 1.0, 1e-12);
  EXPECT_GE(q.w(), 0.0);
  EXPECT_NEAR(q.w(), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(q.z(), -std::sqrt(0.5), 1e-12);
  EXPECT_THROW(UnitQuaternion(0, 0, 0, 0), Error);
}

TEST(Quaternion, IdentityAndInverse) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto q = random_quat(rng);
    EXPECT_EQ(quat_multiply(UnitQuaternion::identity(), q), q);
    const auto e = quat_multiply(q, q.conjugate());
    EXPECT_NEAR(e.w(), 1.0, 1e-12);
    EXPECT_NEAR(std::abs(e.x()) + std::abs(e.y()) + std::abs(e.z()), 0.0, 1e-12);
  }
}

TEST(Quaternion, QuarterTurnsComposeToHalfTurn) {
  const auto qz = UnitQuaternion::from_axis_angle({0, 0, 1}, kPi / 2);
  const auto r = quat_multiply(qz, qz);
  const Mat3 m = mul(matrix_of(qz), matrix_of(qz));
  // Half turn about z: diag(-1, -1, 1).
  EXPECT_NEAR(m[0][0], -1.0, 1e-12);
  EXPECT_NEAR(m[1][1], -1.0, 1e-12);
  EXPECT_NEAR(m[2][2], 1.0, 1e-12);
  EXPECT_NEAR(r.w(), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(r.z()), 1.0, 1e-12);
}

TEST(Quaternion, ProductMatchesMatrixProduct) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_quat(rng);
    const auto b = random_quat(rng);
    const Mat3 expect = mul(matrix_of(a), matrix_of(b));
    const Mat3 got = matrix_of(a * b);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[r][c], expect[r][c], 1e-12);
  }
}

TEST(Quaternion, ExpLogRoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 rv{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec3 back = UnitQuaternion::exp(rv).log();
    EXPECT_NEAR(back.x, rv.x, 1e-12);
    EXPECT_NEAR(back.y, rv.y, 1e-12);
    EXPECT_NEAR(back.z, rv.z, 1e-12);
  }
}

TEST(QuatRotate, Examples) {
  const Vec3 v = quat_rotate(UnitQuaternion::identity(), {1, 2, 3});
  EXPECT_EQ(v, (Vec3{1, 2, 3}));
  const Vec3 r = quat_rotate(UnitQuaternion::from_yaw(kPi / 2), {1, 0, 0});
  EXPECT_NEAR(r.x, 0.0, 1e-15);
  EXPECT_NEAR(r.y, 1.0, 1e-15);
  EXPECT_NEAR(r.z, 0.0, 1e-15);
}

TEST(QuatRotate, MatchesMatrixOracleAndPreservesNorm) {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const auto q = random_quat(rng);
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const Vec3 got = quat_rotate(q, v);
    const Vec3 expect = mat_apply(matrix_of(q), v);
    EXPECT_NEAR(got.x, expect.x, 1e-12);
    EXPECT_NEAR(got.y, expect.y, 1e-12);
    EXPECT_NEAR(got.z, expect.z, 1e-12);
    EXPECT_NEAR(got.norm(), v.norm(), 1e-12);
  }
}

TEST(YawOf, Examples) {
  EXPECT_EQ(yaw_of(UnitQuaternion::identity()).radians(), 0.0);
  EXPECT_NEAR(yaw_of(UnitQuaternion::from_yaw(kPi / 2)).radians(), kPi / 2, 1e-12);
  const auto pitch = UnitQuaternion::from_axis_angle({0, 1, 0}, 30.0 * kPi / 180.0);
  EXPECT_NEAR(yaw_of(pitch).radians(), 0.0, 1e-12);
}

TEST(YawOf, VerticalReferenceAxisIsDegenerate) {
  const auto up = UnitQuaternion::from_axis_angle({0, 1, 0}, -kPi / 2);
  try {
    yaw_of(up);
    FAIL() << "expected GimbalDegenerate";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GimbalDegenerate);
  }
}

TEST(YawOf, ShiftsWithWorldYaw) {
  Rng rng(5);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto q = random_quat(rng);
    const double theta = rng.uniform(-kPi, kPi);
    try {
      const double a = yaw_of(UnitQuaternion::from_yaw(theta) * q).radians();
      const double b = yaw_of(q).radians();
      EXPECT_LE(angle_diff(a, b + theta), 1e-9);
      ++checked;
    } catch (const Error&) {
    }
  }
  EXPECT_GT(checked, 1900);
}

TEST(YawAngle, WrapsIntoHalfOpenRange) {
  EXPECT_DOUBLE_EQ(YawAngle(kPi).radians(), -kPi);
  EXPECT_NEAR(YawAngle(3 * kPi / 2).radians(), -kPi / 2, 1e-12);
  EXPECT_NEAR(YawAngle(-5 * kPi / 2).radians(), -kPi / 2, 1e-12);
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double r = YawAngle(rng.uniform(-100, 100)).radians();
    EXPECT_GE(r, -kPi);
    EXPECT_LT(r, kPi);
  }
}

TEST(Rotate2d, Examples) {
  const Vec2 r = rotate2d({1, 0}, kPi / 2);
  EXPECT_NEAR(r.x, 0.0, 1e-15);
  EXPECT_NEAR(r.y, 1.0, 1e-15);
  EXPECT_EQ(rotate2d({0.3, -0.7}, 0.0), (Vec2{0.3, -0.7}));
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 v{rng.normal(), rng.normal()};
    const double t = rng.uniform(-kPi, kPi);
    const Vec2 got = rotate2d(v, t);
    EXPECT_NEAR(got.x, std::cos(t) * v.x - std::sin(t) * v.y, 1e-14);
    EXPECT_NEAR(got.y, std::sin(t) * v.x + std::cos(t) * v.y, 1e-14);
    EXPECT_NEAR(got.norm(), v.norm(), 1e-12);
  }
}

TEST(Hacf, IdentityAndUpsideDown) {
  EXPECT_EQ(to_hacf(UnitQuaternion::identity(), YawAngle(0), {1, 2, 3}), (Vec3{1, 2, 3}));
  // Pitched -90 degrees: accel at rest reads gravity reaction in device axes.
  const auto q = UnitQuaternion::from_axis_angle({0, 1, 0}, -kPi / 2);
  const Vec3 accel = mat_apply(matrix_of(q.conjugate()), {0, 0, 9.81});
  const Vec3 h = to_hacf(q, YawAngle(0), accel);
  EXPECT_NEAR(h.x, 0.0, 1e-12);
  EXPECT_NEAR(h.y, 0.0, 1e-12);
  EXPECT_NEAR(h.z, 9.81, 1e-12);
}

TEST(Hacf, EquivarianceOverRandomOrientations) {
  Rng rng(8);
  for (int i = 0; i < 10000; ++i) {
    UnitQuaternion q = random_quat(rng);
    if (i % 10 == 0) {
      // Force the pitch +-90 degree neighbourhood into the sample.
      const double pitch = (i % 20 == 0 ? 1.0 : -1.0) * kPi / 2 + rng.uniform(-1e-6, 1e-6);
      q = UnitQuaternion::from_yaw(rng.uniform(-kPi, kPi)) * UnitQuaternion::from_axis_angle({0, 1, 0}, pitch);
    }
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const YawAngle yaw(rng.uniform(-kPi, kPi));
    const Vec3 base = to_hacf(q, YawAngle(0), v);
    const Vec3 turned = to_hacf(q, yaw, v);
    const Vec2 expect = rotate2d(base.xy(), yaw);
    EXPECT_NEAR(turned.x, expect.x, 1e-12);
    EXPECT_NEAR(turned.y, expect.y, 1e-12);
    EXPECT_EQ(turned.z, base.z);
  }
}

TEST(Hacf, ContinuousThroughVerticalPitch) {
  const Vec3 v = Vec3{0.3, -0.5, 0.8} / std::sqrt(0.98);
  for (double axis_yaw : {0.0, 0.7, -2.0}) {
    Vec3 prev{};
    bool first = true;
    for (int deg = -180; deg <= 180; ++deg) {
      const auto q = UnitQuaternion::from_yaw(axis_yaw) *
                     UnitQuaternion::from_axis_angle({0, 1, 0}, deg * kPi / 180.0);
      const Vec3 h = to_hacf(q, YawAngle(0), v);
      if (!first) EXPECT_LT((h - prev).norm(), 0.05) << "pitch " << deg;
      prev = h;
      first = false;
    }
  }
}
