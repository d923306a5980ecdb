#include "ronin/geom.hpp"

#include <numbers>
#include <string>

#include "ronin/error.hpp"

namespace ronin::geom {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

double wrap_angle(double radians) {
  double wrapped = radians - kTwoPi * std::floor((radians + kPi) / kTwoPi);
  if (wrapped >= kPi) wrapped -= kTwoPi;
  if (wrapped < -kPi) wrapped += kTwoPi;
  return wrapped;
}

YawAngle::YawAngle(double radians) : theta_(wrap_angle(radians)) {}

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n2 = w * w + x * x + y * y + z * z;
  if (!std::isfinite(n2) || n2 <= 0.0) {
    throw Error(ErrorKind::InvalidArgument, "quaternion must be finite and non-zero");
  }
  // Leave already-unit input untouched so stored values round-trip bit-exactly.
  if (std::abs(n2 - 1.0) > 1e-15) {
    const double n = std::sqrt(n2);
    w /= n;
    x /= n;
    y /= n;
    z /= n;
  }
  if (w < 0.0) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
  w_ = w;
  x_ = x;
  y_ = y;
  z_ = z;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw Error(ErrorKind::InvalidArgument, "rotation axis must be non-zero");
  const double s = std::sin(0.5 * angle) / n;
  return {std::cos(0.5 * angle), axis.x * s, axis.y * s, axis.z * s};
}

UnitQuaternion UnitQuaternion::exp(const Vec3& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-12) {
    return {1.0, 0.5 * rotation_vector.x, 0.5 * rotation_vector.y, 0.5 * rotation_vector.z};
  }
  return from_axis_angle(rotation_vector, angle);
}

UnitQuaternion UnitQuaternion::conjugate() const {
  UnitQuaternion c;
  c.w_ = w_;
  c.x_ = -x_;
  c.y_ = -y_;
  c.z_ = -z_;
  return c;
}

Vec3 UnitQuaternion::log() const {
  const Vec3 u{x_, y_, z_};
  const double s = u.norm();
  if (s < 1e-12) return u * (2.0 / w_);
  const double angle = 2.0 * std::atan2(s, w_);
  return u * (angle / s);
}

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b) {
  return {a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z(),
          a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
          a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
          a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w()};
}

Vec3 quat_rotate(const UnitQuaternion& q, const Vec3& v) {
  const Vec3 u{q.x(), q.y(), q.z()};
  const Vec3 t = u.cross(v) * 2.0;
  return v + t * q.w() + u.cross(t);
}

YawAngle yaw_of(const UnitQuaternion& q) {
  const double hx = 1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z());
  const double hy = 2.0 * (q.x() * q.y() + q.w() * q.z());
  if (std::hypot(hx, hy) < 1e-8) {
    throw Error(ErrorKind::GimbalDegenerate, "device heading axis is vertical");
  }
  return YawAngle(std::atan2(hy, hx));
}

Vec3 to_hacf(const UnitQuaternion& q_device, YawAngle yaw, const Vec3& v_device) {
  const Vec3 world = quat_rotate(q_device, v_device);
  const Vec2 h = rotate2d(world.xy(), yaw);
  return {h.x, h.y, world.z};
}

Vec2 rotate2d(const Vec2& v, YawAngle theta) { return rotate2d(v, theta.radians()); }

Vec2 rotate2d(const Vec2& v, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

}  // namespace ronin::geom
