#pragma once

// Rotation algebra and the heading-agnostic coordinate frame (HACF).
//
// Conventions:
//   * Quaternions are stored (w, x, y, z), Hamilton product, and act as active
//     rotations from the device frame to a gravity-aligned world frame whose
//     +z axis points up (opposite to gravity).
//   * A HACF is any world frame with +z up; frames differ only by a yaw about z.
//   * Device heading is the azimuth of the device +x axis projected onto the
//     horizontal plane, measured counter-clockwise from world +x.
//   * Angles are radians everywhere in the library.

#include <cmath>

namespace ronin::geom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  bool operator==(const Vec2&) const = default;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec2 xy() const { return {x, y}; }
  bool operator==(const Vec3&) const = default;
};

// Angle wrapped into [-pi, pi).
class YawAngle {
 public:
  YawAngle() = default;
  explicit YawAngle(double radians);

  double radians() const { return theta_; }
  bool operator==(const YawAngle&) const = default;

 private:
  double theta_ = 0.0;
};

double wrap_angle(double radians);

// Unit quaternion with w >= 0.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  // Normalizes and canonicalizes. Throws Error(InvalidArgument) for a zero or
  // non-finite input.
  UnitQuaternion(double w, double x, double y, double z);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  static UnitQuaternion from_yaw(double yaw) { return from_axis_angle({0, 0, 1}, yaw); }
  // Exponential map of a rotation vector (axis * angle).
  static UnitQuaternion exp(const Vec3& rotation_vector);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  UnitQuaternion conjugate() const;
  // Rotation vector of this rotation; angle in [0, pi].
  Vec3 log() const;

  bool operator==(const UnitQuaternion&) const = default;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

UnitQuaternion quat_multiply(const UnitQuaternion& a, const UnitQuaternion& b);
inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_multiply(a, b);
}

Vec3 quat_rotate(const UnitQuaternion& q, const Vec3& v);

// Heading of the device +x axis. Throws Error(GimbalDegenerate) when that axis
// is within 1e-8 of vertical.
YawAngle yaw_of(const UnitQuaternion& q);

// R_z(yaw) * R(q_device) * v.
Vec3 to_hacf(const UnitQuaternion& q_device, YawAngle yaw, const Vec3& v_device);

Vec2 rotate2d(const Vec2& v, YawAngle theta);
Vec2 rotate2d(const Vec2& v, double theta);

}  // namespace ronin::geom
