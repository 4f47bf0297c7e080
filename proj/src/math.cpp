#include "rigkit/math.hpp"

#include "rigkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace rigkit {

namespace {

Mat3 rotX(double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}

Mat3 rotY(double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

Mat3 rotZ(double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

// Derivatives of the elementary rotations.
Mat3 dRotX(double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Mat3 m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}

Mat3 dRotY(double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Mat3 m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}

Mat3 dRotZ(double a) {
  const double c = std::cos(a);
  const double s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

} // namespace

Mat3 eulerToMatrix(const EulerXYZ& e) {
  return rotZ(e.rz) * rotY(e.ry) * rotX(e.rx);
}

std::array<Mat3, 3> eulerToMatrixDerivatives(const EulerXYZ& e) {
  const Mat3 rx = rotX(e.rx);
  const Mat3 ry = rotY(e.ry);
  const Mat3 rz = rotZ(e.rz);
  return {rz * ry * dRotX(e.rx), rz * dRotY(e.ry) * rx, dRotZ(e.rz) * ry * rx};
}

EulerXYZ matrixToEuler(const Mat3& r) {
  // r(2,0) = -sin(ry)
  EulerXYZ e;
  const double sy = std::clamp(-r(2, 0), -1.0, 1.0);
  e.ry = std::asin(sy);
  if (std::abs(sy) < 1.0 - 1e-12) {
    e.rx = std::atan2(r(2, 1), r(2, 2));
    e.rz = std::atan2(r(1, 0), r(0, 0));
  } else {
    // Gimbal lock: only rx - rz (or rx + rz) is determined.
    e.rz = 0.0;
    e.rx = std::atan2(-r(1, 2), r(1, 1));
  }
  return e;
}

Transform3 Transform3::inverse() const {
  Transform3 result;
  result.rotation = rotation.transpose();
  result.scale = 1.0 / scale;
  result.translation = -(result.scale * (result.rotation * translation));
  return result;
}

Mat4 Transform3::toMatrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = scale * rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Transform3 compose(const Transform3& a, const Transform3& b) {
  Transform3 result;
  result.rotation = a.rotation * b.rotation;
  result.scale = a.scale * b.scale;
  result.translation = a.apply(b.translation);
  return result;
}

Rotation6D rotationTo6D(const Mat3& r) {
  return {r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1)};
}

Mat3 rotationFrom6D(const Rotation6D& r) {
  const Vec3 a(r[0], r[1], r[2]);
  const Vec3 b(r[3], r[4], r[5]);
  const double na = a.norm();
  if (!(na > 1e-12)) {
    throw NumericError("rotationFrom6D: first column is zero");
  }
  const Vec3 c0 = a / na;
  const Vec3 bPerp = b - c0.dot(b) * c0;
  const double nb = bPerp.norm();
  if (!(nb > 1e-12 * std::max(1.0, b.norm()))) {
    throw NumericError("rotationFrom6D: columns are parallel or zero");
  }
  const Vec3 c1 = bPerp / nb;
  Mat3 m;
  m.col(0) = c0;
  m.col(1) = c1;
  m.col(2) = c0.cross(c1);
  return m;
}

} // namespace rigkit
