#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>

namespace rigkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Euler angles in radians. The rotation is R = Rz(rz) * Ry(ry) * Rx(rx),
/// so the x rotation (bone twist) is applied first.
struct EulerXYZ {
  double rx = 0.0;
  double ry = 0.0;
  double rz = 0.0;
};

Mat3 eulerToMatrix(const EulerXYZ& e);

/// Partial derivatives of eulerToMatrix with respect to rx, ry and rz.
std::array<Mat3, 3> eulerToMatrixDerivatives(const EulerXYZ& e);

/// Inverse of eulerToMatrix. For |ry| = pi/2 the split between rx and rz is
/// not unique; rz is set to zero in that case.
EulerXYZ matrixToEuler(const Mat3& r);

/// Similarity transform x -> scale * rotation * x + translation.
struct Transform3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static Transform3 identity() {
    return {};
  }
  static Transform3 fromTranslation(const Vec3& t) {
    Transform3 result;
    result.translation = t;
    return result;
  }

  Vec3 apply(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }
  Mat3 linear() const {
    return scale * rotation;
  }
  Transform3 inverse() const;
  Mat4 toMatrix() const;
};

/// compose(a, b) applied to p equals a.apply(b.apply(p)).
Transform3 compose(const Transform3& a, const Transform3& b);

inline Transform3 operator*(const Transform3& a, const Transform3& b) {
  return compose(a, b);
}

/// First two columns of a rotation matrix, column-major.
using Rotation6D = std::array<double, 6>;

Rotation6D rotationTo6D(const Mat3& r);

/// Gram-Schmidt reconstruction. Throws NumericError when the two 3-vectors
/// are zero or parallel.
Mat3 rotationFrom6D(const Rotation6D& r);

} // namespace rigkit
