#pragma once

#include "rigkit/math.hpp"

#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace rigkit {

/// Joint parameters per joint: tx, ty, tz, rx, ry, rz, scale.
inline constexpr size_t kParametersPerJoint = 7;

enum JointParameterIndex : size_t {
  kTx = 0,
  kTy = 1,
  kTz = 2,
  kRx = 3,
  kRy = 4,
  kRz = 5,
  kScale = 6,
};

struct Joint {
  std::string name;
  std::optional<size_t> parent;
  /// Constant translation relative to the parent joint frame, meters.
  Vec3 offset = Vec3::Zero();
  /// Constant rotation orienting the joint frame.
  EulerXYZ prerotation;
};

/// Joint hierarchy stored parents-before-children with a single root.
class Skeleton {
 public:
  Skeleton() = default;
  /// Throws DataError unless joints are topologically ordered with exactly
  /// one root.
  explicit Skeleton(std::vector<Joint> joints);

  /// Reorders an arbitrary joint list (parents given as indices into the
  /// input list) so parents precede children. `remap[old] = new`.
  static Skeleton fromUnordered(std::vector<Joint> joints, std::vector<size_t>* remap = nullptr);

  size_t jointCount() const {
    return joints_.size();
  }
  const Joint& joint(size_t i) const {
    return joints_.at(i);
  }
  const std::vector<Joint>& joints() const {
    return joints_;
  }
  const std::vector<size_t>& children(size_t i) const {
    return children_.at(i);
  }
  std::optional<size_t> findJoint(const std::string& name) const;

 private:
  std::vector<Joint> joints_;
  std::vector<std::vector<size_t>> children_;
};

struct ParameterLimit {
  double lower = 0.0;
  double upper = 0.0;
};

/// Sparse linear map from model parameters to joint parameters
/// (jointParams = T * modelParams), with a pose/skeleton column split and
/// optional per-parameter limits.
class ParameterTransform {
 public:
  struct Entry {
    size_t row = 0;
    size_t col = 0;
    double weight = 0.0;
  };

  ParameterTransform() = default;
  ParameterTransform(
      std::vector<std::string> names,
      size_t jointParameterCount,
      std::vector<Entry> entries,
      std::vector<bool> isSkeleton,
      std::vector<std::optional<ParameterLimit>> limits = {});

  size_t parameterCount() const {
    return names_.size();
  }
  size_t jointParameterCount() const {
    return jointParameterCount_;
  }
  const std::vector<std::string>& names() const {
    return names_;
  }
  const std::vector<Entry>& entries() const {
    return entries_;
  }
  bool isSkeleton(size_t param) const {
    return isSkeleton_.at(param);
  }
  const std::vector<size_t>& poseParameters() const {
    return pose_;
  }
  const std::vector<size_t>& skeletonParameters() const {
    return skeleton_;
  }
  const std::vector<std::optional<ParameterLimit>>& limits() const {
    return limits_;
  }
  std::optional<size_t> findParameter(const std::string& name) const;

  VecX apply(const VecX& modelParams) const;
  /// Chain rule: gradient w.r.t. joint parameters -> model parameters.
  VecX applyTranspose(const VecX& jointGrad) const;
  /// Applies the transform with every skeleton column zeroed.
  VecX applyPoseOnly(const VecX& modelParams) const;
  VecX applyPoseOnlyTranspose(const VecX& jointGrad) const;

 private:
  std::vector<std::string> names_;
  size_t jointParameterCount_ = 0;
  std::vector<Entry> entries_;
  std::vector<bool> isSkeleton_;
  std::vector<std::optional<ParameterLimit>> limits_;
  std::vector<size_t> pose_;
  std::vector<size_t> skeleton_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> matrix_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> poseMatrix_;
};

struct SkeletonState {
  std::vector<Transform3> local;
  std::vector<Transform3> world;
};

/// Local transform of one joint: offset, translation, pre-rotation, Euler
/// rotation and scale factor 2^s, composed in that order.
Transform3 localJointTransform(const Joint& joint, const double* params7);

SkeletonState computeSkeletonState(const Skeleton& skeleton, const VecX& jointParams);
std::vector<Transform3> forwardKinematics(const Skeleton& skeleton, const VecX& jointParams);

/// Bind pose (all joint parameters zero) and its per-joint inverses.
struct BindState {
  std::vector<Transform3> world;
  std::vector<Transform3> inverseWorld;
};
BindState bindState(const Skeleton& skeleton);

/// Gradient of a loss w.r.t. world transforms, expressed on the affine
/// parts: d/d(scale*rotation) and d/d(translation).
struct WorldGradient {
  std::vector<Mat3> linear;
  std::vector<Vec3> translation;

  explicit WorldGradient(size_t jointCount = 0)
      : linear(jointCount, Mat3::Zero()), translation(jointCount, Vec3::Zero()) {}
};

/// Reverse-mode pass through forward kinematics. Consumes `grad` (it is
/// modified in place while accumulating into parents) and returns the
/// gradient w.r.t. joint parameters.
VecX backpropagateSkeleton(
    const Skeleton& skeleton,
    const VecX& jointParams,
    const SkeletonState& state,
    WorldGradient& grad);

/// Sum of squared limit violations over limited model parameters.
double jointLimitPenalty(const ParameterTransform& pt, const VecX& modelParams, VecX* grad = nullptr);

} // namespace rigkit
