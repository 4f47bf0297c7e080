#include "rigkit/skeleton.hpp"

#include "rigkit/error.hpp"

#include <cmath>
#include <numbers>

namespace rigkit {

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  require(!joints_.empty(), "skeleton: no joints");
  children_.assign(joints_.size(), {});
  size_t roots = 0;
  for (size_t i = 0; i < joints_.size(); ++i) {
    const auto& parent = joints_[i].parent;
    if (!parent) {
      ++roots;
      continue;
    }
    require(
        *parent < i,
        "skeleton: joint '" + joints_[i].name + "' stored before its parent (topological order required)");
    children_[*parent].push_back(i);
  }
  require(roots == 1, "skeleton: expected exactly one root joint, found " + std::to_string(roots));
}

Skeleton Skeleton::fromUnordered(std::vector<Joint> joints, std::vector<size_t>* remap) {
  const size_t n = joints.size();
  std::vector<std::vector<size_t>> children(n);
  std::vector<size_t> roots;
  for (size_t i = 0; i < n; ++i) {
    if (joints[i].parent) {
      require(*joints[i].parent < n, "skeleton: joint '" + joints[i].name + "' has invalid parent index");
      children[*joints[i].parent].push_back(i);
    } else {
      roots.push_back(i);
    }
  }
  require(roots.size() == 1, "skeleton: expected exactly one root joint, found " + std::to_string(roots.size()));

  // An order that already has parents first is kept as is. Otherwise
  // breadth-first order keeps siblings grouped; cycles leave joints unvisited.
  bool ordered = true;
  for (size_t i = 0; i < n; ++i) {
    ordered = ordered && (joints[i].parent ? *joints[i].parent < i : i == 0);
  }
  std::vector<size_t> order;
  order.reserve(n);
  if (ordered) {
    for (size_t i = 0; i < n; ++i) {
      order.push_back(i);
    }
  } else {
    order.push_back(roots.front());
    for (size_t k = 0; k < order.size(); ++k) {
      for (size_t c : children[order[k]]) {
        order.push_back(c);
      }
    }
  }
  require(order.size() == n, "skeleton: joint hierarchy contains a cycle or unreachable joints");

  std::vector<size_t> newIndex(n);
  for (size_t k = 0; k < n; ++k) {
    newIndex[order[k]] = k;
  }
  std::vector<Joint> sorted;
  sorted.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    Joint j = joints[order[k]];
    if (j.parent) {
      j.parent = newIndex[*j.parent];
    }
    sorted.push_back(std::move(j));
  }
  if (remap) {
    *remap = newIndex;
  }
  return Skeleton(std::move(sorted));
}

std::optional<size_t> Skeleton::findJoint(const std::string& name) const {
  for (size_t i = 0; i < joints_.size(); ++i) {
    if (joints_[i].name == name) {
      return i;
    }
  }
  return std::nullopt;
}

ParameterTransform::ParameterTransform(
    std::vector<std::string> names,
    size_t jointParameterCount,
    std::vector<Entry> entries,
    std::vector<bool> isSkeleton,
    std::vector<std::optional<ParameterLimit>> limits)
    : names_(std::move(names)),
      jointParameterCount_(jointParameterCount),
      entries_(std::move(entries)),
      isSkeleton_(std::move(isSkeleton)),
      limits_(std::move(limits)) {
  const size_t np = names_.size();
  require(
      jointParameterCount_ % kParametersPerJoint == 0,
      "parameter transform: joint parameter count must be a multiple of 7");
  require(isSkeleton_.size() == np, "parameter transform: pose/skeleton flags do not match parameter count");
  if (limits_.empty()) {
    limits_.resize(np);
  }
  require(limits_.size() == np, "parameter transform: limit list does not match parameter count");
  for (size_t i = 0; i < np; ++i) {
    (isSkeleton_[i] ? skeleton_ : pose_).push_back(i);
    if (limits_[i]) {
      require(
          limits_[i]->lower <= limits_[i]->upper,
          "parameter transform: limit lower > upper for '" + names_[i] + "'");
    }
  }

  std::vector<Eigen::Triplet<double>> all;
  std::vector<Eigen::Triplet<double>> pose;
  for (const auto& e : entries_) {
    require(e.row < jointParameterCount_, "parameter transform: triplet row out of range");
    require(e.col < np, "parameter transform: triplet column out of range");
    require(std::isfinite(e.weight), "parameter transform: non-finite weight");
    all.emplace_back(int(e.row), int(e.col), e.weight);
    if (!isSkeleton_[e.col]) {
      pose.emplace_back(int(e.row), int(e.col), e.weight);
    }
  }
  matrix_.resize(int(jointParameterCount_), int(np));
  matrix_.setFromTriplets(all.begin(), all.end());
  poseMatrix_.resize(int(jointParameterCount_), int(np));
  poseMatrix_.setFromTriplets(pose.begin(), pose.end());
}

std::optional<size_t> ParameterTransform::findParameter(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) {
      return i;
    }
  }
  return std::nullopt;
}

VecX ParameterTransform::apply(const VecX& modelParams) const {
  require(
      size_t(modelParams.size()) == parameterCount(),
      "parameter transform: expected " + std::to_string(parameterCount()) + " model parameters, got " +
          std::to_string(modelParams.size()));
  return matrix_ * modelParams;
}

VecX ParameterTransform::applyTranspose(const VecX& jointGrad) const {
  require(size_t(jointGrad.size()) == jointParameterCount_, "parameter transform: joint gradient size mismatch");
  return matrix_.transpose() * jointGrad;
}

VecX ParameterTransform::applyPoseOnly(const VecX& modelParams) const {
  require(size_t(modelParams.size()) == parameterCount(), "parameter transform: model parameter size mismatch");
  return poseMatrix_ * modelParams;
}

VecX ParameterTransform::applyPoseOnlyTranspose(const VecX& jointGrad) const {
  require(size_t(jointGrad.size()) == jointParameterCount_, "parameter transform: joint gradient size mismatch");
  return poseMatrix_.transpose() * jointGrad;
}

Transform3 localJointTransform(const Joint& joint, const double* p) {
  Transform3 t;
  t.translation = joint.offset + Vec3(p[kTx], p[kTy], p[kTz]);
  t.rotation = eulerToMatrix(joint.prerotation) * eulerToMatrix({p[kRx], p[kRy], p[kRz]});
  t.scale = std::exp2(p[kScale]);
  return t;
}

SkeletonState computeSkeletonState(const Skeleton& skeleton, const VecX& jointParams) {
  const size_t n = skeleton.jointCount();
  require(
      size_t(jointParams.size()) == n * kParametersPerJoint,
      "forward kinematics: expected " + std::to_string(n * kParametersPerJoint) + " joint parameters, got " +
          std::to_string(jointParams.size()));
  SkeletonState state;
  state.local.resize(n);
  state.world.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const Joint& joint = skeleton.joint(i);
    state.local[i] = localJointTransform(joint, jointParams.data() + i * kParametersPerJoint);
    state.world[i] = joint.parent ? compose(state.world[*joint.parent], state.local[i]) : state.local[i];
  }
  return state;
}

std::vector<Transform3> forwardKinematics(const Skeleton& skeleton, const VecX& jointParams) {
  return computeSkeletonState(skeleton, jointParams).world;
}

BindState bindState(const Skeleton& skeleton) {
  BindState bind;
  bind.world = forwardKinematics(skeleton, VecX::Zero(Eigen::Index(skeleton.jointCount() * kParametersPerJoint)));
  bind.inverseWorld.reserve(bind.world.size());
  for (const auto& w : bind.world) {
    bind.inverseWorld.push_back(w.inverse());
  }
  return bind;
}

VecX backpropagateSkeleton(
    const Skeleton& skeleton,
    const VecX& jointParams,
    const SkeletonState& state,
    WorldGradient& grad) {
  const size_t n = skeleton.jointCount();
  VecX result = VecX::Zero(Eigen::Index(n * kParametersPerJoint));
  for (size_t k = n; k-- > 0;) {
    const Joint& joint = skeleton.joint(k);
    const Transform3& local = state.local[k];
    Mat3 gLocalLinear = grad.linear[k];
    Vec3 gLocalTranslation = grad.translation[k];
    if (joint.parent) {
      const size_t p = *joint.parent;
      const Mat3 parentLinear = state.world[p].linear();
      grad.linear[p] += grad.linear[k] * local.linear().transpose() +
          grad.translation[k] * local.translation.transpose();
      grad.translation[p] += grad.translation[k];
      gLocalLinear = parentLinear.transpose() * grad.linear[k];
      gLocalTranslation = parentLinear.transpose() * grad.translation[k];
    }

    const double* p = jointParams.data() + k * kParametersPerJoint;
    double* out = result.data() + k * kParametersPerJoint;
    out[kTx] = gLocalTranslation.x();
    out[kTy] = gLocalTranslation.y();
    out[kTz] = gLocalTranslation.z();

    // linear = sigma * Pre * R(e)
    const Mat3 pre = eulerToMatrix(joint.prerotation);
    const EulerXYZ e{p[kRx], p[kRy], p[kRz]};
    const Mat3 rot = eulerToMatrix(e);
    const double sigma = local.scale;
    const double gSigma = (gLocalLinear.array() * (pre * rot).array()).sum();
    out[kScale] = gSigma * sigma * std::numbers::ln2;
    const Mat3 gRot = sigma * pre.transpose() * gLocalLinear;
    const auto dR = eulerToMatrixDerivatives(e);
    out[kRx] = (gRot.array() * dR[0].array()).sum();
    out[kRy] = (gRot.array() * dR[1].array()).sum();
    out[kRz] = (gRot.array() * dR[2].array()).sum();
  }
  return result;
}

double jointLimitPenalty(const ParameterTransform& pt, const VecX& modelParams, VecX* grad) {
  require(size_t(modelParams.size()) == pt.parameterCount(), "joint limits: model parameter size mismatch");
  if (grad) {
    grad->setZero(modelParams.size());
  }
  double total = 0.0;
  const auto& limits = pt.limits();
  for (size_t i = 0; i < limits.size(); ++i) {
    if (!limits[i]) {
      continue;
    }
    const double v = modelParams[Eigen::Index(i)];
    double violation = 0.0;
    if (v > limits[i]->upper) {
      violation = v - limits[i]->upper;
    } else if (v < limits[i]->lower) {
      violation = v - limits[i]->lower;
    }
    total += violation * violation;
    if (grad) {
      (*grad)[Eigen::Index(i)] = 2.0 * violation;
    }
  }
  return total;
}

} // namespace rigkit
