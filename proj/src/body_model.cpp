#include "rigkit/body_model.hpp"

#include "rigkit/error.hpp"

#include <algorithm>

namespace rigkit {

VecX BlendshapeBasis::apply(const VecX& coeffs) const {
  require(
      size_t(coeffs.size()) <= size(),
      "blendshapes: " + std::to_string(coeffs.size()) + " coefficients for " + std::to_string(size()) +
          " components");
  if (coeffs.size() == 0) {
    return VecX::Zero(deltas.rows());
  }
  return deltas.leftCols(coeffs.size()) * coeffs;
}

VecX BlendshapeBasis::fromStandardDeviations(const VecX& sigmas) const {
  require(size_t(stddev.size()) == size(), "blendshapes: basis carries no standard deviations");
  require(size_t(sigmas.size()) <= size(), "blendshapes: too many coefficients");
  return sigmas.cwiseProduct(stddev.head(sigmas.size()));
}

void RigModel::validate() const {
  const size_t nv = topology.vertexCount;
  topology.validate();
  require(size_t(restPositions.size()) == 3 * nv, "rig: template length != 3 x vertex count");
  require(restPositions.allFinite(), "rig: template contains non-finite values");
  for (const auto* basis : {&identity, &expression}) {
    const std::string which = basis == &identity ? "identity" : "expression";
    require(
        basis->size() == 0 || size_t(basis->deltas.rows()) == 3 * nv,
        "rig: " + which + " basis delta length != 3 x vertex count");
    require(basis->deltas.allFinite(), "rig: " + which + " basis contains non-finite values");
    require(
        basis->names.empty() || basis->names.size() == basis->size(),
        "rig: " + which + " basis names do not match component count");
    require(
        basis->stddev.size() == 0 || size_t(basis->stddev.size()) == basis->size(),
        "rig: " + which + " basis stddev does not match component count");
  }
  require(skinWeights.vertexCount() == nv, "rig: skin weights vertex count != mesh vertex count");
  skinWeights.validate(skeleton.jointCount());
  require(
      parameterTransform.jointParameterCount() == skeleton.jointCount() * kParametersPerJoint,
      "rig: parameter transform rows != 7 x joint count");
  correctives.validate(nv, skeleton.jointCount());
  if (skeletonBasis) {
    require(
        size_t(skeletonBasis->rows()) == parameterTransform.skeletonParameters().size(),
        "rig: skeleton basis rows != skeleton parameter count");
    require(skeletonBasis->allFinite(), "rig: skeleton basis contains non-finite values");
  }
}

void RigModel::finalize() {
  validate();
  bind = bindState(skeleton);
}

ModelInputs ModelInputs::zeros(const RigModel& model) {
  ModelInputs in;
  in.identity = VecX::Zero(Eigen::Index(model.identity.size()));
  in.expression = VecX::Zero(Eigen::Index(model.expression.size()));
  in.pose = VecX::Zero(Eigen::Index(model.parameterCount()));
  return in;
}

VecX effectiveModelParameters(const RigModel& model, const ModelInputs& inputs) {
  VecX params = inputs.pose.size() == 0 ? VecX::Zero(Eigen::Index(model.parameterCount())) : inputs.pose;
  require(size_t(params.size()) == model.parameterCount(), "evaluate: model parameter count mismatch");
  if (inputs.skeletonCoeffs) {
    require(model.skeletonBasis.has_value(), "evaluate: skeleton coefficients given but rig has no skeleton basis");
    require(
        inputs.skeletonCoeffs->size() == model.skeletonBasis->cols(),
        "evaluate: skeleton coefficient count mismatch");
    const VecX skel = *model.skeletonBasis * *inputs.skeletonCoeffs;
    const auto& cols = model.parameterTransform.skeletonParameters();
    for (size_t k = 0; k < cols.size(); ++k) {
      params[Eigen::Index(cols[k])] = skel[Eigen::Index(k)];
    }
  }
  return params;
}

VecX evaluateRestMesh(const RigModel& model, const VecX& identity, const VecX& expression, const VecX& modelParams) {
  VecX rest = model.restPositions;
  if (identity.size() > 0) {
    rest += model.identity.apply(identity);
  }
  if (expression.size() > 0) {
    rest += model.expression.apply(expression);
  }
  if (!model.correctives.empty()) {
    rest += correctiveOffsets(model.correctives, model.vertexCount(), model.parameterTransform, modelParams);
  }
  return rest;
}

std::vector<Transform3> skinningTransforms(const RigModel& model, const std::vector<Transform3>& world) {
  require(
      model.bind.inverseWorld.size() == model.jointCount(),
      "skin: rig bind cache is stale (call finalize())");
  require(world.size() == model.jointCount(), "skin: world transform count != joint count");
  std::vector<Transform3> m(world.size());
  for (size_t k = 0; k < world.size(); ++k) {
    m[k] = compose(world[k], model.bind.inverseWorld[k]);
  }
  return m;
}

VecX skin(const RigModel& model, const VecX& restPositions, const std::vector<Transform3>& world) {
  const size_t nv = model.vertexCount();
  require(size_t(restPositions.size()) == 3 * nv, "skin: rest positions length != 3 x vertex count");
  const auto transforms = skinningTransforms(model, world);
  std::vector<Mat3> linear(transforms.size());
  // Joints sitting exactly at their bind transform skin as the identity, so
  // the bind pose reproduces the rest mesh bit for bit.
  std::vector<char> atBind(transforms.size());
  for (size_t k = 0; k < transforms.size(); ++k) {
    linear[k] = transforms[k].linear();
    const auto& b = model.bind.world[k];
    atBind[k] = world[k].rotation == b.rotation && world[k].translation == b.translation && world[k].scale == b.scale;
  }
  VecX out(restPositions.size());
  for (size_t i = 0; i < nv; ++i) {
    const auto& infl = model.skinWeights.vertices[i];
    require(!infl.empty(), "skin: vertex " + std::to_string(i) + " has zero total weight");
    const Vec3 x = restPositions.segment<3>(Eigen::Index(3 * i));
    if (std::all_of(infl.begin(), infl.end(), [&](const Influence& inf) { return atBind[inf.joint] != 0; })) {
      out.segment<3>(Eigen::Index(3 * i)) = x;
      continue;
    }
    Vec3 acc = Vec3::Zero();
    for (const auto& inf : infl) {
      acc.noalias() += inf.weight * (linear[inf.joint] * x + transforms[inf.joint].translation);
    }
    out.segment<3>(Eigen::Index(3 * i)) = acc;
  }
  return out;
}

VecX evaluate(const RigModel& model, const ModelInputs& inputs) {
  const VecX params = effectiveModelParameters(model, inputs);
  const VecX jointParams = model.parameterTransform.apply(params);
  const auto world = forwardKinematics(model.skeleton, jointParams);
  const VecX rest = evaluateRestMesh(model, inputs.identity, inputs.expression, params);
  return skin(model, rest, world);
}

std::vector<Vec3> jointPositions(const RigModel& model, const ModelInputs& inputs) {
  const VecX params = effectiveModelParameters(model, inputs);
  const auto world = forwardKinematics(model.skeleton, model.parameterTransform.apply(params));
  std::vector<Vec3> result;
  result.reserve(world.size());
  for (const auto& w : world) {
    result.push_back(w.translation);
  }
  return result;
}

} // namespace rigkit
