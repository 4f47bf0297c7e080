#pragma once

#include "rigkit/correctives.hpp"
#include "rigkit/mesh.hpp"
#include "rigkit/skeleton.hpp"
#include "rigkit/skin_weights.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rigkit {

/// Stack of per-vertex offset fields, one column (3V) per component.
struct BlendshapeBasis {
  MatX deltas;
  std::vector<std::string> names;
  /// Optional per-component standard deviation (identity spaces keep the
  /// PCA singular values here); empty when unknown.
  VecX stddev;

  size_t size() const {
    return size_t(deltas.cols());
  }
  /// Sum of coeffs[n] * deltas[:, n] over the first coeffs.size() components.
  VecX apply(const VecX& coeffs) const;
  /// Coefficients for "k standard deviations" along each component.
  VecX fromStandardDeviations(const VecX& sigmas) const;
};

struct LodInfo {
  std::string name;
  size_t vertexCount = 0;
};

/// A parametric rig: template mesh, identity and expression bases, skin
/// weights, skeleton, parameter transform, pose correctives and an optional
/// skeleton basis.
struct RigModel {
  MeshTopology topology;
  VecX restPositions;
  BlendshapeBasis identity;
  BlendshapeBasis expression;
  SkinWeights skinWeights;
  Skeleton skeleton;
  ParameterTransform parameterTransform;
  CorrectiveModel correctives;
  /// Maps skeleton coefficients to the skeleton columns of the model
  /// parameters, (n_skel x n_coeffs).
  std::optional<MatX> skeletonBasis;
  std::vector<LodInfo> lods;
  /// Header fields this version does not interpret, kept verbatim (JSON).
  std::map<std::string, std::string> extras;

  /// Cached bind pose; refreshed by finalize().
  BindState bind;

  size_t vertexCount() const {
    return topology.vertexCount;
  }
  size_t jointCount() const {
    return skeleton.jointCount();
  }
  size_t parameterCount() const {
    return parameterTransform.parameterCount();
  }

  /// Checks every cross-module dimension and invariant; throws DataError
  /// naming the first violation.
  void validate() const;
  /// validate() and recompute the bind cache.
  void finalize();
};

/// Inputs of a full model evaluation. Empty coefficient vectors mean zero.
struct ModelInputs {
  VecX identity;
  VecX expression;
  /// When set, the skeleton columns of `pose` are replaced by
  /// skeletonBasis * skeletonCoeffs.
  std::optional<VecX> skeletonCoeffs;
  /// Model parameters (pose and skeleton columns).
  VecX pose;

  static ModelInputs zeros(const RigModel& model);
};

/// Model parameters after substituting the skeleton basis output.
VecX effectiveModelParameters(const RigModel& model, const ModelInputs& inputs);

/// Rest-pose mesh before skinning: template + identity + expression + pose
/// correctives (pose columns only).
VecX evaluateRestMesh(const RigModel& model, const VecX& identity, const VecX& expression, const VecX& modelParams);

/// Per-joint skinning transforms world_k * inverse(bind_k).
std::vector<Transform3> skinningTransforms(const RigModel& model, const std::vector<Transform3>& world);

/// Linear blend skinning of rest positions.
VecX skin(const RigModel& model, const VecX& restPositions, const std::vector<Transform3>& world);

/// Full evaluation: skeleton basis, parameter transform, forward kinematics,
/// rest mesh, skinning.
VecX evaluate(const RigModel& model, const ModelInputs& inputs);

/// World-space joint positions for the given inputs.
std::vector<Vec3> jointPositions(const RigModel& model, const ModelInputs& inputs);

} // namespace rigkit
