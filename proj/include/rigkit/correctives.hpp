#pragma once

#include "rigkit/mesh.hpp"
#include "rigkit/skeleton.hpp"
#include "rigkit/skin_weights.hpp"

#include <optional>
#include <random>
#include <vector>

namespace rigkit {

using RowMatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Neighborhood arity: parent, the joint itself, up to two children.
inline constexpr size_t kNeighborhoodArity = 4;

/// [parent(j), j, children(j)...] truncated or padded (nullopt) to `arity`.
using JointNeighborhood = std::vector<std::optional<size_t>>;

JointNeighborhood jointNeighborhood(const Skeleton& skeleton, size_t joint, size_t arity = kNeighborhoodArity);

enum class Activation { LeakyRelu, Tanh };

/// Bias-free multilayer perceptron. The activation is applied after every
/// layer except the last, and satisfies f(0) = 0, so a zero input always maps
/// to a zero output.
struct CorrectiveMlp {
  std::vector<MatX> layers; // layers[k] is (out x in)
  Activation activation = Activation::LeakyRelu;
  double leakySlope = 0.01;

  size_t inputSize() const {
    return layers.empty() ? 0 : size_t(layers.front().cols());
  }
  size_t outputSize() const {
    return layers.empty() ? 0 : size_t(layers.back().rows());
  }

  double activate(double x) const;
  double activateDerivative(double x) const;

  /// `preActivations` (optional) receives every layer's pre-activation
  /// output, and `inputs` every layer's input, for use in backward().
  VecX forward(const VecX& x, std::vector<VecX>* inputs = nullptr, std::vector<VecX>* preActivations = nullptr)
      const;
  /// Given dL/d(output), returns dL/d(input) and accumulates weight
  /// gradients into `layerGrads` when non-null.
  VecX backward(
      const VecX& outputGrad,
      const std::vector<VecX>& inputs,
      const std::vector<VecX>& preActivations,
      std::vector<MatX>* layerGrads) const;

  /// Glorot-uniform initialization with the given layer widths.
  static CorrectiveMlp random(const std::vector<size_t>& widths, std::mt19937_64& rng, double gain = 1.0);
};

/// Pose corrective of one joint group: phi(A) * (P * MLP(features)).
struct JointCorrective {
  size_t joint = 0;
  JointNeighborhood neighborhood;
  CorrectiveMlp mlp;
  /// A_j, one unconstrained scalar per vertex; ReLU is applied at use.
  VecX mask;
  /// P_j, (3V x c).
  RowMatX weights;

  size_t embeddingSize() const {
    return mlp.outputSize();
  }
};

struct CorrectiveModel {
  std::vector<JointCorrective> joints;

  bool empty() const {
    return joints.empty();
  }
  /// Dimension and invariant checks against a rig.
  void validate(size_t vertexCount, size_t jointCount) const;
};

/// Concatenated 6D rotation deviations R6d(theta_a) - R6d(0) over the
/// neighborhood. `jointParams` are pose-only joint parameters.
VecX poseFeatures(const JointNeighborhood& neighborhood, const VecX& jointParams);

/// NonLinear_j(theta): the MLP applied to the pose features.
VecX nonlinearEmbed(const JointCorrective& corrective, const VecX& jointParams);

/// Sum over joints of relu(A_j) * (P_j * NonLinear_j(theta)) as a 3V vector.
VecX correctiveOffsets(const CorrectiveModel& model, size_t vertexCount, const VecX& jointParams);
VecX correctiveOffsets(
    const CorrectiveModel& model,
    size_t vertexCount,
    const ParameterTransform& pt,
    const VecX& modelParams);

/// Gradient of <offsetGrad, correctiveOffsets(jointParams)> w.r.t. the
/// pose-only joint parameters.
VecX backpropagateCorrectives(const CorrectiveModel& model, const VecX& jointParams, const VecX& offsetGrad);

/// seg(j): vertices whose dominant skinning joint is j, its parent or one of
/// its children.
std::vector<bool> jointSegment(const SkinWeights& skin, const Skeleton& skeleton, size_t joint);

/// Vertices on the boundary between joint j's body part and its parent's
/// part. Falls back to the seg(j) vertices closest to the joint's bind
/// position when that boundary is empty. Throws DataError if seg(j) is empty.
std::vector<uint32_t> jointRing(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    size_t joint);

/// Dijkstra distance over mesh edges from the joint ring, divided by the
/// largest finite distance inside seg(j) and clamped to [0, 1]; unreachable
/// vertices get 1.
VecX geodesicRingDistance(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    size_t joint);

/// A_j[i] = 1 - d(i, j) inside seg(j), 0 elsewhere.
VecX initMask(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    size_t joint);

std::vector<VecX> initMasks(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton);

struct CorrectiveArchitecture {
  std::vector<size_t> hiddenWidths = {32, 32};
  size_t embeddingSize = 8;
  Activation activation = Activation::LeakyRelu;
  size_t arity = kNeighborhoodArity;
};

/// Fresh corrective model for the listed joints: random MLPs, zero P and
/// geodesic-initialized masks.
CorrectiveModel initCorrectiveModel(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    const std::vector<size_t>& joints,
    const CorrectiveArchitecture& arch,
    uint64_t seed);

/// Number of strictly positive mask entries per joint group.
std::vector<size_t> maskSupport(const CorrectiveModel& model);

} // namespace rigkit
