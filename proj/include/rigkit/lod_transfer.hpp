#pragma once

#include "rigkit/body_model.hpp"

#include <string>
#include <vector>

namespace rigkit {

/// For every target vertex, the closest source triangle and the barycentric
/// weights of the closest point on it.
struct BarycentricMap {
  size_t sourceVertexCount = 0;
  std::vector<Triangle> triangles;
  std::vector<Vec3> weights;
  /// Distance from each target vertex to the source surface.
  std::vector<double> distances;

  size_t targetVertexCount() const {
    return weights.size();
  }
  double maxDistance() const;
};

BarycentricMap buildBarycentricMap(
    const VecX& sourcePositions,
    const MeshTopology& source,
    const VecX& targetPositions);

/// Interpolates a per-vertex field stored as `dim` consecutive values per
/// vertex (a 3V blendshape uses dim = 3).
VecX transferField(const BarycentricMap& map, const VecX& field, size_t dim);

/// Interpolates every column of a stacked field matrix ((dim * V) x n).
MatX transferColumns(const BarycentricMap& map, const MatX& field, size_t dim);

/// Interpolated skin weights, capped to `maxInfluences` and renormalized.
SkinWeights transferSkinWeights(
    const BarycentricMap& map,
    const SkinWeights& source,
    size_t maxInfluences,
    size_t* truncated = nullptr);

struct LodTransferOptions {
  /// One uniform Laplacian smoothing pass (step 0.5) over transferred
  /// blendshapes and corrective tensors.
  bool smooth = false;
  /// Recompute corrective masks geodesically on the target instead of
  /// transferring them.
  bool reinitMasks = false;
  /// Influence cap of the target; 0 keeps the source cap.
  size_t maxInfluences = 0;
};

/// Rig on the target mesh: template replaced, every per-vertex field
/// transferred, skeleton and parameter transform shared.
RigModel transferRig(
    const RigModel& source,
    const MeshTopology& targetTopology,
    const VecX& targetPositions,
    const LodTransferOptions& options = {},
    std::vector<std::string>* warnings = nullptr);

} // namespace rigkit
