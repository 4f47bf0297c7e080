#pragma once

#include <cstdint>
#include <vector>

namespace rigkit {

struct Influence {
  uint32_t joint = 0;
  double weight = 0.0;
};

/// Per-vertex joint influences, capped at `maxInfluences` per vertex.
struct SkinWeights {
  size_t maxInfluences = 4;
  std::vector<std::vector<Influence>> vertices;

  size_t vertexCount() const {
    return vertices.size();
  }
  /// Joint with the largest weight (lowest index on ties).
  uint32_t dominantJoint(size_t vertex) const;
  /// Throws DataError on negative weights, sums off 1 by more than 1e-6,
  /// too many influences, zero-weight vertices or invalid joint indices.
  void validate(size_t jointCount) const;
};

/// Keeps the `maxInfluences` largest weights per vertex, drops zeros and
/// renormalizes to unit sum. `truncated` receives the number of vertices that
/// lost influences to the cap.
SkinWeights capInfluences(
    std::vector<std::vector<Influence>> raw,
    size_t maxInfluences,
    size_t* truncated = nullptr);

} // namespace rigkit
