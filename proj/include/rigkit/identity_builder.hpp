#pragma once

#include "rigkit/body_model.hpp"

#include <string>
#include <vector>

namespace rigkit {

/// Vertex permutation pairing each vertex with its mirror image across the
/// x = 0 plane.
struct SymmetryMap {
  std::vector<uint32_t> permutation;

  size_t size() const {
    return permutation.size();
  }
  /// Throws DataError unless the permutation is an involution.
  void validate() const;

  /// Reflects the template across x = 0 and pairs every vertex with the
  /// template vertex within `tolerance` meters of its reflection.
  static SymmetryMap fromTemplate(const VecX& positions, double tolerance = 1e-4);
};

/// Per-vertex field mirrored across x = 0: result[i] = reflect(field[sigma(i)]).
/// Works for positions and displacement fields alike.
VecX mirrorField(const VecX& field, const SymmetryMap& symmetry);

struct ShapeSet {
  std::vector<VecX> shapes;
  std::vector<std::string> subjects;
};

/// Appends the mirror of every shape, keeping the originals first.
ShapeSet mirrorAugment(const ShapeSet& shapes, const SymmetryMap& symmetry);

struct RegionMask {
  std::string name;
  /// One weight in [0, 1] per vertex.
  VecX weights;
};

struct MaskedPca {
  std::string region;
  VecX mask;
  /// Mean of the masked shapes.
  VecX mean;
  /// Unit-norm principal directions of the masked data, one column each.
  MatX components;
  VecX singularValues;
  /// Number of shapes the decomposition was computed from.
  size_t sampleCount = 0;

  /// Per-component standard deviation, singular value / sqrt(N - 1).
  VecX standardDeviations() const;
};

/// Multiplies every coordinate of vertex i by the mask weight, centers, and
/// keeps the leading `count` right singular vectors. `warnings` receives a
/// note when retained singular values fall below 1e-10.
MaskedPca maskedPca(
    const ShapeSet& shapes,
    const RegionMask& mask,
    size_t count,
    std::vector<std::string>* warnings = nullptr);

/// Indices of components C with ||C + mirror(C)|| / ||C|| < threshold.
std::vector<size_t> detectAsymmetricComponents(
    const MatX& components,
    const SymmetryMap& symmetry,
    double threshold = 0.1);

struct IdentitySpace {
  VecX mean;
  BlendshapeBasis basis;
  /// Region name of every component.
  std::vector<std::string> regions;
};

struct RegionSelection {
  MaskedPca pca;
  size_t count = 0;
  /// Component indices (into pca.components) to leave out.
  std::vector<size_t> removed;
};

/// Sums the regional means and concatenates each region's first `count`
/// retained components. Throws DataError naming the largest deviation when
/// the masks do not sum to one per vertex (tolerance 1e-6).
IdentitySpace assembleIdentitySpace(
    const std::vector<RegionSelection>& regions,
    std::vector<std::string>* warnings = nullptr);

} // namespace rigkit
