#pragma once

#include "rigkit/math.hpp"

#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <vector>

namespace rigkit {

using Triangle = std::array<uint32_t, 3>;

/// Triangle connectivity over `vertexCount` vertices. Vertex positions are
/// stored separately as stacked 3V vectors (x0 y0 z0 x1 ...).
struct MeshTopology {
  size_t vertexCount = 0;
  std::vector<Triangle> triangles;

  /// Throws DataError on out-of-range or repeated indices.
  void validate() const;
  /// Unique undirected edges (i < j), sorted.
  std::vector<std::array<uint32_t, 2>> edges() const;
  /// Number of edges shared by more than two triangles.
  size_t nonManifoldEdgeCount() const;
  std::vector<std::vector<uint32_t>> vertexNeighbors() const;
  /// Uniform graph Laplacian acting per vertex: (L f)_i = f_i - mean_{j~i} f_j.
  Eigen::SparseMatrix<double> uniformLaplacian() const;
};

/// Fan-triangulates a polygon (v0, vk, vk+1).
std::vector<Triangle> triangulatePolygon(const std::vector<uint32_t>& polygon);

inline Vec3 vertexAt(const VecX& positions, size_t i) {
  return positions.segment<3>(Eigen::Index(3 * i));
}

inline Eigen::Map<const Eigen::Matrix<double, 3, Eigen::Dynamic>> asPoints(const VecX& positions) {
  return {positions.data(), 3, positions.size() / 3};
}

} // namespace rigkit
