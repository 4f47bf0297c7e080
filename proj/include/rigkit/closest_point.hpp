#pragma once

#include "rigkit/mesh.hpp"

#include <optional>
#include <vector>

namespace rigkit {

struct ClosestPointResult {
  size_t triangle = 0;
  /// Weights of the triangle's three vertices; non-negative, unit sum.
  Vec3 barycentric = Vec3::Zero();
  Vec3 point = Vec3::Zero();
  double squaredDistance = 0.0;
};

/// Closest point on triangle (a, b, c) by Voronoi-region classification.
ClosestPointResult closestPointOnTriangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Axis-aligned bounding-box tree over mesh triangles for exact closest-point
/// queries. The tree topology is fixed at construction; refit() updates the
/// boxes after the vertices move.
class TriangleBvh {
 public:
  TriangleBvh() = default;
  /// Throws DataError if there are no triangles.
  TriangleBvh(const VecX& positions, std::vector<Triangle> triangles);

  void refit(const VecX& positions);

  /// `hint` seeds the search with a previously closest triangle, which only
  /// affects speed.
  ClosestPointResult closestPoint(const Vec3& p, std::optional<size_t> hint = std::nullopt) const;

  size_t triangleCount() const {
    return triangles_.size();
  }
  const std::vector<Triangle>& triangles() const {
    return triangles_;
  }

 private:
  struct Node {
    Vec3 lower;
    Vec3 upper;
    int left = -1;
    int right = -1;
    uint32_t first = 0;
    uint32_t count = 0;
  };

  int build(uint32_t first, uint32_t count, const std::vector<Vec3>& centroids);
  double boxDistance(const Node& n, const Vec3& p) const;
  void triangleBounds(uint32_t t, Vec3& lower, Vec3& upper) const;

  std::vector<Node> nodes_;
  std::vector<uint32_t> order_;
  std::vector<Triangle> triangles_;
  VecX positions_;
};

} // namespace rigkit
