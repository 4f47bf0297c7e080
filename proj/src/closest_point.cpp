#include "rigkit/closest_point.hpp"

#include "rigkit/error.hpp"

#include <algorithm>
#include <limits>

namespace rigkit {

ClosestPointResult closestPointOnTriangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  ClosestPointResult r;
  auto finish = [&](double u, double v, double w) {
    r.barycentric = Vec3(u, v, w);
    r.point = u * a + v * b + w * c;
    r.squaredDistance = (p - r.point).squaredNorm();
    return r;
  };
  if (!p.allFinite()) {
    r = finish(1, 0, 0);
    r.squaredDistance = std::numeric_limits<double>::quiet_NaN();
    return r;
  }

  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    return finish(1, 0, 0);
  }

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    return finish(0, 1, 0);
  }

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return finish(1 - v, v, 0);
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    return finish(0, 0, 1);
  }

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return finish(1 - w, 0, w);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return finish(0, 1 - w, w);
  }

  const double denom = va + vb + vc;
  if (!(std::abs(denom) > 0.0)) {
    // Zero-area triangle: best of the three edges, each handled as a
    // triangle with a repeated vertex (never reaches this branch again).
    ClosestPointResult best = closestPointOnTriangle(p, a, b, b);
    best.barycentric = Vec3(best.barycentric[0], best.barycentric[1] + best.barycentric[2], 0.0);
    ClosestPointResult e = closestPointOnTriangle(p, a, c, c);
    if (e.squaredDistance < best.squaredDistance) {
      best = e;
      best.barycentric = Vec3(e.barycentric[0], 0.0, e.barycentric[1] + e.barycentric[2]);
    }
    e = closestPointOnTriangle(p, b, c, c);
    if (e.squaredDistance < best.squaredDistance) {
      best = e;
      best.barycentric = Vec3(0.0, e.barycentric[0], e.barycentric[1] + e.barycentric[2]);
    }
    return best;
  }
  const double v = vb / denom;
  const double w = vc / denom;
  return finish(1 - v - w, v, w);
}

TriangleBvh::TriangleBvh(const VecX& positions, std::vector<Triangle> triangles)
    : triangles_(std::move(triangles)), positions_(positions) {
  require(!triangles_.empty(), "closest point: mesh has no triangles");
  const size_t nv = size_t(positions_.size() / 3);
  std::vector<Vec3> centroids(triangles_.size());
  for (size_t t = 0; t < triangles_.size(); ++t) {
    for (uint32_t v : triangles_[t]) {
      require(v < nv, "closest point: triangle index out of range");
    }
    centroids[t] = (vertexAt(positions_, triangles_[t][0]) + vertexAt(positions_, triangles_[t][1]) +
                    vertexAt(positions_, triangles_[t][2])) /
        3.0;
  }
  order_.resize(triangles_.size());
  for (size_t t = 0; t < order_.size(); ++t) {
    order_[t] = uint32_t(t);
  }
  nodes_.reserve(2 * triangles_.size());
  build(0, uint32_t(triangles_.size()), centroids);
  refit(positions_);
}

int TriangleBvh::build(uint32_t first, uint32_t count, const std::vector<Vec3>& centroids) {
  const int index = int(nodes_.size());
  nodes_.emplace_back();
  nodes_[size_t(index)].first = first;
  nodes_[size_t(index)].count = count;
  if (count <= 4) {
    return index;
  }
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (uint32_t k = first; k < first + count; ++k) {
    lo = lo.cwiseMin(centroids[order_[k]]);
    hi = hi.cwiseMax(centroids[order_[k]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const uint32_t half = count / 2;
  std::nth_element(
      order_.begin() + first,
      order_.begin() + first + half,
      order_.begin() + first + count,
      [&](uint32_t a, uint32_t b) { return centroids[a][axis] < centroids[b][axis]; });
  const int left = build(first, half, centroids);
  const int right = build(first + half, count - half, centroids);
  nodes_[size_t(index)].left = left;
  nodes_[size_t(index)].right = right;
  return index;
}

void TriangleBvh::triangleBounds(uint32_t t, Vec3& lower, Vec3& upper) const {
  for (uint32_t v : triangles_[t]) {
    const Vec3 p = vertexAt(positions_, v);
    lower = lower.cwiseMin(p);
    upper = upper.cwiseMax(p);
  }
}

void TriangleBvh::refit(const VecX& positions) {
  require(
      positions.size() == positions_.size() || nodes_.empty(), "closest point: refit with a different vertex count");
  positions_ = positions;
  // Children are always created after their parent.
  for (size_t k = nodes_.size(); k-- > 0;) {
    Node& n = nodes_[k];
    n.lower = Vec3::Constant(std::numeric_limits<double>::infinity());
    n.upper = -n.lower;
    if (n.left < 0) {
      for (uint32_t i = n.first; i < n.first + n.count; ++i) {
        triangleBounds(order_[i], n.lower, n.upper);
      }
    } else {
      const Node& l = nodes_[size_t(n.left)];
      const Node& r = nodes_[size_t(n.right)];
      n.lower = l.lower.cwiseMin(r.lower);
      n.upper = l.upper.cwiseMax(r.upper);
    }
  }
}

double TriangleBvh::boxDistance(const Node& n, const Vec3& p) const {
  const Vec3 d = (n.lower - p).cwiseMax(p - n.upper).cwiseMax(0.0);
  return d.squaredNorm();
}

ClosestPointResult TriangleBvh::closestPoint(const Vec3& p, std::optional<size_t> hint) const {
  require(!nodes_.empty(), "closest point: empty tree");
  ClosestPointResult best;
  best.squaredDistance = std::numeric_limits<double>::infinity();

  auto visitTriangle = [&](uint32_t t) {
    const auto& tri = triangles_[t];
    ClosestPointResult r = closestPointOnTriangle(
        p, vertexAt(positions_, tri[0]), vertexAt(positions_, tri[1]), vertexAt(positions_, tri[2]));
    if (r.squaredDistance < best.squaredDistance) {
      best = r;
      best.triangle = t;
    }
  };
  if (hint && *hint < triangles_.size()) {
    visitTriangle(uint32_t(*hint));
  }

  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[size_t(stack[--top])];
    if (boxDistance(n, p) > best.squaredDistance) {
      continue;
    }
    if (n.left < 0) {
      for (uint32_t i = n.first; i < n.first + n.count; ++i) {
        visitTriangle(order_[i]);
      }
      continue;
    }
    const double dl = boxDistance(nodes_[size_t(n.left)], p);
    const double dr = boxDistance(nodes_[size_t(n.right)], p);
    // Push the farther child first so the nearer one is explored first.
    if (dl <= dr) {
      if (dr <= best.squaredDistance) {
        stack[top++] = n.right;
      }
      if (dl <= best.squaredDistance) {
        stack[top++] = n.left;
      }
    } else {
      if (dl <= best.squaredDistance) {
        stack[top++] = n.left;
      }
      if (dr <= best.squaredDistance) {
        stack[top++] = n.right;
      }
    }
  }
  return best;
}

} // namespace rigkit
