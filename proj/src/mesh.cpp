#include "rigkit/mesh.hpp"

#include "rigkit/error.hpp"

#include <algorithm>
#include <map>

namespace rigkit {

void MeshTopology::validate() const {
  for (size_t f = 0; f < triangles.size(); ++f) {
    const auto& t = triangles[f];
    for (uint32_t v : t) {
      require(
          v < vertexCount,
          "mesh: triangle " + std::to_string(f) + " references vertex " + std::to_string(v) + " >= " +
              std::to_string(vertexCount));
    }
    require(
        t[0] != t[1] && t[1] != t[2] && t[0] != t[2],
        "mesh: triangle " + std::to_string(f) + " is degenerate (repeated index)");
  }
}

std::vector<std::array<uint32_t, 2>> MeshTopology::edges() const {
  std::vector<std::array<uint32_t, 2>> result;
  result.reserve(triangles.size() * 3);
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      uint32_t a = t[k];
      uint32_t b = t[(k + 1) % 3];
      if (a > b) {
        std::swap(a, b);
      }
      result.push_back({a, b});
    }
  }
  std::sort(result.begin(), result.end());
  result.erase(std::unique(result.begin(), result.end()), result.end());
  return result;
}

size_t MeshTopology::nonManifoldEdgeCount() const {
  std::map<std::array<uint32_t, 2>, int> counts;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      uint32_t a = t[k];
      uint32_t b = t[(k + 1) % 3];
      if (a > b) {
        std::swap(a, b);
      }
      ++counts[{a, b}];
    }
  }
  return size_t(std::count_if(counts.begin(), counts.end(), [](const auto& kv) { return kv.second > 2; }));
}

std::vector<std::vector<uint32_t>> MeshTopology::vertexNeighbors() const {
  std::vector<std::vector<uint32_t>> nbrs(vertexCount);
  for (const auto& e : edges()) {
    nbrs[e[0]].push_back(e[1]);
    nbrs[e[1]].push_back(e[0]);
  }
  return nbrs;
}

Eigen::SparseMatrix<double> MeshTopology::uniformLaplacian() const {
  const auto nbrs = vertexNeighbors();
  std::vector<Eigen::Triplet<double>> trips;
  for (size_t i = 0; i < vertexCount; ++i) {
    if (nbrs[i].empty()) {
      continue;
    }
    trips.emplace_back(int(i), int(i), 1.0);
    const double w = -1.0 / double(nbrs[i].size());
    for (uint32_t j : nbrs[i]) {
      trips.emplace_back(int(i), int(j), w);
    }
  }
  Eigen::SparseMatrix<double> lap(static_cast<int>(vertexCount), static_cast<int>(vertexCount));
  lap.setFromTriplets(trips.begin(), trips.end());
  return lap;
}

std::vector<Triangle> triangulatePolygon(const std::vector<uint32_t>& polygon) {
  std::vector<Triangle> result;
  for (size_t k = 1; k + 1 < polygon.size(); ++k) {
    result.push_back({polygon[0], polygon[k], polygon[k + 1]});
  }
  return result;
}

} // namespace rigkit
