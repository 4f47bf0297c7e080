#include "rigkit/lod_transfer.hpp"

#include "rigkit/closest_point.hpp"
#include "rigkit/error.hpp"
#include "rigkit/parallel.hpp"

#include <algorithm>
#include <map>

namespace rigkit {

double BarycentricMap::maxDistance() const {
  return distances.empty() ? 0.0 : *std::max_element(distances.begin(), distances.end());
}

BarycentricMap buildBarycentricMap(const VecX& sourcePositions, const MeshTopology& source, const VecX& targetPositions) {
  require(!source.triangles.empty(), "barycentric map: source mesh has no triangles");
  require(size_t(sourcePositions.size()) == 3 * source.vertexCount, "barycentric map: source positions length != 3V");
  require(targetPositions.size() % 3 == 0, "barycentric map: target positions length is not a multiple of 3");
  const TriangleBvh bvh(sourcePositions, source.triangles);
  const size_t nt = size_t(targetPositions.size() / 3);
  BarycentricMap map;
  map.sourceVertexCount = source.vertexCount;
  map.triangles.resize(nt);
  map.weights.resize(nt);
  map.distances.resize(nt);
  parallelFor(nt, [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const auto hit = bvh.closestPoint(vertexAt(targetPositions, i));
      map.triangles[i] = source.triangles[hit.triangle];
      map.weights[i] = hit.barycentric;
      map.distances[i] = std::sqrt(hit.squaredDistance);
    }
  });
  return map;
}

VecX transferField(const BarycentricMap& map, const VecX& field, size_t dim) {
  require(dim >= 1, "transfer: field dimension must be positive");
  require(
      size_t(field.size()) == dim * map.sourceVertexCount,
      "transfer: field length " + std::to_string(field.size()) + " != " + std::to_string(dim) + " x source vertices " +
          std::to_string(map.sourceVertexCount));
  const Eigen::Index d = Eigen::Index(dim);
  VecX out(Eigen::Index(dim * map.targetVertexCount()));
  for (size_t i = 0; i < map.targetVertexCount(); ++i) {
    const auto& t = map.triangles[i];
    const Vec3& b = map.weights[i];
    out.segment(Eigen::Index(i) * d, d) = b[0] * field.segment(Eigen::Index(t[0]) * d, d) +
        b[1] * field.segment(Eigen::Index(t[1]) * d, d) + b[2] * field.segment(Eigen::Index(t[2]) * d, d);
  }
  return out;
}

MatX transferColumns(const BarycentricMap& map, const MatX& field, size_t dim) {
  MatX out(Eigen::Index(dim * map.targetVertexCount()), field.cols());
  for (Eigen::Index c = 0; c < field.cols(); ++c) {
    out.col(c) = transferField(map, field.col(c), dim);
  }
  return out;
}

SkinWeights transferSkinWeights(const BarycentricMap& map, const SkinWeights& source, size_t maxInfluences, size_t* truncated) {
  require(source.vertexCount() == map.sourceVertexCount, "transfer: skin weights vertex count != source vertices");
  std::vector<std::vector<Influence>> raw(map.targetVertexCount());
  for (size_t i = 0; i < map.targetVertexCount(); ++i) {
    std::map<uint32_t, double> acc;
    for (int m = 0; m < 3; ++m) {
      for (const auto& inf : source.vertices[map.triangles[i][size_t(m)]]) {
        acc[inf.joint] += map.weights[i][m] * inf.weight;
      }
    }
    for (const auto& [joint, w] : acc) {
      raw[i].push_back({joint, w});
    }
  }
  return capInfluences(std::move(raw), maxInfluences, truncated);
}

namespace {

// f <- f - 0.5 * L f, per coordinate of a dim-valued vertex field.
VecX smoothField(const Eigen::SparseMatrix<double>& lap, const VecX& field, size_t dim) {
  const Eigen::Index nv = lap.rows();
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> f(
      field.data(), nv, Eigen::Index(dim));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> s = f - 0.5 * (lap * f);
  return Eigen::Map<const VecX>(s.data(), s.size());
}

} // namespace

RigModel transferRig(
    const RigModel& source,
    const MeshTopology& targetTopology,
    const VecX& targetPositions,
    const LodTransferOptions& options,
    std::vector<std::string>* warnings) {
  targetTopology.validate();
  require(
      size_t(targetPositions.size()) == 3 * targetTopology.vertexCount,
      "lod transfer: target positions length != 3 x target vertex count");
  const auto map = buildBarycentricMap(source.restPositions, source.topology, targetPositions);
  Eigen::SparseMatrix<double> lap;
  if (options.smooth) {
    lap = targetTopology.uniformLaplacian();
  }
  auto transferBasis = [&](const BlendshapeBasis& b) {
    BlendshapeBasis out = b;
    out.deltas = transferColumns(map, b.deltas, 3);
    if (options.smooth) {
      for (Eigen::Index c = 0; c < out.deltas.cols(); ++c) {
        out.deltas.col(c) = smoothField(lap, out.deltas.col(c), 3);
      }
    }
    return out;
  };

  RigModel target;
  target.topology = targetTopology;
  target.restPositions = targetPositions;
  target.identity = transferBasis(source.identity);
  target.expression = transferBasis(source.expression);
  target.skeleton = source.skeleton;
  target.parameterTransform = source.parameterTransform;
  target.skeletonBasis = source.skeletonBasis;
  target.lods = source.lods;
  target.extras = source.extras;

  const size_t cap = options.maxInfluences > 0 ? options.maxInfluences : source.skinWeights.maxInfluences;
  size_t truncated = 0;
  target.skinWeights = transferSkinWeights(map, source.skinWeights, cap, &truncated);
  if (truncated > 0 && warnings) {
    warnings->push_back(
        "lod transfer: " + std::to_string(truncated) + " vertices exceeded " + std::to_string(cap) +
        " influences and were truncated");
  }

  target.correctives = source.correctives;
  for (auto& jc : target.correctives.joints) {
    const size_t c = jc.embeddingSize();
    // P rows of one vertex form a 3c-valued field.
    VecX p(jc.weights.size());
    Eigen::Map<RowMatX>(p.data(), jc.weights.rows(), jc.weights.cols()) = jc.weights;
    VecX tp = transferField(map, p, 3 * c);
    if (options.smooth) {
      tp = smoothField(lap, tp, 3 * c);
    }
    jc.weights = Eigen::Map<const RowMatX>(tp.data(), Eigen::Index(3 * map.targetVertexCount()), Eigen::Index(c));
    if (options.reinitMasks) {
      jc.mask = initMask(targetTopology, targetPositions, target.skinWeights, target.skeleton, jc.joint);
    } else {
      jc.mask = transferField(map, jc.mask, 1);
      if (options.smooth) {
        jc.mask = smoothField(lap, jc.mask, 1);
      }
    }
  }
  target.finalize();
  return target;
}

} // namespace rigkit
