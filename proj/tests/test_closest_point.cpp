#include "oracles.hpp"
#include "rigkit/closest_point.hpp"
#include "rigkit/synthetic.hpp"

#include <gtest/gtest.h>

using namespace rigkit;

TEST(ClosestPoint, TriangleRegions) {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  const auto inside = closestPointOnTriangle(Vec3(0.2, 0.2, 1), a, b, c);
  EXPECT_LT((inside.point - Vec3(0.2, 0.2, 0)).norm(), 1e-15);
  EXPECT_NEAR(inside.squaredDistance, 1.0, 1e-15);
  const auto vertex = closestPointOnTriangle(Vec3(-1, -1, 0), a, b, c);
  EXPECT_LT((vertex.point - a).norm(), 1e-15);
  EXPECT_NEAR(vertex.barycentric[0], 1.0, 1e-15);
  const auto edge = closestPointOnTriangle(Vec3(1, 1, 0), a, b, c);
  EXPECT_LT((edge.point - Vec3(0.5, 0.5, 0)).norm(), 1e-15);
  const Vec3 rebuilt = edge.barycentric[0] * a + edge.barycentric[1] * b + edge.barycentric[2] * c;
  EXPECT_LT((rebuilt - edge.point).norm(), 1e-15);
}

TEST(ClosestPoint, BvhMatchesBruteForce) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    // Random triangle soup plus a real mesh.
    const size_t nt = 300;
    VecX pos(Eigen::Index(9 * nt));
    std::vector<Triangle> tris;
    for (size_t t = 0; t < nt; ++t) {
      const Vec3 center(g(rng), g(rng), g(rng));
      for (int k = 0; k < 3; ++k) {
        pos.segment<3>(Eigen::Index(9 * t + 3 * size_t(k))) = center + 0.2 * Vec3(g(rng), g(rng), g(rng));
      }
      tris.push_back({uint32_t(3 * t), uint32_t(3 * t + 1), uint32_t(3 * t + 2)});
    }
    const TriangleBvh bvh(pos, tris);
    for (int q = 0; q < 200; ++q) {
      const Vec3 p = 1.5 * Vec3(g(rng), g(rng), g(rng));
      const auto hit = bvh.closestPoint(p);
      EXPECT_NEAR(hit.squaredDistance, oracle::squaredDistanceToMesh(p, pos, tris), 1e-12);
      EXPECT_NEAR((hit.point - p).squaredNorm(), hit.squaredDistance, 1e-12);
    }
  }
}

TEST(ClosestPoint, RefitAndHintsKeepExactness) {
  SyntheticRigSpec spec;
  spec.layout = "chain";
  spec.rings = 20;
  const RigModel rig = generateSyntheticRig(spec);
  TriangleBvh bvh(rig.restPositions, rig.topology.triangles);
  std::mt19937_64 rng(3);
  ModelInputs in = ModelInputs::zeros(rig);
  in.pose = randomPose(rig, rng, 0.8);
  const VecX posed = evaluate(rig, in);
  bvh.refit(posed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int q = 0; q < 100; ++q) {
    const Vec3 p = vertexAt(posed, (size_t(q) * 7) % rig.vertexCount()) + Vec3(u(rng), u(rng), u(rng));
    const double expected = oracle::squaredDistanceToMesh(p, posed, rig.topology.triangles);
    EXPECT_NEAR(bvh.closestPoint(p).squaredDistance, expected, 1e-12);
    EXPECT_NEAR(bvh.closestPoint(p, size_t(q)).squaredDistance, expected, 1e-12);
  }
}
