#include "oracles.hpp"
#include "rigkit/error.hpp"
#include "rigkit/skeleton.hpp"

#include <gtest/gtest.h>

using namespace rigkit;

namespace {

VecX randomParams(std::mt19937_64& rng, size_t joints, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VecX p(Eigen::Index(7 * joints));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p[i] = scale * u(rng);
  }
  return p;
}

} // namespace

TEST(Skeleton, ForwardKinematicsMatchesMatrixChain) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = std::uniform_int_distribution<size_t>(1, 32)(rng);
    const Skeleton skel = oracle::randomSkeleton(rng, n);
    const VecX params = randomParams(rng, n);
    const auto world = forwardKinematics(skel, params);
    const auto expected = oracle::worldMatrices(skel, params);
    for (size_t j = 0; j < n; ++j) {
      EXPECT_LT((world[j].toMatrix() - expected[j]).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Skeleton, RejectsUnorderedAndMultipleRoots) {
  std::vector<Joint> joints(3);
  joints[0].name = "a";
  joints[1].name = "b";
  joints[1].parent = 2;
  joints[2].name = "c";
  joints[2].parent = 0;
  EXPECT_THROW(Skeleton{joints}, DataError);
  std::vector<size_t> remap;
  const Skeleton sorted = Skeleton::fromUnordered(joints, &remap);
  ASSERT_EQ(sorted.jointCount(), 3u);
  EXPECT_EQ(sorted.joint(remap[1]).name, "b");
  EXPECT_EQ(*sorted.joint(remap[1]).parent, remap[2]);
  EXPECT_LT(remap[2], remap[1]);

  std::vector<Joint> twoRoots(2);
  twoRoots[0].name = "a";
  twoRoots[1].name = "b";
  EXPECT_THROW(Skeleton{twoRoots}, DataError);
}

TEST(Skeleton, ParameterTransformAndTranspose) {
  // Two joints; "twist" drives rx of both with weights 1 and 0.5.
  std::vector<Joint> joints(2);
  joints[0].name = "root";
  joints[1].name = "child";
  joints[1].parent = 0;
  const Skeleton skel(joints);
  const ParameterTransform pt(
      {"twist", "length"},
      14,
      {{kRx, 0, 1.0}, {7 + kRx, 0, 0.5}, {7 + kTx, 1, 1.0}},
      {false, true},
      {ParameterLimit{-1, 1}, std::nullopt});
  const VecX m = (VecX(2) << 0.4, 0.2).finished();
  const VecX j = pt.apply(m);
  EXPECT_DOUBLE_EQ(j[kRx], 0.4);
  EXPECT_DOUBLE_EQ(j[7 + kRx], 0.2);
  EXPECT_DOUBLE_EQ(j[7 + kTx], 0.2);
  const VecX pose = pt.applyPoseOnly(m);
  EXPECT_DOUBLE_EQ(pose[7 + kTx], 0.0);
  EXPECT_DOUBLE_EQ(pose[7 + kRx], 0.2);

  std::mt19937_64 rng(3);
  const VecX g = randomParams(rng, 2);
  EXPECT_NEAR(g.dot(pt.apply(m)), pt.applyTranspose(g).dot(m), 1e-14);
  EXPECT_NEAR(g.dot(pt.applyPoseOnly(m)), pt.applyPoseOnlyTranspose(g).dot(m), 1e-14);
  EXPECT_EQ(pt.poseParameters(), std::vector<size_t>{0});
  EXPECT_EQ(pt.skeletonParameters(), std::vector<size_t>{1});
}

TEST(Skeleton, LimitPenaltyAndGradient) {
  const ParameterTransform pt({"a", "b"}, 7, {{kRx, 0, 1.0}, {kRy, 1, 1.0}}, {false, false},
                              {ParameterLimit{-1, 1}, std::nullopt});
  VecX grad;
  const VecX inside = (VecX(2) << 0.5, 10.0).finished();
  EXPECT_EQ(jointLimitPenalty(pt, inside, &grad), 0.0);
  const VecX outside = (VecX(2) << 1.5, 10.0).finished();
  EXPECT_NEAR(jointLimitPenalty(pt, outside, &grad), 0.25, 1e-15);
  EXPECT_NEAR(grad[0], 1.0, 1e-15);
  EXPECT_EQ(grad[1], 0.0);
}

TEST(Skeleton, BackpropagationMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const size_t n = 6;
    const Skeleton skel = oracle::randomSkeleton(rng, n);
    const VecX params = randomParams(rng, n, 0.5);
    std::vector<Mat3> a(n);
    std::vector<Vec3> b(n);
    for (size_t j = 0; j < n; ++j) {
      a[j] = Mat3::NullaryExpr([&](Eigen::Index, Eigen::Index) { return g(rng); });
      b[j] = Vec3(g(rng), g(rng), g(rng));
    }
    auto loss = [&](const VecX& p) {
      const auto world = forwardKinematics(skel, p);
      double s = 0;
      for (size_t j = 0; j < n; ++j) {
        s += (a[j].array() * world[j].linear().array()).sum() + b[j].dot(world[j].translation);
      }
      return s;
    };
    const SkeletonState state = computeSkeletonState(skel, params);
    WorldGradient wg(n);
    wg.linear = a;
    wg.translation = b;
    const VecX analytic = backpropagateSkeleton(skel, params, state, wg);
    const VecX numeric = oracle::centralDifference(loss, params, 1e-6);
    EXPECT_LT(oracle::relativeError(analytic, numeric), 1e-7);
  }
}
