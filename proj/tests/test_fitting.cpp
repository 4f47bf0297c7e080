#include "oracles.hpp"
#include "rigkit/error.hpp"
#include "rigkit/fitting.hpp"
#include "rigkit/synthetic.hpp"

#include <gtest/gtest.h>

using namespace rigkit;

namespace {

const RigModel& tinyRig() {
  static const RigModel rig = [] {
    SyntheticRigSpec spec;
    spec.layout = "chain";
    spec.ringVertices = 6;
    spec.rings = 7;
    spec.identityComponents = 4;
    spec.expressionComponents = 2;
    return generateSyntheticRig(spec);
  }();
  return rig;
}

} // namespace

TEST(Fitting, FreeVariableParsing) {
  const auto f = FreeVariables::parse("pose,shape,offsets");
  EXPECT_TRUE(f.pose);
  EXPECT_TRUE(f.identity);
  EXPECT_TRUE(f.offsets);
  EXPECT_FALSE(f.skeleton);
  EXPECT_TRUE(FreeVariables::parse("identity").identity);
  EXPECT_THROW(FreeVariables::parse("pose,bogus"), DataError);
}

TEST(Fitting, PointToSurfaceMatchesBruteForce) {
  const auto& rig = tinyRig();
  std::mt19937_64 rng(1);
  const auto points = sampleSurface(rig.restPositions * 1.1, rig.topology, 50, rng);
  const auto loss = pointToSurfaceLoss(points, rig.restPositions, rig.topology);
  double expected = 0;
  for (const auto& p : points) {
    expected += oracle::squaredDistanceToMesh(p, rig.restPositions, rig.topology.triangles);
  }
  EXPECT_NEAR(loss.value, expected, 1e-12);
}

TEST(Fitting, FullLossGradientMatchesFiniteDifferences) {
  const auto& rig = tinyRig();
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    ModelInputs truth = ModelInputs::zeros(rig);
    truth.identity = randomIdentity(rig, rng);
    truth.pose = randomPose(rig, rng, 0.4);
    ScanTarget target;
    target.points = sampleSurface(evaluate(rig, truth), rig.topology, 60, rng);
    target.keypoints["j4"] = Vec3(0.1, 0.9, 0.05);
    FitConfig cfg;
    cfg.free = FreeVariables::parse("pose,skeleton,shape,expression,offsets");
    ModelInputs init = ModelInputs::zeros(rig);
    init.pose = randomPose(rig, rng, 0.4);
    init.pose[Eigen::Index(*rig.parameterTransform.findParameter("j1_rx"))] = 1.7; // beyond the limit
    FitProblem problem(rig, target, cfg, init);
    std::normal_distribution<double> g(0.0, 0.01);
    VecX x = problem.initialVariables();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] += g(rng);
    }
    VecX grad;
    problem.evaluate(x, &grad);
    const VecX fd = oracle::centralDifference([&](const VecX& v) { return problem.evaluate(v); }, x, 1e-6);
    EXPECT_LT(oracle::relativeError(grad, fd), 1e-4);
  }
}

TEST(Fitting, TraceLengthAndRecovery) {
  const auto& rig = tinyRig();
  std::mt19937_64 rng(3);
  ModelInputs truth = ModelInputs::zeros(rig);
  truth.identity = randomIdentity(rig, rng);
  ScanTarget target;
  target.points = sampleSurface(evaluate(rig, truth), rig.topology, 400, rng);
  FitConfig cfg;
  cfg.iterations = 1;
  EXPECT_EQ(fit(rig, target, cfg).trace.size(), 1u);
  cfg.iterations = 600;
  cfg.free = FreeVariables::parse("shape");
  const FitResult r = fit(rig, target, cfg);
  ASSERT_EQ(r.trace.size(), 600u);
  EXPECT_LT(r.trace.back(), 0.01 * r.trace.front());
  EXPECT_LT(evaluateData2Model(target.points, r.mesh, rig.topology), 1.0);
}

TEST(Fitting, IdentitySubsetKeepsRemainingCoefficients) {
  const auto& rig = tinyRig();
  std::mt19937_64 rng(4);
  ScanTarget target;
  target.points = sampleSurface(rig.restPositions, rig.topology, 100, rng);
  FitConfig cfg;
  cfg.iterations = 20;
  cfg.identityComponents = 2;
  ModelInputs init = ModelInputs::zeros(rig);
  init.identity = VecX::Constant(4, 0.05);
  const FitResult r = fit(rig, target, cfg, init);
  EXPECT_EQ(r.inputs.identity[2], 0.05);
  EXPECT_EQ(r.inputs.identity[3], 0.05);
  EXPECT_NE(r.inputs.identity[0], 0.05);
}

TEST(Fitting, DivergenceReturnsLastFiniteState) {
  const auto& rig = tinyRig();
  std::mt19937_64 rng(5);
  ScanTarget target;
  target.points = sampleSurface(rig.restPositions, rig.topology, 100, rng);
  target.points[0] = Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0);
  FitConfig cfg;
  cfg.iterations = 10;
  const FitResult r = fit(rig, target, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.mesh.allFinite());
}

TEST(Fitting, MaskedDistancesSkipExcludedRegions) {
  const auto& rig = tinyRig();
  std::vector<bool> excluded(rig.vertexCount(), true);
  std::vector<Vec3> points{vertexAt(rig.restPositions, 0) * 1.01};
  EXPECT_LT(maskedSurfaceDistances(points, rig.restPositions, rig.topology, excluded)[0], 0.0);
  excluded.assign(rig.vertexCount(), false);
  EXPECT_GE(maskedSurfaceDistances(points, rig.restPositions, rig.topology, excluded)[0], 0.0);
}
