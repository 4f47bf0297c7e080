#include "rigkit/error.hpp"
#include "rigkit/identity_builder.hpp"
#include "rigkit/synthetic.hpp"

#include <gtest/gtest.h>

using namespace rigkit;

namespace {

const RigModel& humanoid() {
  static const RigModel rig = generateSyntheticRig({});
  return rig;
}

ShapeSet randomShapes(const RigModel& rig, size_t n, std::mt19937_64& rng, double asymmetry) {
  std::normal_distribution<double> g(0.0, 1.0);
  ShapeSet set;
  for (size_t s = 0; s < n; ++s) {
    VecX shape = rig.restPositions + rig.identity.apply(randomIdentity(rig, rng));
    shape += asymmetry * VecX::NullaryExpr(shape.size(), [&](Eigen::Index) { return g(rng); });
    set.shapes.push_back(shape);
    set.subjects.push_back("s" + std::to_string(s));
  }
  return set;
}

} // namespace

TEST(Identity, SymmetryMapOfSymmetricTemplate) {
  const auto& rig = humanoid();
  const SymmetryMap sym = SymmetryMap::fromTemplate(rig.restPositions);
  ASSERT_EQ(sym.size(), rig.vertexCount());
  sym.validate();
  EXPECT_LT((mirrorField(rig.restPositions, sym) - rig.restPositions).cwiseAbs().maxCoeff(), 1e-12);
  std::mt19937_64 rng(1);
  const VecX f = rig.identity.apply(randomIdentity(rig, rng)) + VecX::Random(rig.restPositions.size());
  EXPECT_LT((mirrorField(mirrorField(f, sym), sym) - f).cwiseAbs().maxCoeff(), 1e-15);

  VecX broken = rig.restPositions;
  broken[0] += 0.01;
  EXPECT_THROW(SymmetryMap::fromTemplate(broken), DataError);
}

TEST(Identity, MirrorAugmentedMeanIsSymmetric) {
  const auto& rig = humanoid();
  const SymmetryMap sym = SymmetryMap::fromTemplate(rig.restPositions);
  std::mt19937_64 rng(2);
  const ShapeSet aug = mirrorAugment(randomShapes(rig, 6, rng, 0.005), sym);
  ASSERT_EQ(aug.shapes.size(), 12u);
  VecX mean = VecX::Zero(rig.restPositions.size());
  for (const auto& s : aug.shapes) {
    mean += s / double(aug.shapes.size());
  }
  EXPECT_LT((mean - mirrorField(mean, sym)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Identity, MaskedPcaIsOrthonormalAndReconstructs) {
  const auto& rig = humanoid();
  std::mt19937_64 rng(3);
  const ShapeSet shapes = randomShapes(rig, 12, rng, 0.001);
  const auto masks = syntheticRegionMasks(rig);
  for (const auto& mask : masks) {
    const MaskedPca pca = maskedPca(shapes, mask, 11);
    const MatX gram = pca.components.transpose() * pca.components;
    EXPECT_LT((gram - MatX::Identity(11, 11)).cwiseAbs().maxCoeff(), 1e-8);
    for (const auto& s : shapes.shapes) {
      VecX masked = s;
      for (size_t i = 0; i < rig.vertexCount(); ++i) {
        masked.segment<3>(Eigen::Index(3 * i)) *= mask.weights[Eigen::Index(i)];
      }
      const VecX centered = masked - pca.mean;
      const VecX rebuilt = pca.components * (pca.components.transpose() * centered);
      EXPECT_LT((rebuilt - centered).norm(), 1e-8);
    }
    const VecX sd = pca.standardDeviations();
    for (Eigen::Index k = 1; k < sd.size(); ++k) {
      EXPECT_LE(sd[k], sd[k - 1]);
    }
  }
  EXPECT_THROW(maskedPca(shapes, masks[0], 12), DataError);
}

TEST(Identity, DetectsPlantedAntisymmetricComponent) {
  const auto& rig = humanoid();
  const SymmetryMap sym = SymmetryMap::fromTemplate(rig.restPositions);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  VecX h = VecX::NullaryExpr(rig.restPositions.size(), [&](Eigen::Index) { return g(rng); });
  VecX anti = h - mirrorField(h, sym);
  anti.normalize();
  ShapeSet shapes = randomShapes(rig, 10, rng, 0.0);
  for (auto& s : shapes.shapes) {
    s += 0.3 * g(rng) * anti;
  }
  const ShapeSet aug = mirrorAugment(shapes, sym);
  const RegionMask all{"all", VecX::Ones(Eigen::Index(rig.vertexCount()))};
  const MaskedPca pca = maskedPca(aug, all, 12);
  const auto flagged = detectAsymmetricComponents(pca.components, sym);
  ASSERT_EQ(flagged.size(), 1u);
  EXPECT_GT(std::abs(pca.components.col(Eigen::Index(flagged[0])).dot(anti)), 1 - 1e-6);
}

TEST(Identity, AssemblyRequiresPartitionOfUnity) {
  const auto& rig = humanoid();
  std::mt19937_64 rng(5);
  const ShapeSet shapes = randomShapes(rig, 8, rng, 0.001);
  const auto masks = syntheticRegionMasks(rig);
  std::vector<RegionSelection> regions;
  for (const auto& m : masks) {
    RegionSelection sel;
    sel.pca = maskedPca(shapes, m, 5);
    sel.count = 3;
    regions.push_back(sel);
  }
  regions[0].removed = {0};
  std::vector<std::string> warnings;
  const IdentitySpace space = assembleIdentitySpace(regions, &warnings);
  EXPECT_EQ(space.basis.size(), 3 * regions.size());
  EXPECT_EQ(space.regions.size(), space.basis.size());
  VecX mean = VecX::Zero(rig.restPositions.size());
  for (const auto& s : shapes.shapes) {
    mean += s / double(shapes.shapes.size());
  }
  EXPECT_LT((space.mean - mean).cwiseAbs().maxCoeff(), 1e-12);
  // The removed component is skipped, not counted.
  EXPECT_LT((space.basis.deltas.col(0) - regions[0].pca.components.col(1)).norm(), 1e-15);

  regions[0].count = 10;
  warnings.clear();
  assembleIdentitySpace(regions, &warnings);
  EXPECT_FALSE(warnings.empty());

  regions[1].pca.mask *= 0.5;
  EXPECT_THROW(assembleIdentitySpace(regions), DataError);
}
