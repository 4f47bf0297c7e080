#pragma once

#include "rigkit/corrective_training.hpp"
#include "rigkit/fitting.hpp"
#include "rigkit/identity_builder.hpp"

#include <random>
#include <string>
#include <vector>

namespace rigkit {

/// Procedural rig built from tubes around the bones.
struct SyntheticRigSpec {
  /// "humanoid" (17 joints, 21 with fingers) or "chain".
  std::string layout = "humanoid";
  size_t chainJoints = 5;
  /// Vertices per ring on limbs and chains; the humanoid torso uses twice
  /// as many. Must be even.
  size_t ringVertices = 12;
  /// Rings along a chain; 0 picks the layout default.
  size_t rings = 0;
  /// Multiplies every ring count (0.5 gives a mesh about half as dense).
  double resolution = 1.0;
  bool fingers = false;
  size_t identityComponents = 16;
  size_t expressionComponents = 4;
  bool correctives = true;
  size_t maxInfluences = 4;
  uint64_t seed = 0;

  /// Reads the fields above from a JSON object; unknown keys are an error.
  static SyntheticRigSpec fromJson(const std::string& text);
};

RigModel generateSyntheticRig(const SyntheticRigSpec& spec);

/// Joint groups that carry planted correctives in generated rigs.
std::vector<size_t> syntheticCorrectiveJoints(const RigModel& rig);

/// Vertices whose dominant joint is a head, hand or finger joint.
std::vector<bool> syntheticEvaluationMask(const RigModel& rig);

/// body / head / hand soft masks from skin weights; they sum to one.
std::vector<RegionMask> syntheticRegionMasks(const RigModel& rig);

/// Joints used as keypoints (head, hands, feet; chain ends).
std::vector<std::string> syntheticKeypointJoints(const RigModel& rig);

/// Pose parameters uniform in [-spread, spread] (root translation within
/// 5 cm), clipped to the limits; skeleton parameters zero.
VecX randomPose(const RigModel& rig, std::mt19937_64& rng, double spread);

/// Identity coefficients drawn from N(0, stddev) of the basis (unit
/// variance when the basis stores none).
VecX randomIdentity(const RigModel& rig, std::mt19937_64& rng, double scale = 1.0);

/// Area-weighted uniform samples on the mesh surface.
std::vector<Vec3> sampleSurface(const VecX& positions, const MeshTopology& topology, size_t count, std::mt19937_64& rng);

struct BenchmarkOptions {
  size_t pointCount = 800;
  /// Isotropic Gaussian noise on scan points and keypoints, meters.
  double noise = 1e-3;
  double poseSpread = 0.3;
  /// Gaussian perturbation of the initial pose rotations, radians.
  double initPoseNoise = 0.1;
  double initTranslationNoise = 0.02;
};

struct BenchmarkCase {
  ScanTarget target;
  ModelInputs truth;
  ModelInputs init;
};

/// Scan of a random (identity, pose) with an initialization near the true
/// pose and zero identity.
BenchmarkCase generateBenchmarkCase(const RigModel& rig, uint64_t seed, const BenchmarkOptions& options = {});

/// Poses paired with the offsets (residual) or posed meshes (posed) produced
/// by `planted`.
std::vector<CorrectiveSample> generateCorrectiveDataset(
    const RigModel& rig,
    const CorrectiveModel& planted,
    size_t count,
    uint64_t seed,
    CorrectiveTargetKind kind = CorrectiveTargetKind::Residual,
    double poseSpread = 0.6);

} // namespace rigkit
