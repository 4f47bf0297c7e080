#pragma once

#include "rigkit/body_model.hpp"
#include "rigkit/closest_point.hpp"

#include <map>
#include <string>
#include <vector>

namespace rigkit {

/// Point cloud to fit, with optional 3D keypoints (joint name -> position)
/// and an evaluation mask over model vertices (true = excluded).
struct ScanTarget {
  std::vector<Vec3> points;
  std::map<std::string, Vec3> keypoints;
  std::vector<bool> excludedVertices;
};

struct LossWeights {
  double data = 1.0;
  double keypoint = 1.0;
  double limit = 0.1;
  double offsetL2 = 1.0;
  double offsetLaplacian = 10.0;
};

/// Which variables the optimizer may change.
struct FreeVariables {
  bool pose = true;
  bool skeleton = false;
  bool identity = true;
  bool expression = false;
  bool skeletonCoeffs = false;
  bool offsets = false;

  /// Comma list of pose, skeleton, shape (identity), expression,
  /// skeleton-coeffs, offsets. Throws DataError on unknown names.
  static FreeVariables parse(const std::string& list);
};

struct FitConfig {
  size_t iterations = 2500;
  double learningRate = 0.01;
  LossWeights weights;
  FreeVariables free;
  uint64_t seed = 0;
  /// Number of leading identity components to optimize; -1 means all.
  long identityComponents = -1;
  /// Project expression coefficients onto [0, 1] after every step.
  bool clampExpression = false;
  /// Random subset of scan points used by the data term; 0 keeps all.
  size_t maxScanPoints = 0;
};

struct LossBreakdown {
  double data = 0.0;
  double keypoint = 0.0;
  double limit = 0.0;
  double offsetL2 = 0.0;
  double offsetLaplacian = 0.0;
  double total = 0.0;
};

struct FitResult {
  ModelInputs inputs;
  /// Per-vertex rest offsets (3V); empty unless offsets were free.
  VecX offsets;
  std::vector<double> trace;
  LossBreakdown final;
  double wallSeconds = 0.0;
  bool diverged = false;
  /// Posed mesh at the returned parameters.
  VecX mesh;
};

/// Sum of squared distances from each point to the closest surface point,
/// and its gradient w.r.t. the mesh vertices with correspondences fixed.
struct SurfaceLoss {
  double value = 0.0;
  VecX gradient;
};
SurfaceLoss pointToSurfaceLoss(const std::vector<Vec3>& points, const VecX& meshVerts, const MeshTopology& topology);

/// Sum of squared distances between named joint positions and keypoints.
double keypointLoss(
    const Skeleton& skeleton,
    const std::vector<Vec3>& jointPositions,
    const std::map<std::string, Vec3>& keypoints);

/// The fitting objective over a flat vector of free variables. Layout:
/// free pose parameters, free skeleton parameters, identity, expression,
/// skeleton coefficients, offsets (3V).
class FitProblem {
 public:
  /// Throws DataError when the free flags cannot be honored by the model
  /// (e.g. skeleton coefficients without a skeleton basis).
  FitProblem(const RigModel& model, const ScanTarget& target, const FitConfig& config, const ModelInputs& init);

  size_t variableCount() const {
    return size_t(variableCount_);
  }
  VecX initialVariables() const;
  void unpack(const VecX& x, ModelInputs& inputs, VecX& offsets) const;

  /// Loss at x; fills the gradient (same layout as x) when requested.
  /// Closest-point correspondences are recomputed on every call.
  double evaluate(const VecX& x, VecX* gradient = nullptr, LossBreakdown* breakdown = nullptr);

  /// Posed mesh at x.
  VecX mesh(const VecX& x) const;

  /// Applies fit-time constraints (expression clamp) in place.
  void project(VecX& x) const;

 private:
  const RigModel& model_;
  FitConfig config_;
  ModelInputs base_;
  std::vector<Vec3> points_;
  std::vector<std::pair<size_t, Vec3>> keypoints_;
  std::vector<size_t> freeParams_;
  Eigen::Index identityCount_ = 0;
  Eigen::Index expressionCount_ = 0;
  Eigen::Index skeletonCoeffCount_ = 0;
  Eigen::Index offsetCount_ = 0;
  Eigen::Index variableCount_ = 0;
  Eigen::SparseMatrix<double> laplacian_;
  TriangleBvh bvh_;
  bool bvhBuilt_ = false;
  std::vector<size_t> hints_;
};

/// Adam on FitProblem. Stops at the first non-finite loss, returning the
/// last finite state with `diverged` set.
FitResult fit(const RigModel& model, const ScanTarget& target, const FitConfig& config, const ModelInputs& init);
FitResult fit(const RigModel& model, const ScanTarget& target, const FitConfig& config);

/// fit() with per-vertex rest offsets forced free.
FitResult registerNonrigid(
    const RigModel& model,
    const ScanTarget& target,
    const FitConfig& config,
    const ModelInputs& init);

/// Per-point unsquared distance to the mesh; entries for points whose
/// closest triangle touches an excluded vertex are negative.
std::vector<double> maskedSurfaceDistances(
    const std::vector<Vec3>& points,
    const VecX& meshVerts,
    const MeshTopology& topology,
    const std::vector<bool>& excludedVertices);

/// Mean distance in millimeters from the scan points to the closest point of
/// the mesh, skipping points whose closest triangle touches an excluded
/// vertex. Throws DataError when every point is excluded.
double evaluateData2Model(
    const std::vector<Vec3>& points,
    const VecX& meshVerts,
    const MeshTopology& topology,
    const std::vector<bool>& excludedVertices = {});

} // namespace rigkit
