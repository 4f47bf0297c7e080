#include "rigkit/fitting.hpp"

#include "rigkit/adam.hpp"
#include "rigkit/error.hpp"
#include "rigkit/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace rigkit {

namespace {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

constexpr size_t kNoHint = std::numeric_limits<size_t>::max();

std::vector<ClosestPointResult> queryAll(
    const TriangleBvh& bvh,
    const std::vector<Vec3>& points,
    std::vector<size_t>* hints) {
  std::vector<ClosestPointResult> out(points.size());
  parallelFor(points.size(), [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      std::optional<size_t> hint;
      if (hints && (*hints)[i] != kNoHint) {
        hint = (*hints)[i];
      }
      out[i] = bvh.closestPoint(points[i], hint);
      if (hints) {
        (*hints)[i] = out[i].triangle;
      }
    }
  });
  return out;
}

void addSurfaceGradient(
    const std::vector<Triangle>& triangles,
    const ClosestPointResult& r,
    const Vec3& p,
    double weight,
    VecX& grad) {
  const Vec3 d = 2.0 * weight * (r.point - p);
  const auto& tri = triangles[r.triangle];
  for (int m = 0; m < 3; ++m) {
    grad.segment<3>(Eigen::Index(3 * tri[size_t(m)])) += r.barycentric[m] * d;
  }
}

} // namespace

FreeVariables FreeVariables::parse(const std::string& list) {
  FreeVariables f;
  f.pose = f.skeleton = f.identity = f.expression = f.skeletonCoeffs = f.offsets = false;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) {
      continue;
    }
    if (item == "pose") {
      f.pose = true;
    } else if (item == "skeleton") {
      f.skeleton = true;
    } else if (item == "shape" || item == "identity") {
      f.identity = true;
    } else if (item == "expression") {
      f.expression = true;
    } else if (item == "skeleton-coeffs") {
      f.skeletonCoeffs = true;
    } else if (item == "offsets") {
      f.offsets = true;
    } else {
      throw DataError("unknown free variable '" + item + "'");
    }
  }
  return f;
}

SurfaceLoss pointToSurfaceLoss(const std::vector<Vec3>& points, const VecX& meshVerts, const MeshTopology& topology) {
  require(!points.empty(), "point-to-surface loss: empty point set");
  const TriangleBvh bvh(meshVerts, topology.triangles);
  const auto hits = queryAll(bvh, points, nullptr);
  SurfaceLoss loss;
  loss.gradient = VecX::Zero(meshVerts.size());
  for (size_t i = 0; i < points.size(); ++i) {
    loss.value += hits[i].squaredDistance;
    addSurfaceGradient(topology.triangles, hits[i], points[i], 1.0, loss.gradient);
  }
  return loss;
}

double keypointLoss(
    const Skeleton& skeleton,
    const std::vector<Vec3>& jointPositions,
    const std::map<std::string, Vec3>& keypoints) {
  double total = 0.0;
  for (const auto& [name, target] : keypoints) {
    const auto j = skeleton.findJoint(name);
    require(j.has_value(), "keypoint loss: unknown joint '" + name + "'");
    total += (jointPositions.at(*j) - target).squaredNorm();
  }
  return total;
}

FitProblem::FitProblem(const RigModel& model, const ScanTarget& target, const FitConfig& config, const ModelInputs& init)
    : model_(model), config_(config), base_(init) {
  const auto& w = config_.weights;
  require(
      w.data >= 0 && w.keypoint >= 0 && w.limit >= 0 && w.offsetL2 >= 0 && w.offsetLaplacian >= 0,
      "fit: loss weights must be non-negative");
  require(config_.iterations >= 1, "fit: iterations must be >= 1");
  require(w.data == 0.0 || !target.points.empty(), "fit: scan has no points");
  require(model_.bind.inverseWorld.size() == model_.jointCount(), "fit: rig bind cache is stale (call finalize())");

  const auto& pt = model_.parameterTransform;
  if (base_.pose.size() == 0) {
    base_.pose = VecX::Zero(Eigen::Index(pt.parameterCount()));
  }
  require(size_t(base_.pose.size()) == pt.parameterCount(), "fit: initial model parameter count mismatch");
  if (base_.identity.size() == 0) {
    base_.identity = VecX::Zero(Eigen::Index(model_.identity.size()));
  }
  if (base_.expression.size() == 0) {
    base_.expression = VecX::Zero(Eigen::Index(model_.expression.size()));
  }
  require(size_t(base_.identity.size()) == model_.identity.size(), "fit: initial identity coefficient count mismatch");
  require(
      size_t(base_.expression.size()) == model_.expression.size(),
      "fit: initial expression coefficient count mismatch");

  const auto& free = config_.free;
  if (free.skeletonCoeffs) {
    require(model_.skeletonBasis.has_value(), "fit: skeleton coefficients are free but the rig has no skeleton basis");
    if (!base_.skeletonCoeffs) {
      base_.skeletonCoeffs = VecX::Zero(model_.skeletonBasis->cols());
    }
    skeletonCoeffCount_ = model_.skeletonBasis->cols();
  }
  require(
      !(free.skeleton && base_.skeletonCoeffs),
      "fit: raw skeleton parameters are free but overwritten by skeleton coefficients");

  if (free.pose) {
    freeParams_.insert(freeParams_.end(), pt.poseParameters().begin(), pt.poseParameters().end());
  }
  if (free.skeleton) {
    freeParams_.insert(freeParams_.end(), pt.skeletonParameters().begin(), pt.skeletonParameters().end());
  }
  if (free.identity) {
    identityCount_ = Eigen::Index(model_.identity.size());
    if (config_.identityComponents >= 0) {
      require(
          size_t(config_.identityComponents) <= model_.identity.size(),
          "fit: requested " + std::to_string(config_.identityComponents) + " identity components, rig has " +
              std::to_string(model_.identity.size()));
      identityCount_ = Eigen::Index(config_.identityComponents);
    }
  }
  if (free.expression) {
    expressionCount_ = Eigen::Index(model_.expression.size());
  }
  if (free.offsets) {
    offsetCount_ = Eigen::Index(3 * model_.vertexCount());
    laplacian_ = model_.topology.uniformLaplacian();
  }
  variableCount_ =
      Eigen::Index(freeParams_.size()) + identityCount_ + expressionCount_ + skeletonCoeffCount_ + offsetCount_;

  if (w.data > 0.0) {
    points_ = target.points;
    if (config_.maxScanPoints > 0 && points_.size() > config_.maxScanPoints) {
      std::vector<size_t> idx(points_.size());
      std::iota(idx.begin(), idx.end(), size_t(0));
      std::mt19937_64 rng(config_.seed);
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(config_.maxScanPoints);
      std::sort(idx.begin(), idx.end());
      std::vector<Vec3> subset;
      subset.reserve(idx.size());
      for (size_t i : idx) {
        subset.push_back(points_[i]);
      }
      points_ = std::move(subset);
    }
    hints_.assign(points_.size(), kNoHint);
  }
  for (const auto& [name, pos] : target.keypoints) {
    const auto j = model_.skeleton.findJoint(name);
    require(j.has_value(), "fit: keypoint '" + name + "' does not name a skeleton joint");
    keypoints_.emplace_back(*j, pos);
  }
}

VecX FitProblem::initialVariables() const {
  VecX x(variableCount_);
  Eigen::Index o = 0;
  for (size_t idx : freeParams_) {
    x[o++] = base_.pose[Eigen::Index(idx)];
  }
  x.segment(o, identityCount_) = base_.identity.head(identityCount_);
  o += identityCount_;
  x.segment(o, expressionCount_) = base_.expression.head(expressionCount_);
  o += expressionCount_;
  if (skeletonCoeffCount_ > 0) {
    x.segment(o, skeletonCoeffCount_) = *base_.skeletonCoeffs;
  }
  o += skeletonCoeffCount_;
  x.segment(o, offsetCount_).setZero();
  return x;
}

void FitProblem::unpack(const VecX& x, ModelInputs& inputs, VecX& offsets) const {
  require(x.size() == variableCount_, "fit: variable vector size mismatch");
  inputs = base_;
  Eigen::Index o = 0;
  for (size_t idx : freeParams_) {
    inputs.pose[Eigen::Index(idx)] = x[o++];
  }
  inputs.identity.head(identityCount_) = x.segment(o, identityCount_);
  o += identityCount_;
  inputs.expression.head(expressionCount_) = x.segment(o, expressionCount_);
  o += expressionCount_;
  if (skeletonCoeffCount_ > 0) {
    inputs.skeletonCoeffs = x.segment(o, skeletonCoeffCount_);
  }
  o += skeletonCoeffCount_;
  offsets = offsetCount_ > 0 ? VecX(x.segment(o, offsetCount_)) : VecX();
}

void FitProblem::project(VecX& x) const {
  if (config_.clampExpression && expressionCount_ > 0) {
    const Eigen::Index o = Eigen::Index(freeParams_.size()) + identityCount_;
    x.segment(o, expressionCount_) = x.segment(o, expressionCount_).cwiseMax(0.0).cwiseMin(1.0);
  }
}

VecX FitProblem::mesh(const VecX& x) const {
  ModelInputs inputs;
  VecX offsets;
  unpack(x, inputs, offsets);
  const VecX params = effectiveModelParameters(model_, inputs);
  const auto world = forwardKinematics(model_.skeleton, model_.parameterTransform.apply(params));
  VecX rest = evaluateRestMesh(model_, inputs.identity, inputs.expression, params);
  if (offsets.size() > 0) {
    rest += offsets;
  }
  return skin(model_, rest, world);
}

double FitProblem::evaluate(const VecX& x, VecX* gradient, LossBreakdown* breakdown) {
  const auto& w = config_.weights;
  const auto& pt = model_.parameterTransform;
  const size_t nv = model_.vertexCount();
  const size_t nj = model_.jointCount();

  ModelInputs inputs;
  VecX offsets;
  unpack(x, inputs, offsets);
  const VecX params = effectiveModelParameters(model_, inputs);
  const VecX jointParams = pt.apply(params);
  const SkeletonState state = computeSkeletonState(model_.skeleton, jointParams);
  VecX rest = evaluateRestMesh(model_, inputs.identity, inputs.expression, params);
  if (offsets.size() > 0) {
    rest += offsets;
  }
  const auto transforms = skinningTransforms(model_, state.world);
  const VecX posed = skin(model_, rest, state.world);

  LossBreakdown terms;
  VecX gPosed;
  WorldGradient gWorld(nj);
  VecX gParams;
  const bool wantGrad = gradient != nullptr;
  if (wantGrad) {
    gPosed = VecX::Zero(posed.size());
    gParams = VecX::Zero(params.size());
  }

  if (w.data > 0.0) {
    if (!bvhBuilt_) {
      bvh_ = TriangleBvh(posed, model_.topology.triangles);
      bvhBuilt_ = true;
    } else {
      bvh_.refit(posed);
    }
    const auto hits = queryAll(bvh_, points_, &hints_);
    for (size_t i = 0; i < points_.size(); ++i) {
      terms.data += hits[i].squaredDistance;
      if (wantGrad) {
        addSurfaceGradient(model_.topology.triangles, hits[i], points_[i], w.data, gPosed);
      }
    }
  }

  for (const auto& [j, target] : keypoints_) {
    const Vec3 d = state.world[j].translation - target;
    terms.keypoint += d.squaredNorm();
    if (wantGrad) {
      gWorld.translation[j] += 2.0 * w.keypoint * d;
    }
  }

  if (w.limit > 0.0) {
    VecX gLimit;
    terms.limit = jointLimitPenalty(pt, params, wantGrad ? &gLimit : nullptr);
    if (wantGrad) {
      gParams += w.limit * gLimit;
    }
  }

  VecX gOffsets;
  if (offsets.size() > 0) {
    Eigen::Map<const RowPoints> d(offsets.data(), Eigen::Index(nv), 3);
    const RowPoints ld = laplacian_ * d;
    terms.offsetL2 = offsets.squaredNorm();
    terms.offsetLaplacian = ld.squaredNorm();
    if (wantGrad) {
      gOffsets = 2.0 * w.offsetL2 * offsets;
      RowPoints lt = 2.0 * w.offsetLaplacian * (laplacian_.transpose() * ld);
      gOffsets += Eigen::Map<const VecX>(lt.data(), lt.size());
    }
  }

  terms.total = w.data * terms.data + w.keypoint * terms.keypoint + w.limit * terms.limit +
      (offsets.size() > 0 ? w.offsetL2 * terms.offsetL2 + w.offsetLaplacian * terms.offsetLaplacian : 0.0);
  if (breakdown) {
    *breakdown = terms;
  }
  if (!wantGrad) {
    return terms.total;
  }

  // Skinning: x_i = sum_k w_ik (L_k rest_i + t_k).
  VecX gRest = VecX::Zero(rest.size());
  std::vector<Mat3> gLinear(nj, Mat3::Zero());
  std::vector<Vec3> gTranslation(nj, Vec3::Zero());
  std::vector<Mat3> linear(nj);
  for (size_t k = 0; k < nj; ++k) {
    linear[k] = transforms[k].linear();
  }
  for (size_t i = 0; i < nv; ++i) {
    const Vec3 g = gPosed.segment<3>(Eigen::Index(3 * i));
    if (g.isZero(0.0)) {
      continue;
    }
    const Vec3 xr = rest.segment<3>(Eigen::Index(3 * i));
    Vec3 acc = Vec3::Zero();
    for (const auto& inf : model_.skinWeights.vertices[i]) {
      acc.noalias() += inf.weight * (linear[inf.joint].transpose() * g);
      gLinear[inf.joint].noalias() += inf.weight * g * xr.transpose();
      gTranslation[inf.joint] += inf.weight * g;
    }
    gRest.segment<3>(Eigen::Index(3 * i)) = acc;
  }
  // M_k = W_k * B_k^-1: linear Lw Lb, translation Lw tb + tw.
  for (size_t k = 0; k < nj; ++k) {
    const auto& inv = model_.bind.inverseWorld[k];
    gWorld.linear[k] += gLinear[k] * inv.linear().transpose() + gTranslation[k] * inv.translation.transpose();
    gWorld.translation[k] += gTranslation[k];
  }
  gParams += pt.applyTranspose(backpropagateSkeleton(model_.skeleton, jointParams, state, gWorld));
  if (!model_.correctives.empty()) {
    const VecX poseJoint = pt.applyPoseOnly(params);
    gParams += pt.applyPoseOnlyTranspose(backpropagateCorrectives(model_.correctives, poseJoint, gRest));
  }

  VecX& out = *gradient;
  out.resize(variableCount_);
  Eigen::Index o = 0;
  for (size_t idx : freeParams_) {
    out[o++] = gParams[Eigen::Index(idx)];
  }
  if (identityCount_ > 0) {
    out.segment(o, identityCount_) = model_.identity.deltas.leftCols(identityCount_).transpose() * gRest;
  }
  o += identityCount_;
  if (expressionCount_ > 0) {
    out.segment(o, expressionCount_) = model_.expression.deltas.leftCols(expressionCount_).transpose() * gRest;
  }
  o += expressionCount_;
  if (skeletonCoeffCount_ > 0) {
    const auto& cols = pt.skeletonParameters();
    VecX gSkel(Eigen::Index(cols.size()));
    for (size_t k = 0; k < cols.size(); ++k) {
      gSkel[Eigen::Index(k)] = gParams[Eigen::Index(cols[k])];
    }
    out.segment(o, skeletonCoeffCount_) = model_.skeletonBasis->transpose() * gSkel;
  }
  o += skeletonCoeffCount_;
  if (offsetCount_ > 0) {
    out.segment(o, offsetCount_) = gRest + gOffsets;
  }
  return terms.total;
}

FitResult fit(const RigModel& model, const ScanTarget& target, const FitConfig& config, const ModelInputs& init) {
  const auto start = std::chrono::steady_clock::now();
  FitProblem problem(model, target, config, init);
  VecX x = problem.initialVariables();
  problem.project(x);
  Adam adam(x.size(), AdamConfig{config.learningRate});

  FitResult result;
  result.trace.reserve(config.iterations);
  VecX lastFinite = x;
  VecX grad;
  for (size_t it = 0; it < config.iterations; ++it) {
    const double loss = problem.evaluate(x, &grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      result.diverged = true;
      x = lastFinite;
      break;
    }
    result.trace.push_back(loss);
    lastFinite = x;
    adam.step(x, grad);
    problem.project(x);
  }
  if (!result.diverged && !x.allFinite()) {
    result.diverged = true;
    x = lastFinite;
  }
  problem.evaluate(x, nullptr, &result.final);
  if (!std::isfinite(result.final.total)) {
    result.diverged = true;
    x = lastFinite;
    problem.evaluate(x, nullptr, &result.final);
  }
  problem.unpack(x, result.inputs, result.offsets);
  result.mesh = problem.mesh(x);
  result.wallSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

FitResult fit(const RigModel& model, const ScanTarget& target, const FitConfig& config) {
  return fit(model, target, config, ModelInputs::zeros(model));
}

FitResult registerNonrigid(
    const RigModel& model,
    const ScanTarget& target,
    const FitConfig& config,
    const ModelInputs& init) {
  FitConfig cfg = config;
  cfg.free.offsets = true;
  return fit(model, target, cfg, init);
}

std::vector<double> maskedSurfaceDistances(
    const std::vector<Vec3>& points,
    const VecX& meshVerts,
    const MeshTopology& topology,
    const std::vector<bool>& excludedVertices) {
  require(
      excludedVertices.empty() || excludedVertices.size() == topology.vertexCount,
      "data2model: mask length != vertex count");
  const TriangleBvh bvh(meshVerts, topology.triangles);
  const auto hits = queryAll(bvh, points, nullptr);
  std::vector<double> out(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    bool excluded = false;
    if (!excludedVertices.empty()) {
      for (uint32_t v : topology.triangles[hits[i].triangle]) {
        excluded = excluded || excludedVertices[v];
      }
    }
    out[i] = excluded ? -1.0 : std::sqrt(hits[i].squaredDistance);
  }
  return out;
}

double evaluateData2Model(
    const std::vector<Vec3>& points,
    const VecX& meshVerts,
    const MeshTopology& topology,
    const std::vector<bool>& excludedVertices) {
  require(!points.empty(), "data2model: empty point set");
  const auto dist = maskedSurfaceDistances(points, meshVerts, topology, excludedVertices);
  double sum = 0.0;
  size_t count = 0;
  for (double d : dist) {
    if (d >= 0.0) {
      sum += d;
      ++count;
    }
  }
  require(count > 0, "data2model: every scan point is masked out");
  return 1000.0 * sum / double(count);
}

} // namespace rigkit
