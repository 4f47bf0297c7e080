#pragma once

#include "rigkit/body_model.hpp"

#include <vector>

namespace rigkit {

/// One training example: model parameters and the mesh the correctives
/// should reproduce.
struct CorrectiveSample {
  VecX pose;
  /// Residual mode: rest-space offsets (3V). Posed mode: posed vertices (3V).
  VecX target;
  /// Identity coefficients used for the posed mode base mesh; may be empty.
  VecX identity;
};

enum class CorrectiveTargetKind { Residual, Posed };

struct CorrectiveTrainingConfig {
  double l1 = 0.0;
  double learningRate = 1e-3;
  size_t batchSize = 32;
  size_t epochs = 200;
  uint64_t seed = 0;
  CorrectiveTargetKind targetKind = CorrectiveTargetKind::Residual;
  /// Mask entries that are non-positive when training starts are pinned here.
  double frozenMaskValue = -0.1;
};

struct CorrectiveTrainingResult {
  CorrectiveModel model;
  /// Mean minibatch loss per epoch.
  std::vector<double> epochLoss;
};

/// Flat parameter layout used by the trainer and gradient checks: for each
/// joint group, every MLP layer (column-major), the mask, then P (row-major).
size_t correctiveParameterCount(const CorrectiveModel& model);
VecX flattenCorrectives(const CorrectiveModel& model);
void unflattenCorrectives(const VecX& flat, CorrectiveModel& model);

/// (1/B) sum_b ||prediction_b - target_b||^2 + l1 * sum_j sum_i relu(A_j[i])
/// over the batch. The prediction is the corrective offsets (residual mode)
/// or the skinned template plus offsets (posed mode). Fills the gradient in
/// the flat layout when requested.
double correctiveTrainingLoss(
    const RigModel& rig,
    const CorrectiveModel& model,
    const std::vector<CorrectiveSample>& batch,
    double l1,
    CorrectiveTargetKind kind,
    VecX* gradient = nullptr);

/// Adam over minibatches with seed-controlled shuffling. Throws DataError on
/// an empty dataset and NumericError when the loss becomes non-finite.
CorrectiveTrainingResult trainCorrectives(
    const RigModel& rig,
    CorrectiveModel model,
    const std::vector<CorrectiveSample>& dataset,
    const CorrectiveTrainingConfig& config);

/// Mean over samples of the squared prediction error (no L1 term).
double correctiveReconstructionError(
    const RigModel& rig,
    const CorrectiveModel& model,
    const std::vector<CorrectiveSample>& samples,
    CorrectiveTargetKind kind);

} // namespace rigkit
