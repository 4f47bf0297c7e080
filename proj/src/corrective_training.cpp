#include "rigkit/corrective_training.hpp"

#include "rigkit/adam.hpp"
#include "rigkit/error.hpp"
#include "rigkit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rigkit {

namespace {

struct GroupLayout {
  std::vector<Eigen::Index> layers;
  Eigen::Index mask = 0;
  Eigen::Index weights = 0;
  Eigen::Index end = 0;
};

std::vector<GroupLayout> layout(const CorrectiveModel& model) {
  std::vector<GroupLayout> out;
  Eigen::Index o = 0;
  for (const auto& jc : model.joints) {
    GroupLayout g;
    for (const auto& l : jc.mlp.layers) {
      g.layers.push_back(o);
      o += l.size();
    }
    g.mask = o;
    o += jc.mask.size();
    g.weights = o;
    o += jc.weights.size();
    g.end = o;
    out.push_back(std::move(g));
  }
  return out;
}

// Per-sample quantities that do not depend on the trainable parameters.
struct Prepared {
  std::vector<std::vector<VecX>> features; // [sample][group]
  std::vector<std::vector<Mat3>> linear;   // posed mode: skinning linear parts
  std::vector<VecX> basePosed;             // posed mode: skinned template
};

Prepared prepare(
    const RigModel& rig,
    const CorrectiveModel& model,
    const std::vector<CorrectiveSample>& samples,
    CorrectiveTargetKind kind) {
  const auto& pt = rig.parameterTransform;
  const size_t nv = rig.vertexCount();
  Prepared prep;
  prep.features.resize(samples.size());
  if (kind == CorrectiveTargetKind::Posed) {
    prep.linear.resize(samples.size());
    prep.basePosed.resize(samples.size());
  }
  for (size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    require(size_t(s.pose.size()) == pt.parameterCount(), "corrective training: sample pose size mismatch");
    require(size_t(s.target.size()) == 3 * nv, "corrective training: sample target length != 3V");
    const VecX poseJoint = pt.applyPoseOnly(s.pose);
    for (const auto& jc : model.joints) {
      prep.features[b].push_back(poseFeatures(jc.neighborhood, poseJoint));
    }
    if (kind == CorrectiveTargetKind::Posed) {
      const auto world = forwardKinematics(rig.skeleton, pt.apply(s.pose));
      VecX rest = rig.restPositions;
      if (s.identity.size() > 0) {
        rest += rig.identity.apply(s.identity);
      }
      prep.basePosed[b] = skin(rig, rest, world);
      for (const auto& m : skinningTransforms(rig, world)) {
        prep.linear[b].push_back(m.linear());
      }
    }
  }
  return prep;
}

double lossAndGradient(
    const RigModel& rig,
    const CorrectiveModel& model,
    const Prepared& prep,
    const std::vector<CorrectiveSample>& samples,
    const std::vector<size_t>& batch,
    double l1,
    CorrectiveTargetKind kind,
    VecX* gradient) {
  const size_t nv = rig.vertexCount();
  const size_t ng = model.joints.size();
  const size_t nb = batch.size();
  const double invB = 1.0 / double(nb);

  // Forward: embeddings, prediction and the gradient w.r.t. offsets.
  std::vector<std::vector<std::vector<VecX>>> inputs(nb, std::vector<std::vector<VecX>>(ng));
  std::vector<std::vector<std::vector<VecX>>> pre(nb, std::vector<std::vector<VecX>>(ng));
  std::vector<std::vector<VecX>> embed(nb, std::vector<VecX>(ng));
  std::vector<VecX> offsetGrad(nb);
  std::vector<double> sampleLoss(nb, 0.0);
  parallelFor(
      nb,
      [&](size_t begin, size_t end) {
        for (size_t q = begin; q < end; ++q) {
          const size_t b = batch[q];
          VecX offsets = VecX::Zero(Eigen::Index(3 * nv));
          for (size_t g = 0; g < ng; ++g) {
            const auto& jc = model.joints[g];
            embed[q][g] = jc.mlp.forward(prep.features[b][g], &inputs[q][g], &pre[q][g]);
            const VecX& e = embed[q][g];
            for (Eigen::Index i = 0; i < jc.mask.size(); ++i) {
              const double gate = jc.mask[i];
              if (gate > 0.0) {
                offsets.segment<3>(3 * i).noalias() += gate * (jc.weights.middleRows<3>(3 * i) * e);
              }
            }
          }
          VecX r;
          if (kind == CorrectiveTargetKind::Residual) {
            r = offsets - samples[b].target;
          } else {
            r = prep.basePosed[b] - samples[b].target;
            for (size_t i = 0; i < nv; ++i) {
              Mat3 blend = Mat3::Zero();
              for (const auto& inf : rig.skinWeights.vertices[i]) {
                blend += inf.weight * prep.linear[b][inf.joint];
              }
              r.segment<3>(Eigen::Index(3 * i)) += blend * offsets.segment<3>(Eigen::Index(3 * i));
            }
          }
          sampleLoss[q] = r.squaredNorm() * invB;
          if (!gradient) {
            continue;
          }
          if (kind == CorrectiveTargetKind::Residual) {
            offsetGrad[q] = 2.0 * invB * r;
          } else {
            offsetGrad[q].resize(r.size());
            for (size_t i = 0; i < nv; ++i) {
              Mat3 blend = Mat3::Zero();
              for (const auto& inf : rig.skinWeights.vertices[i]) {
                blend += inf.weight * prep.linear[b][inf.joint];
              }
              offsetGrad[q].segment<3>(Eigen::Index(3 * i)) =
                  2.0 * invB * (blend.transpose() * r.segment<3>(Eigen::Index(3 * i)));
            }
          }
        }
      },
      1);

  double loss = 0.0;
  for (double v : sampleLoss) {
    loss += v;
  }
  for (const auto& jc : model.joints) {
    loss += l1 * jc.mask.cwiseMax(0.0).sum();
  }
  if (!gradient) {
    return loss;
  }

  // Backward, one joint group per task; samples reduce in batch order.
  const auto lay = layout(model);
  gradient->setZero(Eigen::Index(correctiveParameterCount(model)));
  parallelFor(
      ng,
      [&](size_t begin, size_t end) {
        for (size_t g = begin; g < end; ++g) {
          const auto& jc = model.joints[g];
          std::vector<MatX> layerGrads;
          for (const auto& l : jc.mlp.layers) {
            layerGrads.push_back(MatX::Zero(l.rows(), l.cols()));
          }
          VecX gMask = VecX::Zero(jc.mask.size());
          RowMatX gWeights = RowMatX::Zero(jc.weights.rows(), jc.weights.cols());
          for (size_t q = 0; q < nb; ++q) {
            const VecX& e = embed[q][g];
            const VecX& go = offsetGrad[q];
            VecX gEmbed = VecX::Zero(e.size());
            for (Eigen::Index i = 0; i < jc.mask.size(); ++i) {
              const double gate = jc.mask[i];
              if (gate <= 0.0) {
                continue;
              }
              const Vec3 gi = go.segment<3>(3 * i);
              const auto rows = jc.weights.middleRows<3>(3 * i);
              gMask[i] += gi.dot(rows * e);
              gWeights.middleRows<3>(3 * i).noalias() += gate * gi * e.transpose();
              gEmbed.noalias() += gate * (rows.transpose() * gi);
            }
            jc.mlp.backward(gEmbed, inputs[q][g], pre[q][g], &layerGrads);
          }
          for (Eigen::Index i = 0; i < jc.mask.size(); ++i) {
            if (jc.mask[i] > 0.0) {
              gMask[i] += l1;
            }
          }
          for (size_t k = 0; k < layerGrads.size(); ++k) {
            gradient->segment(lay[g].layers[k], layerGrads[k].size()) =
                Eigen::Map<const VecX>(layerGrads[k].data(), layerGrads[k].size());
          }
          gradient->segment(lay[g].mask, gMask.size()) = gMask;
          gradient->segment(lay[g].weights, gWeights.size()) = Eigen::Map<const VecX>(gWeights.data(), gWeights.size());
        }
      },
      1);
  return loss;
}

} // namespace

size_t correctiveParameterCount(const CorrectiveModel& model) {
  const auto lay = layout(model);
  return lay.empty() ? 0 : size_t(lay.back().end);
}

VecX flattenCorrectives(const CorrectiveModel& model) {
  const auto lay = layout(model);
  VecX flat(Eigen::Index(correctiveParameterCount(model)));
  for (size_t g = 0; g < model.joints.size(); ++g) {
    const auto& jc = model.joints[g];
    for (size_t k = 0; k < jc.mlp.layers.size(); ++k) {
      const auto& l = jc.mlp.layers[k];
      flat.segment(lay[g].layers[k], l.size()) = Eigen::Map<const VecX>(l.data(), l.size());
    }
    flat.segment(lay[g].mask, jc.mask.size()) = jc.mask;
    flat.segment(lay[g].weights, jc.weights.size()) = Eigen::Map<const VecX>(jc.weights.data(), jc.weights.size());
  }
  return flat;
}

void unflattenCorrectives(const VecX& flat, CorrectiveModel& model) {
  require(
      size_t(flat.size()) == correctiveParameterCount(model),
      "correctives: flat parameter vector size mismatch");
  const auto lay = layout(model);
  for (size_t g = 0; g < model.joints.size(); ++g) {
    auto& jc = model.joints[g];
    for (size_t k = 0; k < jc.mlp.layers.size(); ++k) {
      auto& l = jc.mlp.layers[k];
      Eigen::Map<VecX>(l.data(), l.size()) = flat.segment(lay[g].layers[k], l.size());
    }
    jc.mask = flat.segment(lay[g].mask, jc.mask.size());
    Eigen::Map<VecX>(jc.weights.data(), jc.weights.size()) = flat.segment(lay[g].weights, jc.weights.size());
  }
}

double correctiveTrainingLoss(
    const RigModel& rig,
    const CorrectiveModel& model,
    const std::vector<CorrectiveSample>& batch,
    double l1,
    CorrectiveTargetKind kind,
    VecX* gradient) {
  require(!batch.empty(), "corrective training: empty batch");
  model.validate(rig.vertexCount(), rig.jointCount());
  const Prepared prep = prepare(rig, model, batch, kind);
  std::vector<size_t> all(batch.size());
  std::iota(all.begin(), all.end(), size_t(0));
  return lossAndGradient(rig, model, prep, batch, all, l1, kind, gradient);
}

CorrectiveTrainingResult trainCorrectives(
    const RigModel& rig,
    CorrectiveModel model,
    const std::vector<CorrectiveSample>& dataset,
    const CorrectiveTrainingConfig& config) {
  require(!dataset.empty(), "corrective training: empty dataset");
  require(!model.empty(), "corrective training: model has no joint groups");
  require(config.batchSize >= 1, "corrective training: batch size must be >= 1");
  require(config.l1 >= 0.0, "corrective training: L1 weight must be non-negative");
  require(config.frozenMaskValue <= 0.0, "corrective training: frozen mask value must be non-positive");
  model.validate(rig.vertexCount(), rig.jointCount());

  const auto lay = layout(model);
  VecX flat = flattenCorrectives(model);
  std::vector<char> trainable(size_t(flat.size()), 1);
  for (size_t g = 0; g < model.joints.size(); ++g) {
    for (Eigen::Index i = 0; i < model.joints[g].mask.size(); ++i) {
      const Eigen::Index at = lay[g].mask + i;
      if (flat[at] <= 0.0) {
        flat[at] = config.frozenMaskValue;
        trainable[size_t(at)] = 0;
      }
    }
  }
  unflattenCorrectives(flat, model);

  const Prepared prep = prepare(rig, model, dataset, config.targetKind);
  Adam adam(flat.size(), AdamConfig{config.learningRate});
  std::mt19937_64 rng(config.seed);
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t(0));

  CorrectiveTrainingResult result;
  VecX grad;
  for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < order.size(); start += config.batchSize) {
      const std::vector<size_t> batch(
          order.begin() + long(start),
          order.begin() + long(std::min(order.size(), start + config.batchSize)));
      const double loss =
          lossAndGradient(rig, model, prep, dataset, batch, config.l1, config.targetKind, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw NumericError(
            "corrective training: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
            std::to_string(start));
      }
      for (Eigen::Index k = 0; k < grad.size(); ++k) {
        if (!trainable[size_t(k)]) {
          grad[k] = 0.0;
        }
      }
      adam.step(flat, grad);
      unflattenCorrectives(flat, model);
      sum += loss;
      ++batches;
    }
    result.epochLoss.push_back(sum / double(batches));
  }
  result.model = std::move(model);
  return result;
}

double correctiveReconstructionError(
    const RigModel& rig,
    const CorrectiveModel& model,
    const std::vector<CorrectiveSample>& samples,
    CorrectiveTargetKind kind) {
  return correctiveTrainingLoss(rig, model, samples, 0.0, kind, nullptr);
}

} // namespace rigkit
