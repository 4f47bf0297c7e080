#include "rigkit/correctives.hpp"

#include "rigkit/error.hpp"

#include <cmath>
#include <limits>
#include <queue>

namespace rigkit {

JointNeighborhood jointNeighborhood(const Skeleton& skeleton, size_t joint, size_t arity) {
  require(arity >= 2, "corrective neighborhood arity must be at least 2");
  JointNeighborhood n;
  n.push_back(skeleton.joint(joint).parent);
  n.push_back(joint);
  for (size_t c : skeleton.children(joint)) {
    if (n.size() == arity) {
      break;
    }
    n.push_back(c);
  }
  n.resize(arity);
  return n;
}

double CorrectiveMlp::activate(double x) const {
  switch (activation) {
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::LeakyRelu:
    default:
      return x > 0.0 ? x : leakySlope * x;
  }
}

double CorrectiveMlp::activateDerivative(double x) const {
  switch (activation) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::LeakyRelu:
    default:
      return x > 0.0 ? 1.0 : leakySlope;
  }
}

VecX CorrectiveMlp::forward(const VecX& x, std::vector<VecX>* inputs, std::vector<VecX>* preActivations) const {
  if (inputs) {
    inputs->clear();
  }
  if (preActivations) {
    preActivations->clear();
  }
  VecX h = x;
  for (size_t k = 0; k < layers.size(); ++k) {
    if (inputs) {
      inputs->push_back(h);
    }
    VecX z = layers[k] * h;
    if (preActivations) {
      preActivations->push_back(z);
    }
    if (k + 1 < layers.size()) {
      h = z.unaryExpr([this](double v) { return activate(v); });
    } else {
      h = std::move(z);
    }
  }
  return h;
}

VecX CorrectiveMlp::backward(
    const VecX& outputGrad,
    const std::vector<VecX>& inputs,
    const std::vector<VecX>& preActivations,
    std::vector<MatX>* layerGrads) const {
  VecX g = outputGrad;
  for (size_t k = layers.size(); k-- > 0;) {
    if (k + 1 < layers.size()) {
      for (Eigen::Index i = 0; i < g.size(); ++i) {
        g[i] *= activateDerivative(preActivations[k][i]);
      }
    }
    if (layerGrads) {
      (*layerGrads)[k].noalias() += g * inputs[k].transpose();
    }
    g = layers[k].transpose() * g;
  }
  return g;
}

CorrectiveMlp CorrectiveMlp::random(const std::vector<size_t>& widths, std::mt19937_64& rng, double gain) {
  require(widths.size() >= 2, "corrective MLP needs at least an input and an output width");
  CorrectiveMlp mlp;
  for (size_t k = 0; k + 1 < widths.size(); ++k) {
    const double limit = gain * std::sqrt(6.0 / double(widths[k] + widths[k + 1]));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatX w(Eigen::Index(widths[k + 1]), Eigen::Index(widths[k]));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = dist(rng);
    }
    mlp.layers.push_back(std::move(w));
  }
  return mlp;
}

void CorrectiveModel::validate(size_t vertexCount, size_t jointCount) const {
  for (const auto& jc : joints) {
    const std::string where = "correctives: joint group " + std::to_string(jc.joint);
    require(jc.joint < jointCount, where + " references an invalid joint");
    for (const auto& a : jc.neighborhood) {
      require(!a || *a < jointCount, where + " neighborhood references an invalid joint");
    }
    require(!jc.mlp.layers.empty(), where + " has no MLP layers");
    require(jc.mlp.inputSize() == 6 * jc.neighborhood.size(), where + " MLP input size != 6 x neighborhood");
    for (size_t k = 1; k < jc.mlp.layers.size(); ++k) {
      require(
          jc.mlp.layers[k].cols() == jc.mlp.layers[k - 1].rows(),
          where + " MLP layer " + std::to_string(k) + " shape mismatch");
    }
    require(size_t(jc.mask.size()) == vertexCount, where + " mask length != vertex count");
    require(size_t(jc.weights.rows()) == 3 * vertexCount, where + " corrective weights rows != 3V");
    require(size_t(jc.weights.cols()) == jc.embeddingSize(), where + " corrective weights cols != embedding size");
    require(jc.mask.allFinite() && jc.weights.allFinite(), where + " contains non-finite values");
  }
}

VecX poseFeatures(const JointNeighborhood& neighborhood, const VecX& jointParams) {
  VecX f = VecX::Zero(Eigen::Index(6 * neighborhood.size()));
  for (size_t k = 0; k < neighborhood.size(); ++k) {
    if (!neighborhood[k]) {
      continue;
    }
    const double* p = jointParams.data() + *neighborhood[k] * kParametersPerJoint;
    const Mat3 r = eulerToMatrix({p[kRx], p[kRy], p[kRz]});
    const auto r6 = rotationTo6D(r);
    const auto id6 = rotationTo6D(Mat3::Identity());
    for (int m = 0; m < 6; ++m) {
      f[Eigen::Index(6 * k + m)] = r6[m] - id6[m];
    }
  }
  return f;
}

VecX nonlinearEmbed(const JointCorrective& corrective, const VecX& jointParams) {
  return corrective.mlp.forward(poseFeatures(corrective.neighborhood, jointParams));
}

VecX correctiveOffsets(const CorrectiveModel& model, size_t vertexCount, const VecX& jointParams) {
  VecX offsets = VecX::Zero(Eigen::Index(3 * vertexCount));
  for (const auto& jc : model.joints) {
    const VecX e = nonlinearEmbed(jc, jointParams);
    if (e.isZero(0.0)) {
      continue;
    }
    for (Eigen::Index i = 0; i < jc.mask.size(); ++i) {
      const double gate = jc.mask[i];
      if (gate <= 0.0) {
        continue;
      }
      offsets.segment<3>(3 * i).noalias() += gate * (jc.weights.middleRows<3>(3 * i) * e);
    }
  }
  return offsets;
}

VecX correctiveOffsets(
    const CorrectiveModel& model,
    size_t vertexCount,
    const ParameterTransform& pt,
    const VecX& modelParams) {
  return correctiveOffsets(model, vertexCount, pt.applyPoseOnly(modelParams));
}

VecX backpropagateCorrectives(const CorrectiveModel& model, const VecX& jointParams, const VecX& offsetGrad) {
  VecX grad = VecX::Zero(jointParams.size());
  std::vector<VecX> inputs;
  std::vector<VecX> pre;
  for (const auto& jc : model.joints) {
    const VecX features = poseFeatures(jc.neighborhood, jointParams);
    jc.mlp.forward(features, &inputs, &pre);
    VecX gEmbed = VecX::Zero(Eigen::Index(jc.embeddingSize()));
    for (Eigen::Index i = 0; i < jc.mask.size(); ++i) {
      const double gate = jc.mask[i];
      if (gate <= 0.0) {
        continue;
      }
      gEmbed.noalias() += gate * (jc.weights.middleRows<3>(3 * i).transpose() * offsetGrad.segment<3>(3 * i));
    }
    const VecX gFeatures = jc.mlp.backward(gEmbed, inputs, pre, nullptr);
    for (size_t k = 0; k < jc.neighborhood.size(); ++k) {
      if (!jc.neighborhood[k]) {
        continue;
      }
      const size_t a = *jc.neighborhood[k];
      const double* p = jointParams.data() + a * kParametersPerJoint;
      const auto dR = eulerToMatrixDerivatives({p[kRx], p[kRy], p[kRz]});
      for (int m = 0; m < 3; ++m) {
        const auto d6 = rotationTo6D(dR[m]);
        double s = 0.0;
        for (int q = 0; q < 6; ++q) {
          s += d6[q] * gFeatures[Eigen::Index(6 * k + q)];
        }
        grad[Eigen::Index(a * kParametersPerJoint + kRx + m)] += s;
      }
    }
  }
  return grad;
}

std::vector<bool> jointSegment(const SkinWeights& skin, const Skeleton& skeleton, size_t joint) {
  std::vector<bool> part(skeleton.jointCount(), false);
  part.at(joint) = true;
  if (skeleton.joint(joint).parent) {
    part[*skeleton.joint(joint).parent] = true;
  }
  for (size_t c : skeleton.children(joint)) {
    part[c] = true;
  }
  std::vector<bool> seg(skin.vertexCount(), false);
  for (size_t v = 0; v < skin.vertexCount(); ++v) {
    seg[v] = part[skin.dominantJoint(v)];
  }
  return seg;
}

std::vector<uint32_t> jointRing(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    size_t joint) {
  const size_t nv = topology.vertexCount;
  std::vector<uint32_t> dominant(nv);
  for (size_t v = 0; v < nv; ++v) {
    dominant[v] = skin.dominantJoint(v);
  }

  std::vector<uint32_t> ring;
  const auto parent = skeleton.joint(joint).parent;
  if (parent) {
    std::vector<bool> onRing(nv, false);
    for (const auto& e : topology.edges()) {
      const uint32_t da = dominant[e[0]];
      const uint32_t db = dominant[e[1]];
      if (da == joint && db == *parent) {
        onRing[e[0]] = true;
      } else if (db == joint && da == *parent) {
        onRing[e[1]] = true;
      }
    }
    for (size_t v = 0; v < nv; ++v) {
      if (onRing[v]) {
        ring.push_back(uint32_t(v));
      }
    }
  }
  if (!ring.empty()) {
    return ring;
  }

  // Fallback: vertices of the joint's own part (or of seg(j) if the joint
  // dominates nothing) nearest to the joint's bind position.
  std::vector<bool> candidates(nv, false);
  bool any = false;
  for (size_t v = 0; v < nv; ++v) {
    candidates[v] = dominant[v] == joint;
    any = any || candidates[v];
  }
  if (!any) {
    candidates = jointSegment(skin, skeleton, joint);
  }
  const Vec3 center = bindState(skeleton).world.at(joint).translation;
  double best = std::numeric_limits<double>::infinity();
  for (size_t v = 0; v < nv; ++v) {
    if (candidates[v]) {
      best = std::min(best, (vertexAt(restPositions, v) - center).norm());
    }
  }
  require(
      std::isfinite(best),
      "geodesic ring: joint '" + skeleton.joint(joint).name + "' and its neighbors influence no vertices");
  const double tol = best * 1e-6 + 1e-12;
  for (size_t v = 0; v < nv; ++v) {
    if (candidates[v] && (vertexAt(restPositions, v) - center).norm() <= best + tol) {
      ring.push_back(uint32_t(v));
    }
  }
  return ring;
}

VecX geodesicRingDistance(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    size_t joint) {
  const size_t nv = topology.vertexCount;
  require(size_t(restPositions.size()) == 3 * nv, "geodesic ring: positions do not match topology");
  const auto ring = jointRing(topology, restPositions, skin, skeleton, joint);
  require(!ring.empty(), "geodesic ring: empty ring for joint '" + skeleton.joint(joint).name + "'");

  const auto nbrs = topology.vertexNeighbors();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(nv, kInf);
  using Item = std::pair<double, uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (uint32_t v : ring) {
    dist[v] = 0.0;
    queue.emplace(0.0, v);
  }
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) {
      continue;
    }
    const Vec3 pv = vertexAt(restPositions, v);
    for (uint32_t w : nbrs[v]) {
      const double nd = d + (vertexAt(restPositions, w) - pv).norm();
      if (nd < dist[w]) {
        dist[w] = nd;
        queue.emplace(nd, w);
      }
    }
  }

  const auto seg = jointSegment(skin, skeleton, joint);
  double maxSeg = 0.0;
  for (size_t v = 0; v < nv; ++v) {
    if (seg[v] && std::isfinite(dist[v])) {
      maxSeg = std::max(maxSeg, dist[v]);
    }
  }
  VecX result(static_cast<Eigen::Index>(nv));
  for (size_t v = 0; v < nv; ++v) {
    if (!std::isfinite(dist[v])) {
      result[Eigen::Index(v)] = 1.0;
    } else if (maxSeg > 0.0) {
      result[Eigen::Index(v)] = std::min(1.0, dist[v] / maxSeg);
    } else {
      result[Eigen::Index(v)] = dist[v] > 0.0 ? 1.0 : 0.0;
    }
  }
  return result;
}

VecX initMask(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    size_t joint) {
  const VecX d = geodesicRingDistance(topology, restPositions, skin, skeleton, joint);
  const auto seg = jointSegment(skin, skeleton, joint);
  VecX mask = VecX::Zero(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (seg[size_t(i)]) {
      mask[i] = 1.0 - d[i];
    }
  }
  return mask;
}

std::vector<VecX> initMasks(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton) {
  std::vector<VecX> masks;
  masks.reserve(skeleton.jointCount());
  for (size_t j = 0; j < skeleton.jointCount(); ++j) {
    masks.push_back(initMask(topology, restPositions, skin, skeleton, j));
  }
  return masks;
}

CorrectiveModel initCorrectiveModel(
    const MeshTopology& topology,
    const VecX& restPositions,
    const SkinWeights& skin,
    const Skeleton& skeleton,
    const std::vector<size_t>& joints,
    const CorrectiveArchitecture& arch,
    uint64_t seed) {
  std::mt19937_64 rng(seed);
  CorrectiveModel model;
  std::vector<size_t> widths;
  widths.push_back(6 * arch.arity);
  widths.insert(widths.end(), arch.hiddenWidths.begin(), arch.hiddenWidths.end());
  widths.push_back(arch.embeddingSize);
  for (size_t j : joints) {
    JointCorrective jc;
    jc.joint = j;
    jc.neighborhood = jointNeighborhood(skeleton, j, arch.arity);
    jc.mlp = CorrectiveMlp::random(widths, rng);
    jc.mlp.activation = arch.activation;
    jc.mask = initMask(topology, restPositions, skin, skeleton, j);
    jc.weights = RowMatX::Zero(Eigen::Index(3 * topology.vertexCount), Eigen::Index(arch.embeddingSize));
    model.joints.push_back(std::move(jc));
  }
  return model;
}

std::vector<size_t> maskSupport(const CorrectiveModel& model) {
  std::vector<size_t> support;
  for (const auto& jc : model.joints) {
    support.push_back(size_t((jc.mask.array() > 0.0).count()));
  }
  return support;
}

} // namespace rigkit
