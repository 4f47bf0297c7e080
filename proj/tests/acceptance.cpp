// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include "oracles.hpp"
#include "rigkit/closest_point.hpp"
#include "rigkit/corrective_training.hpp"
#include "rigkit/fitting.hpp"
#include "rigkit/identity_builder.hpp"
#include "rigkit/io.hpp"
#include "rigkit/lod_transfer.hpp"
#include "rigkit/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace rigkit;

namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RigModel tinyRig() {
  SyntheticRigSpec spec;
  spec.layout = "chain";
  spec.chainJoints = 5;
  spec.ringVertices = 6;
  spec.rings = 7;
  spec.identityComponents = 4;
  spec.expressionComponents = 2;
  return generateSyntheticRig(spec);
}

// ---------------------------------------------------------------------------

Outcome fkOracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t n = std::uniform_int_distribution<size_t>(1, 32)(rng);
    const Skeleton skel = oracle::randomSkeleton(rng, n);
    VecX params(Eigen::Index(7 * n));
    for (Eigen::Index i = 0; i < params.size(); ++i) {
      params[i] = u(rng);
    }
    const auto world = forwardKinematics(skel, params);
    const auto expected = oracle::jointPositions(skel, params);
    for (size_t j = 0; j < n; ++j) {
      worst = std::max(worst, (world[j].translation - expected[j]).cwiseAbs().maxCoeff());
    }
  }
  const double secs = secondsSince(t0);
  return {worst <= 1e-10 && secs < 10, "max abs error " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome modelIdentities() {
  const RigModel rig = generateSyntheticRig({});
  std::mt19937_64 rng(2);
  const double zero = (evaluate(rig, ModelInputs::zeros(rig)) - rig.restPositions).cwiseAbs().maxCoeff();

  const VecX shaped = rig.restPositions + rig.identity.apply(randomIdentity(rig, rng));
  const auto bindWorld = forwardKinematics(rig.skeleton, VecX::Zero(Eigen::Index(7 * rig.jointCount())));
  const double bind = (skin(rig, shaped, bindWorld) - shaped).cwiseAbs().maxCoeff();

  const VecX a = randomIdentity(rig, rng);
  const VecX b = randomIdentity(rig, rng);
  const VecX e1 = VecX::Constant(Eigen::Index(rig.expression.size()), 0.4);
  const VecX e2 = VecX::Constant(Eigen::Index(rig.expression.size()), -0.7);
  const VecX pose = VecX::Zero(Eigen::Index(rig.parameterCount()));
  const VecX base = rig.restPositions;
  const VecX joint = evaluateRestMesh(rig, a + b, e1 + e2, pose) - base;
  const VecX split = (evaluateRestMesh(rig, a, e1, pose) - base) + (evaluateRestMesh(rig, b, e2, pose) - base);
  const double superposition = (joint - split).cwiseAbs().maxCoeff();

  const double correctives =
      correctiveOffsets(rig.correctives, rig.vertexCount(), rig.parameterTransform, pose).cwiseAbs().maxCoeff();
  const bool pass = zero == 0.0 && bind <= 1e-12 && superposition <= 1e-12 && correctives == 0.0;
  return {pass, "template " + fmt("%.1e", zero) + ", bind " + fmt("%.1e", bind) + ", superposition " +
                    fmt("%.1e", superposition) + ", correctives " + fmt("%.1e", correctives)};
}

Outcome gradientSuite() {
  const auto t0 = Clock::now();
  const RigModel rig = tinyRig();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  double worstFit = 0;
  double worstTrain = 0;
  size_t failures = 0;
  const size_t trials = 100;

  // The data term is non-smooth where a scan point's closest point jumps to
  // another part of the surface, so configurations whose difference stencil
  // crosses such a jump are redrawn. Ties along shared edges do not count.
  size_t redrawn = 0;
  for (size_t accepted = 0; accepted < trials;) {
    ModelInputs truth = ModelInputs::zeros(rig);
    truth.identity = randomIdentity(rig, rng);
    truth.pose = randomPose(rig, rng, 0.5);
    ScanTarget target;
    target.points = sampleSurface(evaluate(rig, truth), rig.topology, 40, rng);
    target.keypoints["j4"] = jointPositions(rig, truth)[4] + 0.01 * Vec3(g(rng), g(rng), g(rng));
    FitConfig cfg;
    cfg.free = FreeVariables::parse("pose,skeleton,shape,expression,offsets");
    ModelInputs init = ModelInputs::zeros(rig);
    init.pose = randomPose(rig, rng, 0.8);
    FitProblem problem(rig, target, cfg, init);
    VecX x = problem.initialVariables();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] += 0.02 * g(rng);
    }
    const double h = 1e-6;
    auto closest = [&](const VecX& v) {
      const TriangleBvh bvh(problem.mesh(v), rig.topology.triangles);
      std::vector<Vec3> out;
      for (const auto& p : target.points) {
        out.push_back(bvh.closestPoint(p).point);
      }
      return out;
    };
    const auto base = closest(x);
    bool smooth = true;
    for (Eigen::Index i = 0; i < x.size() && smooth; ++i) {
      for (const double step : {h, -h}) {
        VecX xs = x;
        xs[i] += step;
        const auto moved = closest(xs);
        for (size_t k = 0; k < base.size(); ++k) {
          smooth = smooth && (moved[k] - base[k]).norm() < 1e-4;
        }
      }
    }
    if (!smooth) {
      ++redrawn;
      continue;
    }
    ++accepted;
    VecX grad;
    problem.evaluate(x, &grad);
    const VecX fd = oracle::centralDifference([&](const VecX& v) { return problem.evaluate(v); }, x, h);
    const double err = oracle::relativeError(grad, fd);
    worstFit = std::max(worstFit, err);
    failures += err >= 1e-4;
  }

  RigModel base = rig;
  base.correctives = {};
  CorrectiveArchitecture arch;
  arch.hiddenWidths = {8};
  arch.embeddingSize = 4;
  for (size_t t = 0; t < trials; ++t) {
    const auto kind = t % 2 ? CorrectiveTargetKind::Posed : CorrectiveTargetKind::Residual;
    const auto batch = generateCorrectiveDataset(rig, rig.correctives, 3, 100 + t, kind, 0.6);
    CorrectiveModel model = initCorrectiveModel(
        rig.topology, rig.restPositions, rig.skinWeights, rig.skeleton, {1, 2, 3}, arch, 200 + t);
    for (auto& jc : model.joints) {
      for (Eigen::Index i = 0; i < jc.weights.size(); ++i) {
        jc.weights.data()[i] = 0.01 * g(rng);
      }
      for (Eigen::Index i = 0; i < jc.mask.size(); ++i) {
        jc.mask[i] += 0.1 * g(rng);
      }
    }
    const VecX x = flattenCorrectives(model);
    VecX grad;
    correctiveTrainingLoss(base, model, batch, 1e-3, kind, &grad);
    auto loss = [&](const VecX& v) {
      CorrectiveModel m = model;
      unflattenCorrectives(v, m);
      return correctiveTrainingLoss(base, m, batch, 1e-3, kind);
    };
    const double err = oracle::relativeError(grad, oracle::centralDifference(loss, x, 1e-6));
    worstTrain = std::max(worstTrain, err);
    failures += err >= 1e-4;
  }
  const double secs = secondsSince(t0);
  return {failures == 0 && secs < 60,
          "V=" + std::to_string(rig.vertexCount()) + ", " + std::to_string(2 * trials) +
              " configurations (" + std::to_string(redrawn) + " fit draws redrawn at a closest-point jump), worst fit " + fmt("%.2e", worstFit) + ", worst training " +
              fmt("%.2e", worstTrain) + ", " + fmt("%.1f", secs) + " s"};
}

Outcome closestPointExactness() {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  SyntheticRigSpec spec;
  spec.layout = "chain";
  spec.rings = 80;
  spec.ringVertices = 12;
  const RigModel chain = generateSyntheticRig(spec);
  double worst = 0;
  for (int pair = 0; pair < 50; ++pair) {
    VecX positions;
    std::vector<Triangle> tris;
    if (pair % 2 == 0) {
      ModelInputs in = ModelInputs::zeros(chain);
      in.pose = randomPose(chain, rng, 1.0);
      positions = evaluate(chain, in);
      tris = chain.topology.triangles;
    } else {
      const size_t nt = 2000;
      positions.resize(Eigen::Index(9 * nt));
      for (size_t t = 0; t < nt; ++t) {
        const Vec3 c(g(rng), g(rng), g(rng));
        for (size_t k = 0; k < 3; ++k) {
          positions.segment<3>(Eigen::Index(9 * t + 3 * k)) = c + 0.1 * Vec3(g(rng), g(rng), g(rng));
        }
        tris.push_back({uint32_t(3 * t), uint32_t(3 * t + 1), uint32_t(3 * t + 2)});
      }
    }
    const TriangleBvh bvh(positions, tris);
    const size_t m = 1000;
    for (size_t q = 0; q < m; ++q) {
      const Vec3 p = pair % 2 == 0 ? Vec3(0.3 * g(rng), 0.5 + 0.4 * g(rng), 0.3 * g(rng))
                                   : Vec3(1.5 * g(rng), 1.5 * g(rng), 1.5 * g(rng));
      const double d = std::sqrt(bvh.closestPoint(p).squaredDistance);
      const double ref = std::sqrt(oracle::squaredDistanceToMesh(p, positions, tris));
      worst = std::max(worst, std::abs(d - ref));
    }
  }
  return {worst <= 1e-12, "50 pairs (F <= 2000, M = 1000), max distance error " + fmt("%.2e", worst)};
}

Outcome maskedPcaProperties() {
  const RigModel rig = generateSyntheticRig({});
  const SymmetryMap sym = SymmetryMap::fromTemplate(rig.restPositions);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  auto randomShapes = [&](size_t n, double noise) {
    ShapeSet set;
    for (size_t s = 0; s < n; ++s) {
      VecX shape = rig.restPositions + rig.identity.apply(randomIdentity(rig, rng));
      shape += noise * VecX::NullaryExpr(shape.size(), [&](Eigen::Index) { return g(rng); });
      set.shapes.push_back(shape);
      set.subjects.push_back(std::to_string(s));
    }
    return set;
  };

  // Orthonormality and full-rank reconstruction per region.
  const ShapeSet shapes = randomShapes(15, 0.002);
  double ortho = 0;
  double recon = 0;
  for (const auto& mask : syntheticRegionMasks(rig)) {
    const MaskedPca pca = maskedPca(shapes, mask, shapes.shapes.size() - 1);
    const Eigen::Index k = pca.components.cols();
    ortho = std::max(ortho, (pca.components.transpose() * pca.components - MatX::Identity(k, k)).cwiseAbs().maxCoeff());
    for (const auto& s : shapes.shapes) {
      VecX masked = s;
      for (size_t i = 0; i < rig.vertexCount(); ++i) {
        masked.segment<3>(Eigen::Index(3 * i)) *= mask.weights[Eigen::Index(i)];
      }
      const VecX c = masked - pca.mean;
      recon = std::max(recon, (pca.components * (pca.components.transpose() * c) - c).norm());
    }
  }

  // Mirror augmentation symmetrizes the mean.
  const ShapeSet aug = mirrorAugment(randomShapes(10, 0.01), sym);
  VecX mean = VecX::Zero(rig.restPositions.size());
  for (const auto& s : aug.shapes) {
    mean += s;
  }
  mean /= double(aug.shapes.size());
  const double meanAsym = (mean - mirrorField(mean, sym)).cwiseAbs().maxCoeff();

  // A planted anti-symmetric direction is the only one flagged.
  size_t detected = 0;
  size_t falsePositives = 0;
  const RegionMask all{"all", VecX::Ones(Eigen::Index(rig.vertexCount()))};
  for (int trial = 0; trial < 20; ++trial) {
    const VecX h = VecX::NullaryExpr(rig.restPositions.size(), [&](Eigen::Index) { return g(rng); });
    const VecX anti = (h - mirrorField(h, sym)).normalized();
    ShapeSet set = randomShapes(12, 0.0);
    std::uniform_real_distribution<double> amp(0.1, 0.5);
    const double scale = amp(rng);
    for (auto& s : set.shapes) {
      s += scale * g(rng) * anti;
    }
    // 12 shapes give 11 centered symmetric directions plus the planted one;
    // asking for more would return arbitrary null-space vectors.
    const MaskedPca pca = maskedPca(mirrorAugment(set, sym), all, 12);
    if (pca.singularValues.minCoeff() < 1e-8 * pca.singularValues.maxCoeff()) {
      throw std::runtime_error("masked PCA: unexpected rank deficiency in detection trial");
    }
    for (const size_t c : detectAsymmetricComponents(pca.components, sym)) {
      if (std::abs(pca.components.col(Eigen::Index(c)).dot(anti)) > 1 - 1e-6) {
        ++detected;
      } else {
        ++falsePositives;
      }
    }
  }
  const bool pass = ortho <= 1e-8 && recon < 1e-8 && meanAsym < 1e-9 && detected == 20 && falsePositives == 0;
  return {pass, "orthonormality " + fmt("%.1e", ortho) + ", reconstruction " + fmt("%.1e", recon) +
                    ", mirrored mean asymmetry " + fmt("%.1e", meanAsym) + ", detected " + std::to_string(detected) +
                    "/20, false positives " + std::to_string(falsePositives)};
}

Outcome recoveryBenchmark() {
  const auto t0 = Clock::now();
  const RigModel rig = generateSyntheticRig({});
  std::vector<BenchmarkCase> cases;
  for (uint64_t s = 0; s < 20; ++s) {
    cases.push_back(generateBenchmarkCase(rig, 1000 + s));
  }
  std::vector<double> medians;
  std::string detail = "median masked data2model (mm) by components:";
  for (const long k : {2L, 4L, 8L, 16L}) {
    FitConfig cfg;
    cfg.iterations = 2500;
    cfg.learningRate = 0.01;
    cfg.free = FreeVariables::parse("pose,shape");
    cfg.identityComponents = k;
    std::vector<double> errors;
    for (const auto& c : cases) {
      const FitResult r = fit(rig, c.target, cfg, c.init);
      errors.push_back(evaluateData2Model(c.target.points, r.mesh, rig.topology, c.target.excludedVertices));
    }
    medians.push_back(median(errors));
    detail += " " + std::to_string(k) + "->" + fmt("%.3f", medians.back());
  }
  bool monotone = true;
  for (size_t i = 1; i < medians.size(); ++i) {
    monotone = monotone && medians[i] <= medians[i - 1];
  }
  const double secs = secondsSince(t0);
  return {medians.back() < 2.0 && monotone && secs < 600, detail + ", " + fmt("%.0f", secs) + " s"};
}

struct TrainedChain {
  RigModel rig;
  CorrectiveModel trained;
};

Outcome correctiveTraining(TrainedChain& keep) {
  const auto t0 = Clock::now();
  SyntheticRigSpec spec;
  spec.layout = "chain";
  spec.chainJoints = 5;
  const RigModel rig = generateSyntheticRig(spec);
  RigModel base = rig;
  base.correctives = {};
  const auto train = generateCorrectiveDataset(rig, rig.correctives, 500, 1);
  const auto held = generateCorrectiveDataset(rig, rig.correctives, 100, 2);
  std::vector<size_t> joints;
  for (size_t j = 0; j < rig.jointCount(); ++j) {
    joints.push_back(j);
  }
  const CorrectiveModel init =
      initCorrectiveModel(rig.topology, rig.restPositions, rig.skinWeights, rig.skeleton, joints, {}, 7);
  size_t initSupport = 0;
  for (const size_t s : maskSupport(init)) {
    initSupport += s;
  }
  const double initError = correctiveReconstructionError(base, init, held, CorrectiveTargetKind::Residual);

  std::vector<size_t> supports;
  double ratio = 0;
  std::string detail;
  for (const double l1 : {0.0, 1e-4, 1e-2}) {
    CorrectiveTrainingConfig cfg;
    cfg.l1 = l1;
    cfg.epochs = 150;
    cfg.batchSize = 32;
    cfg.learningRate = 1e-3;
    cfg.seed = 11;
    const auto result = trainCorrectives(base, init, train, cfg);
    size_t support = 0;
    for (const size_t s : maskSupport(result.model)) {
      support += s;
    }
    supports.push_back(support);
    if (l1 == 0.0) {
      const double err = correctiveReconstructionError(base, result.model, held, CorrectiveTargetKind::Residual);
      ratio = initError / err;
      keep.rig = rig;
      keep.trained = result.model;
    }
    detail += " l1=" + fmt("%g", l1) + ":" + std::to_string(support);
  }
  bool monotone = true;
  for (size_t i = 1; i < supports.size(); ++i) {
    monotone = monotone && supports[i] <= supports[i - 1];
  }
  const double secs = secondsSince(t0);
  const bool pass = ratio >= 10 && supports[0] <= initSupport && monotone && secs < 900;
  return {pass, "V=" + std::to_string(rig.vertexCount()) + ", held-out error reduced " + fmt("%.1f", ratio) +
                    "x, support init " + std::to_string(initSupport) + " trained" + detail + ", " +
                    fmt("%.0f", secs) + " s"};
}

Outcome lodTransfer() {
  SyntheticRigSpec spec;
  const RigModel fine = generateSyntheticRig(spec);
  spec.resolution = 0.5;
  const RigModel coarseTemplate = generateSyntheticRig(spec);
  const auto map = buildBarycentricMap(fine.restPositions, fine.topology, coarseTemplate.restPositions);

  // Constant and linear fields.
  const VecX constant = VecX::Constant(Eigen::Index(fine.vertexCount()), -2.5);
  double fieldErr = (transferField(map, constant, 1).array() + 2.5).abs().maxCoeff();
  const Vec3 grad(0.3, -1.2, 2.0);
  VecX linear(Eigen::Index(fine.vertexCount()));
  for (size_t i = 0; i < fine.vertexCount(); ++i) {
    linear[Eigen::Index(i)] = grad.dot(vertexAt(fine.restPositions, i)) + 0.7;
  }
  const VecX projected = transferField(map, fine.restPositions, 3);
  const VecX tl = transferField(map, linear, 1);
  for (size_t i = 0; i < map.targetVertexCount(); ++i) {
    fieldErr = std::max(fieldErr, std::abs(tl[Eigen::Index(i)] - (grad.dot(vertexAt(projected, i)) + 0.7)));
  }

  // Identical-mesh round trip.
  const auto self = buildBarycentricMap(fine.restPositions, fine.topology, fine.restPositions);
  const VecX f = fine.identity.deltas.col(0);
  const double roundTrip = (transferField(self, transferField(self, f, 3), 3) - f).cwiseAbs().maxCoeff();

  // Identity displacements on the coarse rig against the projected fine ones.
  const RigModel coarse = transferRig(fine, coarseTemplate.topology, coarseTemplate.restPositions, {});
  std::mt19937_64 rng(8);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ModelInputs in = ModelInputs::zeros(fine);
    in.pose = randomPose(fine, rng, 0.4);
    in.identity = randomIdentity(fine, rng);
    ModelInputs neutral = in;
    neutral.identity.setZero();
    const VecX direct = transferField(map, evaluate(fine, in) - evaluate(fine, neutral), 3);
    const VecX viaTransfer = evaluate(coarse, in) - evaluate(coarse, neutral);
    worst = std::max(worst, (viaTransfer - direct).norm() / direct.norm());
  }
  const bool pass = fieldErr <= 1e-9 && roundTrip <= 1e-9 && worst < 0.05;
  return {pass, "fields " + fmt("%.1e", fieldErr) + ", round trip " + fmt("%.1e", roundTrip) + ", " +
                    std::to_string(fine.vertexCount()) + "->" + std::to_string(coarse.vertexCount()) +
                    " vertices, identity relative L2 " + fmt("%.4f", worst)};
}

int runCli(const std::string& args) {
  const std::string cmd = std::string(RIGKIT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome formatDeterminism(const TrainedChain& chain) {
  if (chain.trained.joints.empty()) {
    return {false, "needs the rig trained by criterion 7"};
  }
  RigModel rig = chain.rig;
  rig.correctives = chain.trained;
  rig.finalize();
  const RigModel loaded = deserializeRig(serializeRig(rig));
  std::mt19937_64 rng(9);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    ModelInputs in = ModelInputs::zeros(rig);
    in.pose = randomPose(rig, rng, 0.6);
    in.identity = randomIdentity(rig, rng);
    const VecX a = evaluate(rig, in);
    worst = std::max(worst, (evaluate(loaded, in) - a).norm() / a.norm());
  }

  const fs::path dir = fs::temp_directory_path() / "rigkit_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string() + "/";
  std::ofstream(d + "chain.json") << R"({"layout": "chain", "rings": 40})";
  bool ok = true;
  for (const std::string t : {"a", "b"}) {
    ok = ok && runCli("synth -o " + d + "rig" + t + ".bin --benchmark " + d + "bench" + t + " --count 2 --seed 4") == 0;
    ok = ok && runCli("fit " + d + "riga.bin " + d + "bencha/scan_0000.ply --keypoints " + d +
                      "bencha/scan_0000.keypoints.json --init " + d + "bencha/scan_0000.init.json --iters 200 -o " +
                      d + "fit" + t) == 0;
    ok = ok && runCli("synth --spec " + d + "chain.json -o " + d + "chain" + t + ".bin --dataset " + d + "ds" + t +
                      " --count 16 --seed 2") == 0;
    ok = ok && runCli("train-correctives " + d + "chaina.bin " + d + "dsa --epochs 3 --seed 5 -o " + d + "trained" +
                      t + ".bin") == 0;
    ok = ok && runCli("pose " + d + "trained" + t + ".bin --params j1_rx=0.3,j2_rz=-0.4 -o " + d + "pose" + t +
                      ".ply") == 0;
  }
  size_t identical = 0;
  const std::vector<std::string> outputs{"rig%.bin",   "bench%/scan_0001.ply", "fit%.json", "fit%.obj",
                                         "chain%.bin", "ds%/sample_0003.obj",  "trained%.bin", "pose%.ply"};
  for (const auto& o : outputs) {
    auto name = [&](const std::string& t) {
      std::string s = o;
      s.replace(s.find('%'), 1, t);
      return dir / s;
    };
    const std::string a = slurp(name("a"));
    identical += !a.empty() && a == slurp(name("b"));
  }
  const bool pass = worst <= 1e-6 && ok && identical == outputs.size();
  return {pass, "save/load max relative change " + fmt("%.2e", worst) + ", CLI outputs identical " +
                    std::to_string(identical) + "/" + std::to_string(outputs.size())};
}

} // namespace

int main(int argc, char** argv) {
  // Optional arguments pick criteria by number; all run by default.
  std::vector<bool> selected(10, argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= 9) {
      selected[size_t(k)] = true;
    }
  }
  // Timing budgets are stated for a single worker thread.
  setenv("RIGKIT_THREADS", "1", 1);
  TrainedChain chain;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"forward kinematics matches 4x4 matrix chain", fkOracle},
      {"model identities", modelIdentities},
      {"analytic gradients match central differences", gradientSuite},
      {"BVH closest point matches brute force", closestPointExactness},
      {"masked PCA and mirror symmetry", maskedPcaProperties},
      {"synthetic recovery benchmark", recoveryBenchmark},
      {"corrective training on planted model", [&] { return correctiveTraining(chain); }},
      {"LOD transfer", lodTransfer},
      {"format and CLI determinism", [&] { return formatDeterminism(chain); }},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i + 1]) {
      continue;
    }
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << "  ("
              << o.detail << ")" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
