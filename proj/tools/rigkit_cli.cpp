#include "rigkit/body_model.hpp"
#include "rigkit/corrective_training.hpp"
#include "rigkit/error.hpp"
#include "rigkit/fitting.hpp"
#include "rigkit/identity_builder.hpp"
#include "rigkit/io.hpp"
#include "rigkit/lod_transfer.hpp"
#include "rigkit/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rigkit;

namespace {

std::string readText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write " + path);
  }
  out << text;
}

json parseJson(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(source + ": " + e.what());
  }
}

json readJson(const std::string& path) {
  return parseJson(readText(path), path);
}

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::vector<double> toStd(const VecX& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

VecX vectorFrom(const json& j, size_t expected, const std::string& what) {
  if (!j.is_array()) {
    throw DataError(what + ": expected an array");
  }
  if (j.size() > expected) {
    throw DataError(what + ": " + std::to_string(j.size()) + " values, model has " + std::to_string(expected));
  }
  VecX v = VecX::Zero(Eigen::Index(expected));
  for (size_t i = 0; i < j.size(); ++i) {
    v[Eigen::Index(i)] = j[i].get<double>();
  }
  return v;
}

// {"pose": {name: v} | [..], "identity": [..], "expression": [..],
//  "skeleton_coeffs": [..]}
ModelInputs inputsFromJson(const RigModel& rig, const json& j, const std::string& source) {
  ModelInputs in = ModelInputs::zeros(rig);
  try {
    if (!j.is_object()) {
      throw DataError(source + ": expected a JSON object");
    }
    for (const auto& [key, v] : j.items()) {
      if (key == "pose") {
        if (v.is_object()) {
          for (const auto& [name, value] : v.items()) {
            const auto p = rig.parameterTransform.findParameter(name);
            if (!p) {
              throw DataError(source + ": unknown model parameter '" + name + "'");
            }
            in.pose[Eigen::Index(*p)] = value.get<double>();
          }
        } else {
          in.pose = vectorFrom(v, rig.parameterCount(), source + " pose");
        }
      } else if (key == "identity") {
        in.identity = vectorFrom(v, rig.identity.size(), source + " identity");
      } else if (key == "expression") {
        in.expression = vectorFrom(v, rig.expression.size(), source + " expression");
      } else if (key == "skeleton_coeffs") {
        if (!rig.skeletonBasis) {
          throw DataError(source + ": rig has no skeleton basis");
        }
        in.skeletonCoeffs = vectorFrom(v, size_t(rig.skeletonBasis->cols()), source + " skeleton_coeffs");
      }
    }
  } catch (const json::exception& e) {
    throw DataError(source + ": " + e.what());
  }
  return in;
}

// name=value,name=value over model parameters, identity and expression names.
ModelInputs inputsFromInline(const RigModel& rig, const std::string& text) {
  ModelInputs in = ModelInputs::zeros(rig);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) {
      continue;
    }
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw DataError("--params: expected name=value, got '" + item + "'");
    }
    const std::string name = item.substr(0, eq);
    double value = 0;
    const std::string vs = item.substr(eq + 1);
    const auto r = std::from_chars(vs.data(), vs.data() + vs.size(), value);
    if (r.ec != std::errc() || r.ptr != vs.data() + vs.size()) {
      throw DataError("--params: bad number '" + vs + "'");
    }
    auto findName = [](const std::vector<std::string>& names, const std::string& n) -> std::optional<size_t> {
      const auto it = std::find(names.begin(), names.end(), n);
      return it == names.end() ? std::nullopt : std::optional<size_t>(size_t(it - names.begin()));
    };
    if (const auto p = rig.parameterTransform.findParameter(name)) {
      in.pose[Eigen::Index(*p)] = value;
    } else if (const auto k = findName(rig.identity.names, name)) {
      in.identity[Eigen::Index(*k)] = value;
    } else if (const auto k2 = findName(rig.expression.names, name)) {
      in.expression[Eigen::Index(*k2)] = value;
    } else {
      throw DataError("--params: unknown name '" + name + "'");
    }
  }
  return in;
}

ModelInputs loadInputs(const RigModel& rig, const std::string& spec) {
  if (fs::exists(spec)) {
    return inputsFromJson(rig, readJson(spec), spec);
  }
  const auto first = spec.find_first_not_of(" \t\n");
  if (first != std::string::npos && spec[first] == '{') {
    return inputsFromJson(rig, parseJson(spec, "--params"), "--params");
  }
  return inputsFromInline(rig, spec);
}

json inputsToJson(const RigModel& rig, const ModelInputs& in) {
  json j;
  json pose = json::object();
  const auto& names = rig.parameterTransform.names();
  for (size_t p = 0; p < names.size(); ++p) {
    pose[names[p]] = in.pose[Eigen::Index(p)];
  }
  j["pose"] = pose;
  j["identity"] = toStd(in.identity);
  j["expression"] = toStd(in.expression);
  if (in.skeletonCoeffs) {
    j["skeleton_coeffs"] = toStd(*in.skeletonCoeffs);
  }
  return j;
}

std::map<std::string, Vec3> loadKeypoints(const std::string& path) {
  const json j = readJson(path);
  std::map<std::string, Vec3> out;
  try {
    for (const auto& [name, v] : j.items()) {
      if (!v.is_array() || v.size() != 3) {
        throw DataError(path + ": keypoint '" + name + "' must be [x, y, z]");
      }
      out[name] = Vec3(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return out;
}

json keypointsToJson(const std::map<std::string, Vec3>& kp) {
  json j = json::object();
  for (const auto& [name, p] : kp) {
    j[name] = {p.x(), p.y(), p.z()};
  }
  return j;
}

// Excluded vertex indices: a JSON array or {"excluded": [...]}.
std::vector<bool> loadMask(const std::string& path, size_t vertexCount) {
  json j = readJson(path);
  if (j.is_object() && j.contains("excluded")) {
    j = j["excluded"];
  }
  if (!j.is_array()) {
    throw DataError(path + ": expected an array of vertex indices");
  }
  std::vector<bool> mask(vertexCount, false);
  for (const auto& v : j) {
    const auto i = v.get<long long>();
    if (i < 0 || size_t(i) >= vertexCount) {
      throw DataError(path + ": vertex index " + std::to_string(i) + " out of range");
    }
    mask[size_t(i)] = true;
  }
  return mask;
}

json maskToJson(const std::vector<bool>& mask) {
  std::vector<size_t> idx;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      idx.push_back(i);
    }
  }
  return json{{"excluded", idx}};
}

std::vector<size_t> parseCounts(const std::string& text, const std::string& what) {
  std::vector<size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t v = 0;
    const auto r = std::from_chars(item.data(), item.data() + item.size(), v);
    if (r.ec != std::errc() || r.ptr != item.data() + item.size()) {
      throw DataError(what + ": bad count '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) {
    throw DataError(what + ": empty list");
  }
  return out;
}

void printWarnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) {
    std::cerr << "warning: " << w << "\n";
  }
}

RigModel openRig(const std::string& path) {
  std::vector<std::string> warnings;
  RigModel rig = loadRig(path, &warnings);
  printWarnings(warnings);
  return rig;
}

bool hasMeshExtension(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".obj" || ext == ".ply";
}

std::vector<fs::path> listMeshes(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DataError(dir.string() + " is not a directory");
  }
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && hasMeshExtension(e.path())) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) {
    return 0;
  }
  const double pos = q * double(v.size() - 1);
  const size_t lo = size_t(std::floor(pos));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

// ---- subcommands ----

struct PoseArgs {
  std::string rig, params, out;
};

int runPose(const PoseArgs& a) {
  const RigModel rig = openRig(a.rig);
  const ModelInputs in = a.params.empty() ? ModelInputs::zeros(rig) : loadInputs(rig, a.params);
  saveMesh(a.out, Mesh{evaluate(rig, in), rig.topology});
  return 0;
}

struct FitArgs {
  std::string rig, scan, keypoints, mask, free = "pose,shape", init, out;
  size_t iters = 2500;
  double lr = 0.01;
  uint64_t seed = 0;
  long components = -1;
  size_t maxPoints = 0;
};

std::string stripMeshExtension(const std::string& out) {
  const fs::path p(out);
  return hasMeshExtension(p) ? (p.parent_path() / p.stem()).string() : out;
}

int runFit(const FitArgs& a) {
  const RigModel rig = openRig(a.rig);
  ScanTarget target;
  target.points = loadPoints(a.scan);
  if (!a.keypoints.empty()) {
    target.keypoints = loadKeypoints(a.keypoints);
  }
  if (!a.mask.empty()) {
    target.excludedVertices = loadMask(a.mask, rig.vertexCount());
  }
  FitConfig cfg;
  cfg.iterations = a.iters;
  cfg.learningRate = a.lr;
  cfg.free = FreeVariables::parse(a.free);
  cfg.seed = a.seed;
  cfg.identityComponents = a.components;
  cfg.maxScanPoints = a.maxPoints;
  const ModelInputs init = a.init.empty() ? ModelInputs::zeros(rig) : loadInputs(rig, a.init);
  const FitResult r = fit(rig, target, cfg, init);

  const std::string prefix = stripMeshExtension(a.out);
  const std::string meshPath = hasMeshExtension(fs::path(a.out)) ? a.out : prefix + ".obj";
  saveMesh(meshPath, Mesh{r.mesh, rig.topology});
  json j = inputsToJson(rig, r.inputs);
  j["trace"] = r.trace;
  j["loss"] = {{"data", r.final.data}, {"keypoint", r.final.keypoint}, {"limit", r.final.limit},
               {"offset_l2", r.final.offsetL2}, {"offset_laplacian", r.final.offsetLaplacian},
               {"total", r.final.total}};
  j["diverged"] = r.diverged;
  j["data2model_mm"] = evaluateData2Model(target.points, r.mesh, rig.topology, target.excludedVertices);
  if (r.offsets.size() > 0) {
    j["offsets"] = toStd(r.offsets);
  }
  writeText(prefix + ".json", j.dump(1) + "\n");
  std::cerr << "fit: " << r.trace.size() << " iterations, loss " << r.final.total << ", " << r.wallSeconds << " s\n";
  if (r.diverged) {
    std::cerr << "error: fit diverged (non-finite loss); wrote the last finite state\n";
    return 3;
  }
  return 0;
}

struct TrainArgs {
  std::string rig, dataset, joints, hidden = "32,32", out;
  double l1 = 0, lr = 1e-3;
  size_t epochs = 200, batch = 32, embedding = 8;
  uint64_t seed = 0;
};

std::vector<CorrectiveSample> loadDataset(const RigModel& rig, const fs::path& dir, CorrectiveTargetKind& kind) {
  const fs::path index = dir / "dataset.json";
  const json j = readJson(index.string());
  const std::string k = j.value("kind", "rest");
  if (k == "rest") {
    kind = CorrectiveTargetKind::Residual;
  } else if (k == "posed") {
    kind = CorrectiveTargetKind::Posed;
  } else {
    throw DataError(index.string() + ": kind must be 'rest' or 'posed'");
  }
  if (!j.contains("samples") || !j["samples"].is_array()) {
    throw DataError(index.string() + ": missing 'samples' array");
  }
  std::vector<CorrectiveSample> out;
  for (const auto& s : j["samples"]) {
    const ModelInputs in = inputsFromJson(rig, s, index.string());
    const std::string meshPath = (dir / s.at("mesh").get<std::string>()).string();
    const Mesh m = loadMesh(meshPath);
    if (m.topology.vertexCount != rig.vertexCount()) {
      throw DataError(meshPath + ": vertex count " + std::to_string(m.topology.vertexCount) + " != rig " +
                      std::to_string(rig.vertexCount()));
    }
    CorrectiveSample cs;
    cs.pose = in.pose;
    cs.identity = in.identity;
    if (kind == CorrectiveTargetKind::Residual) {
      // Rest-space registration: offsets relative to the template and identity.
      cs.target = m.positions - rig.restPositions - rig.identity.apply(in.identity);
    } else {
      cs.target = m.positions;
    }
    out.push_back(std::move(cs));
  }
  return out;
}

int runTrain(const TrainArgs& a) {
  RigModel rig = openRig(a.rig);
  CorrectiveTargetKind kind = CorrectiveTargetKind::Residual;
  const auto dataset = loadDataset(rig, fs::path(a.dataset), kind);

  std::vector<size_t> joints;
  if (!a.joints.empty()) {
    std::stringstream ss(a.joints);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto j = rig.skeleton.findJoint(name);
      if (!j) {
        throw DataError("--joints: unknown joint '" + name + "'");
      }
      joints.push_back(*j);
    }
  } else if (!rig.correctives.empty()) {
    for (const auto& jc : rig.correctives.joints) {
      joints.push_back(jc.joint);
    }
  } else {
    for (size_t j = 1; j < rig.jointCount(); ++j) {
      joints.push_back(j);
    }
  }
  CorrectiveArchitecture arch;
  arch.hiddenWidths = parseCounts(a.hidden, "--hidden");
  arch.embeddingSize = a.embedding;
  // Residual targets must not see the rig's own correctives twice.
  RigModel base = rig;
  base.correctives = {};
  const CorrectiveModel init =
      initCorrectiveModel(rig.topology, rig.restPositions, rig.skinWeights, rig.skeleton, joints, arch, a.seed);
  CorrectiveTrainingConfig cfg;
  cfg.l1 = a.l1;
  cfg.learningRate = a.lr;
  cfg.epochs = a.epochs;
  cfg.batchSize = a.batch;
  cfg.seed = a.seed;
  cfg.targetKind = kind;
  const auto result = trainCorrectives(base, init, dataset, cfg);
  rig.correctives = result.model;
  rig.finalize();
  saveRig(rig, a.out);
  const double err = correctiveReconstructionError(base, result.model, dataset, kind);
  std::cerr << "train-correctives: " << dataset.size() << " samples, final epoch loss "
            << (result.epochLoss.empty() ? 0.0 : result.epochLoss.back()) << ", reconstruction " << err << "\n";
  return 0;
}

struct IdentityArgs {
  std::string dir, masks, counts = "20,20,5", rig, out, symmetry;
  std::vector<std::string> drop;
  bool mirror = false, dropAsymmetric = false;
  double asymmetryThreshold = 0.1;
};

std::vector<RegionMask> loadRegionMasks(const std::string& path, size_t vertexCount) {
  const json j = readJson(path);
  if (!j.is_array()) {
    throw DataError(path + ": expected an array of {name, weights}");
  }
  std::vector<RegionMask> out;
  try {
    for (const auto& r : j) {
      RegionMask m;
      m.name = r.at("name").get<std::string>();
      const auto& w = r.at("weights");
      if (w.size() != vertexCount) {
        throw DataError(path + ": region '" + m.name + "' has " + std::to_string(w.size()) + " weights, expected " +
                        std::to_string(vertexCount));
      }
      m.weights = vectorFrom(w, vertexCount, path);
      out.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return out;
}

int runBuildIdentity(const IdentityArgs& a) {
  RigModel rig = openRig(a.rig);
  ShapeSet shapes;
  for (const auto& p : listMeshes(a.dir)) {
    const Mesh m = loadMesh(p.string());
    if (m.topology.vertexCount != rig.vertexCount()) {
      throw DataError(p.string() + ": vertex count " + std::to_string(m.topology.vertexCount) + " != rig " +
                      std::to_string(rig.vertexCount()));
    }
    shapes.shapes.push_back(m.positions);
    shapes.subjects.push_back(p.stem().string());
  }
  if (shapes.shapes.size() < 2) {
    throw DataError(a.dir + ": need at least 2 registrations");
  }
  std::optional<SymmetryMap> symmetry;
  if (!a.symmetry.empty()) {
    const json j = readJson(a.symmetry);
    if (!j.is_array() || j.size() != rig.vertexCount()) {
      throw DataError(a.symmetry + ": expected an array of " + std::to_string(rig.vertexCount()) + " vertex indices");
    }
    SymmetryMap map;
    for (const auto& v : j) {
      if (!v.is_number_unsigned()) {
        throw DataError(a.symmetry + ": vertex indices must be non-negative integers");
      }
      map.permutation.push_back(v.get<uint32_t>());
    }
    map.validate();
    symmetry = std::move(map);
  } else if (a.mirror || a.dropAsymmetric) {
    symmetry = SymmetryMap::fromTemplate(rig.restPositions);
  }
  // region name -> component indices removed by hand
  std::map<std::string, std::vector<size_t>> manualDrop;
  for (const auto& d : a.drop) {
    const auto colon = d.find(':');
    if (colon == std::string::npos) {
      throw DataError("--drop expects region:i,j,... got '" + d + "'");
    }
    auto& list = manualDrop[d.substr(0, colon)];
    for (const size_t i : parseCounts(d.substr(colon + 1), "--drop")) {
      list.push_back(i);
    }
  }
  if (a.mirror) {
    shapes = mirrorAugment(shapes, *symmetry);
  }
  const auto masks = loadRegionMasks(a.masks, rig.vertexCount());
  const auto counts = parseCounts(a.counts, "--counts");
  if (counts.size() != masks.size()) {
    throw DataError("--counts has " + std::to_string(counts.size()) + " entries for " + std::to_string(masks.size()) +
                    " regions");
  }
  std::vector<std::string> warnings;
  std::vector<RegionSelection> regions;
  for (size_t r = 0; r < masks.size(); ++r) {
    const size_t available = std::min(shapes.shapes.size() - 1, 3 * rig.vertexCount());
    RegionSelection sel;
    // Extra components replace any that get dropped as asymmetric.
    const auto manual = manualDrop.find(masks[r].name);
    const size_t extra = manual == manualDrop.end() ? 0 : manual->second.size();
    const size_t computed = std::min(available, (a.dropAsymmetric ? 2 * counts[r] : counts[r]) + extra);
    sel.pca = maskedPca(shapes, masks[r], computed, &warnings);
    sel.count = counts[r];
    if (a.dropAsymmetric) {
      sel.removed = detectAsymmetricComponents(sel.pca.components, *symmetry, a.asymmetryThreshold);
      std::cerr << "build-identity: region " << masks[r].name << ": dropped " << sel.removed.size()
                << " asymmetric components\n";
    }
    if (manual != manualDrop.end()) {
      for (const size_t i : manual->second) {
        if (i >= size_t(sel.pca.components.cols())) {
          throw DataError("--drop: region " + masks[r].name + " has no component " + std::to_string(i));
        }
        if (std::find(sel.removed.begin(), sel.removed.end(), i) == sel.removed.end()) {
          sel.removed.push_back(i);
        }
      }
      manualDrop.erase(manual);
    }
    regions.push_back(std::move(sel));
  }
  if (!manualDrop.empty()) {
    throw DataError("--drop: no region named '" + manualDrop.begin()->first + "'");
  }
  IdentitySpace space = assembleIdentitySpace(regions, &warnings);
  printWarnings(warnings);
  rig.restPositions = space.mean;
  rig.identity = space.basis;
  if (!rig.correctives.empty()) {
    for (auto& jc : rig.correctives.joints) {
      jc.mask = initMask(rig.topology, rig.restPositions, rig.skinWeights, rig.skeleton, jc.joint);
    }
  }
  rig.finalize();
  saveRig(rig, a.out);
  return 0;
}

struct LodArgs {
  std::string rig, target, out;
  bool smooth = false, reinitMasks = false;
  size_t maxInfluences = 0;
};

int runLod(const LodArgs& a) {
  const RigModel src = openRig(a.rig);
  std::vector<std::string> warnings;
  const Mesh target = loadMesh(a.target, &warnings);
  LodTransferOptions opts;
  opts.smooth = a.smooth;
  opts.reinitMasks = a.reinitMasks;
  opts.maxInfluences = a.maxInfluences;
  const RigModel out = transferRig(src, target.topology, target.positions, opts, &warnings);
  printWarnings(warnings);
  saveRig(out, a.out);
  return 0;
}

struct EvalArgs {
  std::string rig, dir, components = "2,4,8,16", mask, out;
  size_t iters = 2500;
  double lr = 0.01;
  uint64_t seed = 0;
  bool noTiming = false;
};

int runEval(const EvalArgs& a) {
  const RigModel rig = openRig(a.rig);
  const fs::path dir(a.dir);
  const auto scans = listMeshes(dir);
  if (scans.empty()) {
    throw DataError(a.dir + ": no .obj or .ply scans");
  }
  std::vector<bool> mask;
  if (!a.mask.empty()) {
    mask = loadMask(a.mask, rig.vertexCount());
  } else if (fs::exists(dir / "mask.json")) {
    mask = loadMask((dir / "mask.json").string(), rig.vertexCount());
  }
  struct Case {
    ScanTarget target;
    ModelInputs init;
  };
  std::vector<Case> cases;
  for (const auto& p : scans) {
    Case c;
    c.target.points = loadPoints(p.string());
    c.target.excludedVertices = mask;
    const fs::path stem = p.parent_path() / p.stem();
    if (fs::exists(stem.string() + ".keypoints.json")) {
      c.target.keypoints = loadKeypoints(stem.string() + ".keypoints.json");
    }
    c.init = fs::exists(stem.string() + ".init.json") ? loadInputs(rig, stem.string() + ".init.json")
                                                       : ModelInputs::zeros(rig);
    cases.push_back(std::move(c));
  }
  const auto counts = parseCounts(a.components, "--components");
  std::ostringstream csv;
  csv << "components,mean_mm,median_mm,p95_mm,runtime_s\n";
  bool diverged = false;
  for (const size_t k : counts) {
    if (k > rig.identity.size()) {
      throw DataError("--components: " + std::to_string(k) + " exceeds the rig's " +
                      std::to_string(rig.identity.size()) + " identity components");
    }
    FitConfig cfg;
    cfg.iterations = a.iters;
    cfg.learningRate = a.lr;
    cfg.seed = a.seed;
    cfg.free = FreeVariables::parse("pose,shape");
    cfg.identityComponents = long(k);
    std::vector<double> errors;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& c : cases) {
      const FitResult r = fit(rig, c.target, cfg, c.init);
      diverged = diverged || r.diverged;
      errors.push_back(evaluateData2Model(c.target.points, r.mesh, rig.topology, c.target.excludedVertices));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double mean = 0;
    for (const double e : errors) {
      mean += e / double(errors.size());
    }
    char runtime[32];
    std::snprintf(runtime, sizeof(runtime), "%.3f", a.noTiming ? 0.0 : seconds);
    csv << k << "," << shortest(mean) << "," << shortest(percentile(errors, 0.5)) << ","
        << shortest(percentile(errors, 0.95)) << "," << runtime << "\n";
    std::cerr << "eval: " << k << " components, median " << percentile(errors, 0.5) << " mm\n";
  }
  writeText(a.out, csv.str());
  if (diverged) {
    std::cerr << "error: at least one fit diverged\n";
    return 3;
  }
  return 0;
}

struct SynthArgs {
  std::string spec, out, benchmark, dataset, registrations, kind = "rest";
  size_t count = 20;
  double spread = 0.6;
  uint64_t seed = 0;
};

std::string indexed(const std::string& prefix, size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return prefix + buf;
}

int runSynth(const SynthArgs& a) {
  SyntheticRigSpec spec;
  if (!a.spec.empty()) {
    const bool inlineJson = !fs::exists(a.spec) && a.spec.find_first_not_of(" \t\n") != std::string::npos &&
        a.spec[a.spec.find_first_not_of(" \t\n")] == '{';
    spec = SyntheticRigSpec::fromJson(inlineJson ? a.spec : readText(a.spec));
  }
  const RigModel rig = generateSyntheticRig(spec);
  saveRig(rig, a.out);
  // Data generated below comes from the float32 rig that was just written.
  const RigModel saved = loadRig(a.out);

  if (!a.benchmark.empty()) {
    const fs::path dir(a.benchmark);
    fs::create_directories(dir);
    writeText((dir / "mask.json").string(), maskToJson(syntheticEvaluationMask(saved)).dump() + "\n");
    json truth = json::object();
    for (size_t i = 0; i < a.count; ++i) {
      const auto bc = generateBenchmarkCase(saved, a.seed * 1000003ULL + i);
      const std::string name = indexed("scan_", i);
      Mesh cloud;
      cloud.topology.vertexCount = bc.target.points.size();
      cloud.positions.resize(Eigen::Index(3 * bc.target.points.size()));
      for (size_t p = 0; p < bc.target.points.size(); ++p) {
        cloud.positions.segment<3>(Eigen::Index(3 * p)) = bc.target.points[p];
      }
      saveMesh((dir / (name + ".ply")).string(), cloud);
      writeText((dir / (name + ".keypoints.json")).string(), keypointsToJson(bc.target.keypoints).dump(1) + "\n");
      writeText((dir / (name + ".init.json")).string(), inputsToJson(saved, bc.init).dump(1) + "\n");
      truth[name] = inputsToJson(saved, bc.truth);
    }
    writeText((dir / "truth.json").string(), truth.dump(1) + "\n");
  }

  if (!a.dataset.empty()) {
    const fs::path dir(a.dataset);
    fs::create_directories(dir);
    if (saved.correctives.empty()) {
      throw DataError("synth: --dataset needs a spec with correctives");
    }
    CorrectiveTargetKind kind;
    if (a.kind == "rest") {
      kind = CorrectiveTargetKind::Residual;
    } else if (a.kind == "posed") {
      kind = CorrectiveTargetKind::Posed;
    } else {
      throw DataError("--kind must be 'rest' or 'posed'");
    }
    const auto samples = generateCorrectiveDataset(saved, saved.correctives, a.count, a.seed, kind, a.spread);
    json index{{"kind", a.kind}, {"samples", json::array()}};
    for (size_t i = 0; i < samples.size(); ++i) {
      const std::string file = indexed("sample_", i) + ".obj";
      const VecX positions = kind == CorrectiveTargetKind::Residual ? VecX(saved.restPositions + samples[i].target)
                                                                    : samples[i].target;
      saveMesh((dir / file).string(), Mesh{positions, saved.topology});
      ModelInputs in = ModelInputs::zeros(saved);
      in.pose = samples[i].pose;
      json s = inputsToJson(saved, in);
      s.erase("identity");
      s.erase("expression");
      s["mesh"] = file;
      index["samples"].push_back(s);
    }
    writeText((dir / "dataset.json").string(), index.dump(1) + "\n");
  }

  if (!a.registrations.empty()) {
    const fs::path dir(a.registrations);
    fs::create_directories(dir);
    std::mt19937_64 rng(a.seed);
    for (size_t i = 0; i < a.count; ++i) {
      const VecX shape = saved.restPositions + saved.identity.apply(randomIdentity(saved, rng));
      saveMesh((dir / (indexed("reg_", i) + ".obj")).string(), Mesh{shape, saved.topology});
    }
    json masks = json::array();
    for (const auto& m : syntheticRegionMasks(saved)) {
      masks.push_back({{"name", m.name}, {"weights", toStd(m.weights)}});
    }
    writeText((dir / "masks.json").string(), masks.dump() + "\n");
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parametric body rig toolkit"};
  app.require_subcommand(1);

  PoseArgs pose;
  auto* cPose = app.add_subcommand("pose", "Evaluate the rig and export the posed mesh");
  cPose->add_option("rig", pose.rig, "Rig file")->required();
  cPose->add_option("--params", pose.params, "JSON file, inline JSON or name=value list");
  cPose->add_option("-o,--output", pose.out, "Output .obj or .ply")->required();

  FitArgs fitArgs;
  auto* cFit = app.add_subcommand("fit", "Fit the rig to a scan");
  cFit->add_option("rig", fitArgs.rig, "Rig file")->required();
  cFit->add_option("scan", fitArgs.scan, "Scan point cloud (.ply/.obj)")->required();
  cFit->add_option("--keypoints", fitArgs.keypoints, "JSON {joint: [x, y, z]}");
  cFit->add_option("--mask", fitArgs.mask, "JSON list of excluded vertices");
  cFit->add_option("--free", fitArgs.free, "pose,skeleton,shape,expression,skeleton-coeffs,offsets");
  cFit->add_option("--iters", fitArgs.iters, "Adam iterations")->check(CLI::PositiveNumber);
  cFit->add_option("--lr", fitArgs.lr, "Learning rate");
  cFit->add_option("--components", fitArgs.components, "Leading identity components to optimize");
  cFit->add_option("--max-points", fitArgs.maxPoints, "Random subset of scan points (0 = all)");
  cFit->add_option("--init", fitArgs.init, "Initial parameters (JSON)");
  cFit->add_option("--seed", fitArgs.seed, "Random seed");
  cFit->add_option("-o,--output", fitArgs.out, "Output prefix; writes <prefix>.obj and <prefix>.json")->required();

  TrainArgs train;
  auto* cTrain = app.add_subcommand("train-correctives", "Train pose correctives");
  cTrain->add_option("rig", train.rig, "Rig file")->required();
  cTrain->add_option("dataset", train.dataset, "Directory with dataset.json")->required();
  cTrain->add_option("--l1", train.l1, "Mask sparsity weight");
  cTrain->add_option("--epochs", train.epochs, "Epochs");
  cTrain->add_option("--lr", train.lr, "Learning rate");
  cTrain->add_option("--batch", train.batch, "Minibatch size")->check(CLI::PositiveNumber);
  cTrain->add_option("--joints", train.joints, "Comma list of joint groups");
  cTrain->add_option("--hidden", train.hidden, "Hidden layer widths");
  cTrain->add_option("--embedding", train.embedding, "Embedding size c")->check(CLI::PositiveNumber);
  cTrain->add_option("--seed", train.seed, "Random seed");
  cTrain->add_option("-o,--output", train.out, "Output rig")->required();

  IdentityArgs ident;
  auto* cIdent = app.add_subcommand("build-identity", "Build a regional PCA identity space");
  cIdent->add_option("registrations", ident.dir, "Directory of registered meshes")->required();
  cIdent->add_option("--rig", ident.rig, "Rig providing topology, skeleton and skinning")->required();
  cIdent->add_option("--masks", ident.masks, "JSON [{name, weights}]")->required();
  cIdent->add_option("--counts", ident.counts, "Components per region");
  cIdent->add_flag("--mirror", ident.mirror, "Add mirrored copies of every registration");
  cIdent->add_flag("--drop-asymmetric", ident.dropAsymmetric, "Remove asymmetric components");
  cIdent->add_option("--asymmetry-threshold", ident.asymmetryThreshold, "Asymmetry ratio threshold");
  cIdent->add_option("--symmetry", ident.symmetry, "JSON array: mirror partner of every vertex");
  cIdent->add_option("--drop", ident.drop, "Components to remove by hand, region:i,j (repeatable)");
  cIdent->add_option("-o,--output", ident.out, "Output rig")->required();

  LodArgs lod;
  auto* cLod = app.add_subcommand("lod-transfer", "Transfer a rig to another mesh resolution");
  cLod->add_option("rig", lod.rig, "Source rig")->required();
  cLod->add_option("template", lod.target, "Target template mesh")->required();
  cLod->add_flag("--smooth", lod.smooth, "One Laplacian smoothing pass on transferred fields");
  cLod->add_flag("--reinit-masks", lod.reinitMasks, "Recompute corrective masks on the target");
  cLod->add_option("--max-influences", lod.maxInfluences, "Influence cap on the target");
  cLod->add_option("-o,--output", lod.out, "Output rig")->required();

  EvalArgs ev;
  auto* cEval = app.add_subcommand("eval", "Fit every scan per component count and report errors");
  cEval->add_option("rig", ev.rig, "Rig file")->required();
  cEval->add_option("scans", ev.dir, "Directory of scans")->required();
  cEval->add_option("--components", ev.components, "Identity component counts");
  cEval->add_option("--mask", ev.mask, "Excluded vertices (default: <scans>/mask.json)");
  cEval->add_option("--iters", ev.iters, "Adam iterations per fit")->check(CLI::PositiveNumber);
  cEval->add_option("--lr", ev.lr, "Learning rate");
  cEval->add_option("--seed", ev.seed, "Random seed");
  cEval->add_flag("--no-timing", ev.noTiming, "Write 0 in the runtime column");
  cEval->add_option("-o,--output", ev.out, "CSV report")->required();

  SynthArgs syn;
  auto* cSynth = app.add_subcommand("synth", "Generate a synthetic rig and test data");
  cSynth->add_option("--spec", syn.spec, "Generator spec: JSON file or inline JSON");
  cSynth->add_option("--benchmark", syn.benchmark, "Write benchmark scans to this directory");
  cSynth->add_option("--dataset", syn.dataset, "Write a corrective training set to this directory");
  cSynth->add_option("--kind", syn.kind, "Dataset targets: rest or posed");
  cSynth->add_option("--spread", syn.spread, "Dataset pose range, radians");
  cSynth->add_option("--registrations", syn.registrations, "Write identity registrations to this directory");
  cSynth->add_option("--count", syn.count, "Scans, samples or registrations to write");
  cSynth->add_option("--seed", syn.seed, "Random seed for generated data");
  cSynth->add_option("-o,--output", syn.out, "Output rig")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cPose) {
      return runPose(pose);
    }
    if (*cFit) {
      return runFit(fitArgs);
    }
    if (*cTrain) {
      return runTrain(train);
    }
    if (*cIdent) {
      return runBuildIdentity(ident);
    }
    if (*cLod) {
      return runLod(lod);
    }
    if (*cEval) {
      return runEval(ev);
    }
    if (*cSynth) {
      return runSynth(syn);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
