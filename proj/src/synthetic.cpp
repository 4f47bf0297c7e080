#include "rigkit/synthetic.hpp"

#include "rigkit/error.hpp"

#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rigkit {

SyntheticRigSpec SyntheticRigSpec::fromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synthetic spec: ") + e.what());
  }
  require(j.is_object(), "synthetic spec: expected a JSON object");
  SyntheticRigSpec s;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "layout") {
        s.layout = v.get<std::string>();
      } else if (key == "chain_joints") {
        s.chainJoints = v.get<size_t>();
      } else if (key == "ring_vertices") {
        s.ringVertices = v.get<size_t>();
      } else if (key == "rings") {
        s.rings = v.get<size_t>();
      } else if (key == "resolution") {
        s.resolution = v.get<double>();
      } else if (key == "fingers") {
        s.fingers = v.get<bool>();
      } else if (key == "identity_components") {
        s.identityComponents = v.get<size_t>();
      } else if (key == "expression_components") {
        s.expressionComponents = v.get<size_t>();
      } else if (key == "correctives") {
        s.correctives = v.get<bool>();
      } else if (key == "max_influences") {
        s.maxInfluences = v.get<size_t>();
      } else if (key == "seed") {
        s.seed = v.get<uint64_t>();
      } else {
        throw DataError("synthetic spec: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synthetic spec: ") + e.what());
  }
  return s;
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Knot {
  double a;
  double r;
};

double interpolate(const std::vector<Knot>& knots, double a) {
  if (a <= knots.front().a) {
    return knots.front().r;
  }
  for (size_t k = 1; k < knots.size(); ++k) {
    if (a <= knots[k].a) {
      const double t = (a - knots[k - 1].a) / (knots[k].a - knots[k - 1].a);
      return (1 - t) * knots[k - 1].r + t * knots[k].r;
    }
  }
  return knots.back().r;
}

// C1 step from 0 at x=-1 to 1 at x=1.
double smoothStep(double x) {
  if (x <= -1) {
    return 0;
  }
  if (x >= 1) {
    return 1;
  }
  return 0.5 + 0.75 * x - 0.25 * x * x * x;
}

struct Tube {
  Vec3 start;
  Vec3 dir;
  Vec3 u; // u x w == dir
  Vec3 w;
  double length = 1;
  size_t rings = 8;
  size_t ringVertices = 12;
  std::vector<Knot> radius; // axial distance -> radius
  // Segment k covers [bounds[k], bounds[k+1]) along the axis.
  std::vector<double> bounds;
  std::vector<uint32_t> joints;
  int group = 0;
};

// Per-vertex data the planted fields are built from.
struct VertexInfo {
  int group = 0;
  double t = 0; // axial position in [0, 1]
  double cosPhi = 0;
  double cos2Phi = 0;
  Vec3 normal = Vec3::Zero();
};

struct Builder {
  std::vector<Vec3> positions;
  std::vector<Triangle> triangles;
  std::vector<VertexInfo> info;
  std::vector<std::vector<Influence>> influences;
  double blend = 0.03;

  std::vector<Influence> segmentWeights(const Tube& tube, double a) const {
    std::vector<Influence> out;
    const size_t n = tube.joints.size();
    for (size_t k = 0; k < n; ++k) {
      const double lo = k == 0 ? 1.0 : smoothStep((a - tube.bounds[k]) / blend);
      const double hi = k + 1 == n ? 0.0 : smoothStep((a - tube.bounds[k + 1]) / blend);
      const double weight = lo - hi;
      if (weight > 1e-12) {
        out.push_back({tube.joints[k], weight});
      }
    }
    return out;
  }

  // Returns the index of the first vertex. `mirrorX` emits the reflection of
  // the tube through x = 0 with flipped winding.
  size_t add(const Tube& tube, bool mirrorX) {
    const size_t base = positions.size();
    const size_t n = tube.ringVertices;
    std::vector<double> c(n), s(n);
    for (size_t k = 0; k < n; ++k) {
      c[k] = std::cos(2 * kPi * double(k) / double(n));
      s[k] = std::sin(2 * kPi * double(k) / double(n));
    }
    // Exact pairing k <-> n-k so that tubes centered on x = 0 with w = x
    // are mirror symmetric to the last bit.
    s[0] = 0;
    s[n / 2] = 0;
    for (size_t k = 1; k < n / 2; ++k) {
      s[n - k] = -s[k];
      c[n - k] = c[k];
    }
    const Vec3 flip(mirrorX ? -1 : 1, 1, 1);
    auto emit = [&](const Vec3& p, const Vec3& normal, double a, double cphi, double c2phi) {
      positions.push_back(p.cwiseProduct(flip));
      info.push_back({tube.group, a / tube.length, cphi, c2phi, normal.cwiseProduct(flip)});
      influences.push_back(segmentWeights(tube, a));
    };
    for (size_t r = 0; r < tube.rings; ++r) {
      const double a = tube.length * (double(r) + 0.5) / double(tube.rings);
      const double rad = interpolate(tube.radius, a);
      const Vec3 center = tube.start + a * tube.dir;
      for (size_t k = 0; k < n; ++k) {
        const Vec3 radial = c[k] * tube.u + s[k] * tube.w;
        emit(center + rad * radial, radial, a, c[k], c[k] * c[k] - s[k] * s[k]);
      }
    }
    const size_t bottom = positions.size();
    emit(tube.start, -tube.dir, 0.0, 0.0, 0.0);
    const size_t top = positions.size();
    emit(tube.start + tube.length * tube.dir, tube.dir, tube.length, 0.0, 0.0);

    auto at = [&](size_t r, size_t k) { return uint32_t(base + r * n + (k % n)); };
    auto tri = [&](uint32_t a, uint32_t b, uint32_t cc) {
      if (mirrorX) {
        triangles.push_back({a, cc, b});
      } else {
        triangles.push_back({a, b, cc});
      }
    };
    for (size_t r = 0; r + 1 < tube.rings; ++r) {
      for (size_t k = 0; k < n; ++k) {
        tri(at(r, k), at(r, k + 1), at(r + 1, k + 1));
        tri(at(r, k), at(r + 1, k + 1), at(r + 1, k));
      }
    }
    for (size_t k = 0; k < n; ++k) {
      tri(uint32_t(bottom), at(0, k + 1), at(0, k));
      tri(uint32_t(top), at(tube.rings - 1, k), at(tube.rings - 1, k + 1));
    }
    return base;
  }
};

struct JointDef {
  std::string name;
  std::optional<size_t> parent;
  Vec3 position;
};

// Orients every joint frame so its x-axis runs along the bone to its first
// child (leaves continue their parent's bone direction).
Skeleton buildSkeleton(const std::vector<JointDef>& defs) {
  const size_t n = defs.size();
  std::vector<std::optional<size_t>> firstChild(n);
  for (size_t j = 0; j < n; ++j) {
    if (defs[j].parent && !firstChild[*defs[j].parent]) {
      firstChild[*defs[j].parent] = j;
    }
  }
  std::vector<Mat3> frames(n);
  std::vector<Joint> joints(n);
  for (size_t j = 0; j < n; ++j) {
    Vec3 d;
    if (firstChild[j]) {
      d = defs[*firstChild[j]].position - defs[j].position;
    } else {
      require(defs[j].parent.has_value(), "synthetic rig: single-joint skeleton");
      d = defs[j].position - defs[*defs[j].parent].position;
    }
    const Vec3 x = d.normalized();
    const Vec3 ref = std::abs(x.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 y = ref.cross(x).normalized();
    const Vec3 z = x.cross(y);
    Mat3 frame;
    frame << x, y, z;
    joints[j].name = defs[j].name;
    joints[j].parent = defs[j].parent;
    if (defs[j].parent) {
      const size_t p = *defs[j].parent;
      joints[j].offset = frames[p].transpose() * (defs[j].position - defs[p].position);
      joints[j].prerotation = matrixToEuler(frames[p].transpose() * frame);
    } else {
      joints[j].offset = defs[j].position;
      joints[j].prerotation = matrixToEuler(frame);
    }
    // Store the frame actually produced by the Euler round trip.
    const Mat3 parentFrame = defs[j].parent ? frames[*defs[j].parent] : Mat3::Identity();
    frames[j] = parentFrame * eulerToMatrix(joints[j].prerotation);
  }
  return Skeleton(std::move(joints));
}

struct ParamBuilder {
  std::vector<std::string> names;
  std::vector<ParameterTransform::Entry> entries;
  std::vector<bool> skeleton;
  std::vector<std::optional<ParameterLimit>> limits;
  const Skeleton* skel = nullptr;

  size_t joint(const std::string& name) const {
    const auto j = skel->findJoint(name);
    require(j.has_value(), "synthetic rig: no joint " + name);
    return *j;
  }
  void add(
      const std::string& name,
      std::vector<std::tuple<std::string, size_t, double>> targets,
      bool isSkeleton,
      std::optional<ParameterLimit> limit) {
    const size_t col = names.size();
    names.push_back(name);
    for (const auto& [jn, dof, w] : targets) {
      entries.push_back({joint(jn) * kParametersPerJoint + dof, col, w});
    }
    skeleton.push_back(isSkeleton);
    limits.push_back(limit);
  }
  void rotation3(const std::string& prefix, const std::string& jn, double lim) {
    add(prefix + "_rx", {{jn, kRx, 1.0}}, false, ParameterLimit{-lim, lim});
    add(prefix + "_ry", {{jn, kRy, 1.0}}, false, ParameterLimit{-lim, lim});
    add(prefix + "_rz", {{jn, kRz, 1.0}}, false, ParameterLimit{-lim, lim});
  }
  ParameterTransform build() {
    return ParameterTransform(names, skel->jointCount() * kParametersPerJoint, entries, skeleton, limits);
  }
};

size_t scaled(size_t count, double resolution) {
  return std::max<size_t>(2, size_t(std::lround(double(count) * resolution)));
}

struct Layout {
  std::vector<JointDef> joints;
  Builder mesh;
  int groups = 1;
};

Layout humanoidLayout(const SyntheticRigSpec& spec) {
  Layout out;
  auto& defs = out.joints;
  auto addJoint = [&](const std::string& name, std::optional<size_t> parent, Vec3 p) {
    defs.push_back({name, parent, p});
    return uint32_t(defs.size() - 1);
  };
  const uint32_t pelvis = addJoint("pelvis", std::nullopt, {0, 1.0, 0});
  const uint32_t spine = addJoint("spine", pelvis, {0, 1.08, 0});
  const uint32_t chest = addJoint("chest", spine, {0, 1.28, 0});
  const uint32_t neck = addJoint("neck", chest, {0, 1.52, 0});
  const uint32_t head = addJoint("head", neck, {0, 1.62, 0});
  struct Side {
    uint32_t upperarm, forearm, hand, finger1, finger2, thigh, shin, foot;
  };
  Side sides[2];
  const char* prefixes[2] = {"l_", "r_"};
  for (int sd = 0; sd < 2; ++sd) {
    const double sx = sd == 0 ? 1.0 : -1.0;
    const std::string p = prefixes[sd];
    Side& s = sides[sd];
    s.upperarm = addJoint(p + "upperarm", chest, {sx * 0.18, 1.46, 0});
    s.forearm = addJoint(p + "forearm", s.upperarm, {sx * 0.46, 1.46, 0});
    s.hand = addJoint(p + "hand", s.forearm, {sx * 0.72, 1.46, 0});
    if (spec.fingers) {
      s.finger1 = addJoint(p + "finger1", s.hand, {sx * 0.78, 1.46, 0});
      s.finger2 = addJoint(p + "finger2", s.finger1, {sx * 0.81, 1.46, 0});
    }
  }
  for (int sd = 0; sd < 2; ++sd) {
    const double sx = sd == 0 ? 1.0 : -1.0;
    const std::string p = prefixes[sd];
    Side& s = sides[sd];
    s.thigh = addJoint(p + "thigh", pelvis, {sx * 0.09, 0.92, 0});
    s.shin = addJoint(p + "shin", s.thigh, {sx * 0.09, 0.52, 0});
    s.foot = addJoint(p + "foot", s.shin, {sx * 0.09, 0.12, 0});
  }

  const size_t n = spec.ringVertices;
  Tube torso;
  torso.start = {0, 0.88, 0};
  torso.dir = Vec3::UnitY();
  torso.u = Vec3::UnitZ();
  torso.w = Vec3::UnitX();
  torso.length = 0.98;
  torso.rings = scaled(28, spec.resolution);
  torso.ringVertices = 2 * n;
  torso.radius = {{0.0, 0.13}, {0.07, 0.16}, {0.22, 0.14}, {0.42, 0.17}, {0.57, 0.17}, {0.64, 0.07},
                  {0.72, 0.06}, {0.78, 0.09}, {0.88, 0.10}, {0.98, 0.05}};
  torso.bounds = {0.0, 0.20, 0.40, 0.64, 0.74};
  torso.joints = {pelvis, spine, chest, neck, head};
  torso.group = 0;
  out.mesh.add(torso, false);

  // Right limbs are exact mirror copies of the left ones.
  for (int sd = 0; sd < 2; ++sd) {
    const Side& s = sides[sd];
    Tube arm;
    arm.start = {0.10, 1.46, 0};
    arm.dir = Vec3::UnitX();
    arm.u = Vec3::UnitY();
    arm.w = Vec3::UnitZ();
    arm.length = 0.74;
    arm.rings = scaled(20, spec.resolution);
    arm.ringVertices = n;
    arm.radius = {{0.0, 0.055}, {0.08, 0.055}, {0.36, 0.045}, {0.62, 0.035}, {0.66, 0.045}, {0.74, 0.02}};
    arm.bounds = {0.0, 0.08, 0.36, 0.62};
    arm.joints = {chest, s.upperarm, s.forearm, s.hand};
    if (spec.fingers) {
      arm.bounds.push_back(0.68);
      arm.bounds.push_back(0.71);
      arm.joints.push_back(s.finger1);
      arm.joints.push_back(s.finger2);
    }
    arm.group = 1;
    out.mesh.add(arm, sd == 1);
  }
  for (int sd = 0; sd < 2; ++sd) {
    const Side& s = sides[sd];
    Tube leg;
    leg.start = {0.09, 1.0, 0};
    leg.dir = -Vec3::UnitY();
    leg.u = Vec3::UnitX();
    leg.w = Vec3::UnitZ();
    leg.length = 0.96;
    leg.rings = scaled(20, spec.resolution);
    leg.ringVertices = n;
    leg.radius = {{0.0, 0.08}, {0.08, 0.085}, {0.48, 0.055}, {0.88, 0.045}, {0.96, 0.04}};
    leg.bounds = {0.0, 0.08, 0.48, 0.88};
    leg.joints = {pelvis, s.thigh, s.shin, s.foot};
    leg.group = 2;
    out.mesh.add(leg, sd == 1);
  }
  out.groups = 3;
  return out;
}

Layout chainLayout(const SyntheticRigSpec& spec) {
  require(spec.chainJoints >= 2, "synthetic spec: a chain needs at least 2 joints");
  Layout out;
  const size_t nj = spec.chainJoints;
  Tube tube;
  tube.start = Vec3::Zero();
  tube.dir = Vec3::UnitY();
  tube.u = Vec3::UnitZ();
  tube.w = Vec3::UnitX();
  tube.length = 1.0;
  tube.rings = scaled(spec.rings > 0 ? spec.rings : 125, spec.resolution);
  tube.ringVertices = spec.ringVertices;
  tube.radius = {{0.0, 0.06}, {0.5, 0.07}, {1.0, 0.05}};
  for (size_t k = 0; k < nj; ++k) {
    const double y = double(k) / double(nj);
    out.joints.push_back(
        {"j" + std::to_string(k), k == 0 ? std::nullopt : std::optional<size_t>(k - 1), Vec3(0, y, 0)});
    tube.bounds.push_back(y);
    tube.joints.push_back(uint32_t(k));
  }
  out.mesh.blend = std::min(0.03, 0.25 / double(nj));
  out.mesh.add(tube, false);
  out.groups = 1;
  return out;
}

ParameterTransform humanoidParameters(const Skeleton& skel, bool fingers) {
  ParamBuilder pb;
  pb.skel = &skel;
  pb.add("root_tx", {{"pelvis", kTx, 1.0}}, false, std::nullopt);
  pb.add("root_ty", {{"pelvis", kTy, 1.0}}, false, std::nullopt);
  pb.add("root_tz", {{"pelvis", kTz, 1.0}}, false, std::nullopt);
  pb.add("root_rx", {{"pelvis", kRx, 1.0}}, false, std::nullopt);
  pb.add("root_ry", {{"pelvis", kRy, 1.0}}, false, std::nullopt);
  pb.add("root_rz", {{"pelvis", kRz, 1.0}}, false, std::nullopt);
  for (const char* j : {"spine", "chest", "neck", "head"}) {
    pb.rotation3(j, j, 2.0);
  }
  for (const std::string p : {"l_", "r_"}) {
    pb.rotation3(p + "upperarm", p + "upperarm", 2.0);
    pb.add(p + "elbow", {{p + "forearm", kRz, 1.0}}, false, ParameterLimit{-2.0, 2.0});
    // Forearm twist spreads onto the hand.
    pb.add(p + "forearm_twist", {{p + "forearm", kRx, 1.0}, {p + "hand", kRx, 0.5}}, false, ParameterLimit{-1.5, 1.5});
    pb.add(p + "wrist_ry", {{p + "hand", kRy, 1.0}}, false, ParameterLimit{-2.0, 2.0});
    pb.add(p + "wrist_rz", {{p + "hand", kRz, 1.0}}, false, ParameterLimit{-2.0, 2.0});
    if (fingers) {
      pb.add(p + "finger1", {{p + "finger1", kRz, 1.0}}, false, ParameterLimit{-2.0, 2.0});
      pb.add(p + "finger2", {{p + "finger2", kRz, 1.0}}, false, ParameterLimit{-2.0, 2.0});
    }
  }
  for (const std::string p : {"l_", "r_"}) {
    pb.rotation3(p + "hip", p + "thigh", 2.0);
    pb.add(p + "knee", {{p + "shin", kRz, 1.0}}, false, ParameterLimit{-2.0, 2.0});
    pb.add(p + "ankle_ry", {{p + "foot", kRy, 1.0}}, false, ParameterLimit{-2.0, 2.0});
    pb.add(p + "ankle_rz", {{p + "foot", kRz, 1.0}}, false, ParameterLimit{-2.0, 2.0});
  }
  const ParameterLimit len{-0.1, 0.1};
  const ParameterLimit scale{-0.5, 0.5};
  pb.add("global_scale", {{"pelvis", kScale, 1.0}}, true, scale);
  pb.add("spine_length", {{"chest", kTx, 1.0}}, true, len);
  pb.add("neck_length", {{"head", kTx, 1.0}}, true, len);
  for (const std::string p : {"l_", "r_"}) {
    pb.add(p + "upperarm_length", {{p + "forearm", kTx, 1.0}}, true, len);
    pb.add(p + "forearm_length", {{p + "hand", kTx, 1.0}}, true, len);
    pb.add(p + "thigh_length", {{p + "shin", kTx, 1.0}}, true, len);
    pb.add(p + "shin_length", {{p + "foot", kTx, 1.0}}, true, len);
    pb.add(p + "hand_scale", {{p + "hand", kScale, 1.0}}, true, scale);
  }
  return pb.build();
}

ParameterTransform chainParameters(const Skeleton& skel) {
  ParamBuilder pb;
  pb.skel = &skel;
  pb.add("root_tx", {{"j0", kTx, 1.0}}, false, std::nullopt);
  pb.add("root_ty", {{"j0", kTy, 1.0}}, false, std::nullopt);
  pb.add("root_tz", {{"j0", kTz, 1.0}}, false, std::nullopt);
  for (size_t k = 0; k < skel.jointCount(); ++k) {
    const std::string j = "j" + std::to_string(k);
    pb.rotation3(j, j, 1.5);
  }
  pb.add("global_scale", {{"j0", kScale, 1.0}}, true, ParameterLimit{-0.5, 0.5});
  for (size_t k = 1; k < skel.jointCount(); ++k) {
    const std::string j = "j" + std::to_string(k);
    pb.add(j + "_length", {{j, kTx, 1.0}}, true, ParameterLimit{-0.1, 0.1});
  }
  return pb.build();
}

// Smooth scalar functions over the tube surfaces: cos(pi m t) times
// {1, cos(phi), cos(2 phi)}, one set per tube group. All are even in phi,
// so mirrored tubes carry mirrored values.
MatX functionBank(const std::vector<VertexInfo>& info, int groups, size_t frequencies) {
  const size_t per = 3 * frequencies;
  MatX bank = MatX::Zero(Eigen::Index(info.size()), Eigen::Index(per * size_t(groups)));
  for (size_t i = 0; i < info.size(); ++i) {
    const auto& v = info[i];
    for (size_t m = 0; m < frequencies; ++m) {
      const double axial = std::cos(kPi * double(m) * v.t);
      const double ang[3] = {1.0, v.cosPhi, v.cos2Phi};
      for (size_t a = 0; a < 3; ++a) {
        bank(Eigen::Index(i), Eigen::Index(size_t(v.group) * per + 3 * m + a)) = axial * ang[a];
      }
    }
  }
  return bank;
}

std::vector<double> bankDecay(int groups, size_t frequencies) {
  std::vector<double> decay;
  for (int g = 0; g < groups; ++g) {
    for (size_t m = 0; m < frequencies; ++m) {
      for (size_t a = 0; a < 3; ++a) {
        decay.push_back(1.0 / (1.0 + double(m) + double(a)));
      }
    }
  }
  return decay;
}

BlendshapeBasis plantedIdentity(const std::vector<VertexInfo>& info, int groups, size_t count, std::mt19937_64& rng) {
  BlendshapeBasis basis;
  const Eigen::Index nv = Eigen::Index(info.size());
  basis.deltas = MatX::Zero(3 * nv, Eigen::Index(count));
  basis.stddev = VecX::Zero(Eigen::Index(count));
  if (count == 0) {
    return basis;
  }
  const size_t frequencies = std::max<size_t>(4, (2 * count + 3 * size_t(groups) - 1) / (3 * size_t(groups)));
  const MatX bank = functionBank(info, groups, frequencies);
  const auto decay = bankDecay(groups, frequencies);
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatX mix(bank.cols(), Eigen::Index(count));
  for (Eigen::Index c = 0; c < mix.cols(); ++c) {
    for (Eigen::Index q = 0; q < mix.rows(); ++q) {
      mix(q, c) = gauss(rng) * decay[size_t(q)];
    }
  }
  const MatX amplitude = bank * mix; // V x count, radial displacement
  MatX raw(3 * nv, Eigen::Index(count));
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (Eigen::Index c = 0; c < raw.cols(); ++c) {
      raw.block<3, 1>(3 * i, c) = amplitude(i, c) * info[size_t(i)].normal;
    }
  }
  const Eigen::HouseholderQR<MatX> qr(raw);
  basis.deltas = qr.householderQ() * MatX::Identity(raw.rows(), raw.cols());
  for (size_t k = 0; k < count; ++k) {
    basis.names.push_back("identity_" + std::to_string(k));
    basis.stddev[Eigen::Index(k)] = 0.4 * std::pow(0.85, double(k));
  }
  return basis;
}

BlendshapeBasis plantedExpression(
    const VecX& rest,
    const std::vector<VertexInfo>& info,
    const std::vector<uint32_t>& centers,
    std::mt19937_64& rng) {
  BlendshapeBasis basis;
  const Eigen::Index nv = Eigen::Index(info.size());
  basis.deltas = MatX::Zero(3 * nv, Eigen::Index(centers.size()));
  std::uniform_real_distribution<double> amp(0.5, 1.0);
  const double sigma = 0.03;
  for (size_t k = 0; k < centers.size(); ++k) {
    const Vec3 c = vertexAt(rest, centers[k]);
    const double a = 0.01 * amp(rng) * (k % 2 == 0 ? 1.0 : -1.0);
    for (Eigen::Index i = 0; i < nv; ++i) {
      const double d2 = (vertexAt(rest, size_t(i)) - c).squaredNorm();
      const double g = std::exp(-d2 / (2 * sigma * sigma));
      if (g > 1e-6) {
        basis.deltas.block<3, 1>(3 * i, Eigen::Index(k)) = a * g * info[size_t(i)].normal;
      }
    }
    basis.names.push_back("expression_" + std::to_string(k));
  }
  return basis;
}

bool startsWith(const std::string& s, const std::string& prefix) {
  return s.compare(0, prefix.size(), prefix) == 0;
}

bool isExtremityJoint(const std::string& name) {
  return name == "head" || name.find("hand") != std::string::npos || name.find("finger") != std::string::npos;
}

} // namespace

std::vector<size_t> syntheticCorrectiveJoints(const RigModel& rig) {
  std::vector<size_t> out;
  const auto& skel = rig.skeleton;
  if (skel.findJoint("pelvis")) {
    for (const char* name : {"spine", "chest", "neck", "l_upperarm", "r_upperarm", "l_forearm", "r_forearm", "l_thigh",
                             "r_thigh", "l_shin", "r_shin"}) {
      if (const auto j = skel.findJoint(name)) {
        out.push_back(*j);
      }
    }
    return out;
  }
  for (size_t j = 1; j + 1 < skel.jointCount(); ++j) {
    out.push_back(j);
  }
  return out;
}

RigModel generateSyntheticRig(const SyntheticRigSpec& spec) {
  require(spec.layout == "humanoid" || spec.layout == "chain", "synthetic spec: unknown layout '" + spec.layout + "'");
  require(spec.ringVertices >= 4 && spec.ringVertices % 2 == 0, "synthetic spec: ring_vertices must be even and >= 4");
  require(spec.resolution > 0, "synthetic spec: resolution must be positive");
  require(spec.maxInfluences >= 1, "synthetic spec: max_influences must be positive");
  require(spec.layout != "chain" || spec.rings == 0 || spec.rings >= 2, "synthetic spec: a chain needs at least 2 rings");

  std::mt19937_64 rng(spec.seed);
  Layout layout = spec.layout == "humanoid" ? humanoidLayout(spec) : chainLayout(spec);

  RigModel rig;
  rig.skeleton = buildSkeleton(layout.joints);
  rig.parameterTransform =
      spec.layout == "humanoid" ? humanoidParameters(rig.skeleton, spec.fingers) : chainParameters(rig.skeleton);
  const auto& mesh = layout.mesh;
  rig.topology.vertexCount = mesh.positions.size();
  rig.topology.triangles = mesh.triangles;
  rig.restPositions.resize(Eigen::Index(3 * mesh.positions.size()));
  for (size_t i = 0; i < mesh.positions.size(); ++i) {
    rig.restPositions.segment<3>(Eigen::Index(3 * i)) = mesh.positions[i];
  }
  rig.skinWeights = capInfluences(mesh.influences, spec.maxInfluences);

  rig.identity = plantedIdentity(mesh.info, layout.groups, spec.identityComponents, rng);

  // Expression bumps centered on random vertices of the head (chain: last
  // joint).
  std::vector<uint32_t> candidates;
  const size_t faceJoint = spec.layout == "humanoid" ? *rig.skeleton.findJoint("head") : rig.jointCount() - 1;
  for (size_t i = 0; i < rig.vertexCount(); ++i) {
    if (rig.skinWeights.dominantJoint(i) == faceJoint && mesh.info[i].normal.dot(Vec3::UnitY()) < 0.5) {
      candidates.push_back(uint32_t(i));
    }
  }
  require(!candidates.empty() || spec.expressionComponents == 0, "synthetic rig: no vertices for expression shapes");
  std::vector<uint32_t> centers;
  for (size_t k = 0; k < spec.expressionComponents; ++k) {
    centers.push_back(candidates[std::uniform_int_distribution<size_t>(0, candidates.size() - 1)(rng)]);
  }
  rig.expression = plantedExpression(rig.restPositions, mesh.info, centers, rng);

  if (spec.layout == "humanoid") {
    // Skeleton coefficients: overall height, arm length, global scale.
    const auto& pt = rig.parameterTransform;
    const auto& skelParams = pt.skeletonParameters();
    MatX basis = MatX::Zero(Eigen::Index(skelParams.size()), 3);
    for (size_t r = 0; r < skelParams.size(); ++r) {
      const std::string& name = pt.names()[skelParams[r]];
      const Eigen::Index row = Eigen::Index(r);
      if (name == "spine_length" || name == "neck_length" || name.find("thigh_length") != std::string::npos ||
          name.find("shin_length") != std::string::npos) {
        basis(row, 0) = 0.05;
      } else if (name.find("arm_length") != std::string::npos) {
        basis(row, 1) = 0.04;
      } else if (name == "global_scale") {
        basis(row, 2) = 0.1;
      }
    }
    rig.skeletonBasis = basis;
  }

  rig.finalize();

  if (spec.correctives) {
    const auto joints = syntheticCorrectiveJoints(rig);
    CorrectiveArchitecture arch;
    arch.hiddenWidths = {16};
    arch.embeddingSize = 4;
    const uint64_t mlpSeed = rng();
    rig.correctives =
        initCorrectiveModel(rig.topology, rig.restPositions, rig.skinWeights, rig.skeleton, joints, arch, mlpSeed);
    const size_t frequencies = 3;
    const MatX bank = functionBank(mesh.info, layout.groups, frequencies);
    const auto decay = bankDecay(layout.groups, frequencies);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& jc : rig.correctives.joints) {
      // Sharper than the geodesic initialization, so the planted support is
      // a strict subset of it.
      jc.mask = (2.0 * jc.mask.array() - 1.0).max(0.0).matrix();
      const Eigen::Index c = Eigen::Index(jc.embeddingSize());
      MatX mix(bank.cols(), 3 * c);
      for (Eigen::Index q = 0; q < mix.rows(); ++q) {
        for (Eigen::Index k = 0; k < mix.cols(); ++k) {
          mix(q, k) = gauss(rng) * decay[size_t(q)];
        }
      }
      const MatX field = bank * mix; // V x 3c
      const double peak = field.cwiseAbs().maxCoeff();
      for (Eigen::Index i = 0; i < field.rows(); ++i) {
        for (Eigen::Index d = 0; d < 3; ++d) {
          jc.weights.row(3 * i + d) = (0.01 / peak) * field.row(i).segment(d * c, c);
        }
      }
    }
    rig.finalize();
  }
  return rig;
}

std::vector<bool> syntheticEvaluationMask(const RigModel& rig) {
  std::vector<bool> extremity(rig.jointCount());
  for (size_t j = 0; j < rig.jointCount(); ++j) {
    extremity[j] = isExtremityJoint(rig.skeleton.joint(j).name);
  }
  std::vector<bool> out(rig.vertexCount());
  for (size_t i = 0; i < rig.vertexCount(); ++i) {
    out[i] = extremity[rig.skinWeights.dominantJoint(i)];
  }
  return out;
}

std::vector<RegionMask> syntheticRegionMasks(const RigModel& rig) {
  const Eigen::Index nv = Eigen::Index(rig.vertexCount());
  RegionMask body{"body", VecX::Ones(nv)};
  RegionMask head{"head", VecX::Zero(nv)};
  RegionMask hand{"hand", VecX::Zero(nv)};
  for (size_t i = 0; i < rig.vertexCount(); ++i) {
    for (const auto& inf : rig.skinWeights.vertices[i]) {
      const std::string& name = rig.skeleton.joint(inf.joint).name;
      if (name == "head") {
        head.weights[Eigen::Index(i)] += inf.weight;
      } else if (isExtremityJoint(name)) {
        hand.weights[Eigen::Index(i)] += inf.weight;
      }
    }
  }
  body.weights -= head.weights + hand.weights;
  body.weights = body.weights.cwiseMax(0.0);
  std::vector<RegionMask> out{body};
  if (head.weights.sum() > 0) {
    out.push_back(head);
  }
  if (hand.weights.sum() > 0) {
    out.push_back(hand);
  }
  return out;
}

std::vector<std::string> syntheticKeypointJoints(const RigModel& rig) {
  std::vector<std::string> out;
  for (const char* name : {"head", "l_hand", "r_hand", "l_foot", "r_foot"}) {
    if (rig.skeleton.findJoint(name)) {
      out.push_back(name);
    }
  }
  if (out.empty()) {
    out.push_back(rig.skeleton.joint(0).name);
    out.push_back(rig.skeleton.joint(rig.jointCount() - 1).name);
  }
  return out;
}

VecX randomPose(const RigModel& rig, std::mt19937_64& rng, double spread) {
  const auto& pt = rig.parameterTransform;
  VecX pose = VecX::Zero(Eigen::Index(pt.parameterCount()));
  std::uniform_real_distribution<double> rot(-spread, spread);
  std::uniform_real_distribution<double> trans(-0.05, 0.05);
  for (const size_t p : pt.poseParameters()) {
    double v = startsWith(pt.names()[p], "root_t") ? trans(rng) : rot(rng);
    if (const auto& lim = pt.limits()[p]) {
      v = std::clamp(v, lim->lower, lim->upper);
    }
    pose[Eigen::Index(p)] = v;
  }
  return pose;
}

VecX randomIdentity(const RigModel& rig, std::mt19937_64& rng, double scale) {
  const Eigen::Index n = Eigen::Index(rig.identity.size());
  VecX out(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double sd = rig.identity.stddev.size() == n ? rig.identity.stddev[k] : 1.0;
    out[k] = scale * sd * gauss(rng);
  }
  return out;
}

std::vector<Vec3> sampleSurface(const VecX& positions, const MeshTopology& topology, size_t count, std::mt19937_64& rng) {
  require(!topology.triangles.empty(), "sample surface: mesh has no triangles");
  std::vector<double> cumulative;
  cumulative.reserve(topology.triangles.size());
  double total = 0;
  for (const auto& t : topology.triangles) {
    const Vec3 a = vertexAt(positions, t[0]);
    total += 0.5 * (vertexAt(positions, t[1]) - a).cross(vertexAt(positions, t[2]) - a).norm();
    cumulative.push_back(total);
  }
  require(total > 0, "sample surface: mesh has zero area");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(count);
  for (size_t s = 0; s < count; ++s) {
    const double r = unit(rng) * total;
    const size_t f = std::min(
        size_t(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin()),
        cumulative.size() - 1);
    double u = unit(rng);
    double v = unit(rng);
    if (u + v > 1) {
      u = 1 - u;
      v = 1 - v;
    }
    const auto& t = topology.triangles[f];
    const Vec3 a = vertexAt(positions, t[0]);
    out.push_back(a + u * (vertexAt(positions, t[1]) - a) + v * (vertexAt(positions, t[2]) - a));
  }
  return out;
}

BenchmarkCase generateBenchmarkCase(const RigModel& rig, uint64_t seed, const BenchmarkOptions& options) {
  std::mt19937_64 rng(seed);
  BenchmarkCase bc;
  bc.truth = ModelInputs::zeros(rig);
  bc.truth.identity = randomIdentity(rig, rng);
  bc.truth.pose = randomPose(rig, rng, options.poseSpread);
  const VecX posed = evaluate(rig, bc.truth);

  std::normal_distribution<double> noise(0.0, options.noise);
  bc.target.points = sampleSurface(posed, rig.topology, options.pointCount, rng);
  for (auto& p : bc.target.points) {
    p += Vec3(noise(rng), noise(rng), noise(rng));
  }
  const auto joints = jointPositions(rig, bc.truth);
  for (const auto& name : syntheticKeypointJoints(rig)) {
    bc.target.keypoints[name] = joints[*rig.skeleton.findJoint(name)] + Vec3(noise(rng), noise(rng), noise(rng));
  }
  bc.target.excludedVertices = syntheticEvaluationMask(rig);

  bc.init = ModelInputs::zeros(rig);
  bc.init.pose = bc.truth.pose;
  const auto& pt = rig.parameterTransform;
  std::normal_distribution<double> rotNoise(0.0, options.initPoseNoise);
  std::normal_distribution<double> transNoise(0.0, options.initTranslationNoise);
  for (const size_t p : pt.poseParameters()) {
    bc.init.pose[Eigen::Index(p)] += startsWith(pt.names()[p], "root_t") ? transNoise(rng) : rotNoise(rng);
  }
  return bc;
}

std::vector<CorrectiveSample> generateCorrectiveDataset(
    const RigModel& rig,
    const CorrectiveModel& planted,
    size_t count,
    uint64_t seed,
    CorrectiveTargetKind kind,
    double poseSpread) {
  planted.validate(rig.vertexCount(), rig.jointCount());
  std::mt19937_64 rng(seed);
  const auto& pt = rig.parameterTransform;
  std::vector<CorrectiveSample> out;
  out.reserve(count);
  for (size_t s = 0; s < count; ++s) {
    CorrectiveSample sample;
    sample.pose = randomPose(rig, rng, poseSpread);
    const VecX offsets = correctiveOffsets(planted, rig.vertexCount(), pt, sample.pose);
    if (kind == CorrectiveTargetKind::Residual) {
      sample.target = offsets;
    } else {
      const auto world = forwardKinematics(rig.skeleton, pt.apply(sample.pose));
      sample.target = skin(rig, rig.restPositions + offsets, world);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

} // namespace rigkit
