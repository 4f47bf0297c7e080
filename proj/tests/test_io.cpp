#include "rigkit/error.hpp"
#include "rigkit/io.hpp"
#include "rigkit/synthetic.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace rigkit;
using Json = nlohmann::ordered_json;

namespace {

const RigModel& humanoid() {
  static const RigModel rig = [] {
    SyntheticRigSpec spec;
    spec.fingers = true;
    return generateSyntheticRig(spec);
  }();
  return rig;
}

struct Container {
  Json header;
  std::string payload;
};

Container split(const std::string& bytes) {
  uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  return {Json::parse(bytes.substr(16, len)), bytes.substr(16 + len)};
}

std::string join(const Container& c) {
  const std::string h = c.header.dump();
  const uint64_t len = h.size();
  std::string out("RIGKIT\0\n", 8);
  out.append(reinterpret_cast<const char*>(&len), 8);
  return out + h + c.payload;
}

std::string dataErrorOf(const std::string& bytes) {
  try {
    deserializeRig(bytes);
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected DataError";
  return {};
}

std::string tempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("rigkit_test_" + name)).string();
}

} // namespace

TEST(RigIo, RoundTripIsBitIdenticalAndEvaluatesTheSame) {
  const auto& rig = humanoid();
  const std::string bytes = serializeRig(rig);
  const RigModel back = deserializeRig(bytes);
  EXPECT_EQ(serializeRig(back), bytes);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    ModelInputs in = ModelInputs::zeros(rig);
    in.pose = randomPose(rig, rng, 0.5);
    in.identity = randomIdentity(rig, rng);
    const VecX a = evaluate(rig, in);
    EXPECT_LT((evaluate(back, in) - a).norm() / a.norm(), 1e-6);
  }
  // A loaded rig is already float32-exact: a second trip changes nothing.
  const RigModel again = deserializeRig(serializeRig(back));
  ModelInputs in = ModelInputs::zeros(rig);
  in.pose = randomPose(rig, rng, 0.5);
  EXPECT_EQ((evaluate(again, in) - evaluate(back, in)).cwiseAbs().maxCoeff(), 0.0);

  const std::string path = tempPath("rig.bin");
  saveRig(rig, path);
  EXPECT_EQ(serializeRig(loadRig(path)), bytes);
  std::filesystem::remove(path);
}

TEST(RigIo, StoresAnglesInDegrees) {
  const auto& rig = humanoid();
  const Container c = split(serializeRig(rig));
  const auto& joints = c.header["skeleton"]["joints"];
  size_t j = 0;
  for (const auto& jn : joints) {
    const double rx = jn["prerotation_deg"][0].get<double>();
    EXPECT_NEAR(rx, float(rig.skeleton.joint(j).prerotation.rx * 180.0 / std::numbers::pi), 1e-4);
    ++j;
  }
}

TEST(RigIo, TruncatedPayloadNamesSection) {
  const std::string bytes = serializeRig(humanoid());
  const std::string msg = dataErrorOf(bytes.substr(0, bytes.size() - 10));
  EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
  Container c = split(bytes);
  const std::string last = c.header["sections"].back()["name"].get<std::string>();
  EXPECT_NE(msg.find(last), std::string::npos) << msg;
}

TEST(RigIo, VersionMagicAndShapeErrors) {
  const std::string bytes = serializeRig(humanoid());
  Container c = split(bytes);
  c.header["version"] = 99;
  EXPECT_NE(dataErrorOf(join(c)).find("version"), std::string::npos);

  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_NE(dataErrorOf(magic).find("magic"), std::string::npos);

  Container s = split(bytes);
  for (auto& sec : s.header["sections"]) {
    if (sec["name"] == "template") {
      sec["shape"][0] = sec["shape"][0].get<int>() + 1;
    }
  }
  EXPECT_NE(dataErrorOf(join(s)).find("template"), std::string::npos);

  Container m = split(bytes);
  auto& secs = m.header["sections"];
  for (auto it = secs.begin(); it != secs.end(); ++it) {
    if ((*it)["name"] == "skin_weights") {
      secs.erase(it);
      break;
    }
  }
  EXPECT_NE(dataErrorOf(join(m)).find("skin_weights"), std::string::npos);
}

TEST(RigIo, UnknownHeaderFieldsArePreserved) {
  Container c = split(serializeRig(humanoid()));
  c.header["studio_notes"] = {{"author", "x"}, {"take", 3}};
  const RigModel rig = deserializeRig(join(c));
  ASSERT_EQ(rig.extras.count("studio_notes"), 1u);
  const Container again = split(serializeRig(rig));
  EXPECT_EQ(again.header["studio_notes"], c.header["studio_notes"]);
}

TEST(RigIo, ExcessInfluencesAreRenormalizedWithWarning) {
  RigModel rig = humanoid();
  Container c = split(serializeRig(rig));
  c.header["skin"]["max_influences"] = 1;
  std::vector<std::string> warnings;
  const RigModel capped = deserializeRig(join(c), "<test>", &warnings);
  EXPECT_FALSE(warnings.empty());
  EXPECT_EQ(capped.skinWeights.maxInfluences, 1u);
  capped.skinWeights.validate(capped.jointCount());
}

TEST(MeshIo, ObjCubeRoundTrip) {
  const std::string obj =
      "# cube\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
      "f 1 2 3 4\nf 5 8 7 6\nf 1 5 6 2\nf 2 6 7 3\nf 3 7 8 4\nf 4 8 5 1\n";
  std::istringstream in(obj);
  std::vector<std::string> warnings;
  const Mesh cube = readObj(in, "cube.obj", &warnings);
  EXPECT_EQ(cube.topology.vertexCount, 8u);
  EXPECT_EQ(cube.topology.triangles.size(), 12u);
  EXPECT_FALSE(warnings.empty());
  EXPECT_EQ(cube.topology.triangles[0], (Triangle{0, 1, 2}));
  EXPECT_EQ(cube.topology.triangles[1], (Triangle{0, 2, 3}));

  std::ostringstream out;
  writeObj(out, cube);
  std::istringstream back(out.str());
  const Mesh again = readObj(back, "again.obj");
  EXPECT_EQ(again.positions, cube.positions);
  EXPECT_EQ(again.topology.triangles, cube.topology.triangles);
}

TEST(MeshIo, MalformedObjNamesLine) {
  std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n");
  try {
    readObj(in, "bad.obj");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos) << e.what();
  }
  std::istringstream range("v 0 0 0\nf 1 2 3\n");
  EXPECT_THROW(readObj(range, "range.obj"), DataError);
}

TEST(MeshIo, PlyAsciiAndBinaryAgree) {
  const std::string ascii =
      "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
      "0 0 0 255\n1 0 0 0\n0 1 0 7\n3 0 1 2\n";
  std::istringstream in(ascii);
  const Mesh a = readPly(in, "a.ply");
  ASSERT_EQ(a.topology.vertexCount, 3u);
  ASSERT_EQ(a.topology.triangles.size(), 1u);
  std::ostringstream out;
  writePly(out, a);
  std::istringstream bin(out.str());
  const Mesh b = readPly(bin, "b.ply");
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.topology.triangles, b.topology.triangles);
}

TEST(MeshIo, LargePointCloudPlyMatchesObj) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Mesh cloud;
  const size_t n = 1000000;
  cloud.topology.vertexCount = n;
  cloud.positions.resize(Eigen::Index(3 * n));
  for (Eigen::Index i = 0; i < cloud.positions.size(); ++i) {
    cloud.positions[i] = double(u(rng));
  }
  const std::string ply = tempPath("cloud.ply");
  const std::string obj = tempPath("cloud.obj");
  saveMesh(ply, cloud);
  saveMesh(obj, cloud);
  const auto a = loadPoints(ply);
  const auto b = loadPoints(obj);
  ASSERT_EQ(a.size(), n);
  ASSERT_EQ(b.size(), n);
  for (size_t i = 0; i < n; ++i) {
    ASSERT_EQ(a[i], b[i]);
    ASSERT_EQ(a[i], vertexAt(cloud.positions, i));
  }
  std::filesystem::remove(ply);
  std::filesystem::remove(obj);
}
