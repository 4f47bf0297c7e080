#include "rigkit/io.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
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

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "rigkit_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run("synth -o " + (dir_ / "rig.bin").string() + " --benchmark " + (dir_ / "bench").string() +
                  " --count 2 --seed 5"),
              0);
  }
  static fs::path p(const std::string& name) {
    return dir_ / name;
  }
  static inline fs::path dir_;
};

} // namespace

TEST_F(Cli, PoseAtZeroIsTemplate) {
  ASSERT_EQ(run("pose " + p("rig.bin").string() + " -o " + p("zero.obj").string()), 0);
  const auto rig = rigkit::loadRig(p("rig.bin").string());
  const auto mesh = rigkit::loadMesh(p("zero.obj").string());
  EXPECT_EQ(mesh.topology.triangles, rig.topology.triangles);
  EXPECT_EQ(mesh.positions, rig.restPositions);
}

TEST_F(Cli, FitWithOneIterationHasTraceOfOne) {
  ASSERT_EQ(run("fit " + p("rig.bin").string() + " " + p("bench/scan_0000.ply").string() + " --iters 1 -o " +
                p("one").string()),
            0);
  const auto j = nlohmann::json::parse(slurp(p("one.json")));
  EXPECT_EQ(j["trace"].size(), 1u);
  EXPECT_TRUE(fs::exists(p("one.obj")));
}

TEST_F(Cli, FixedSeedRunsAreByteIdentical) {
  for (const char* tag : {"a", "b"}) {
    const std::string t(tag);
    ASSERT_EQ(run("synth -o " + p("s" + t + ".bin").string() + " --benchmark " + p("bench" + t).string() +
                  " --count 1 --seed 9"),
              0);
    ASSERT_EQ(run("fit " + p("rig.bin").string() + " " + p("bench/scan_0001.ply").string() + " --keypoints " +
                  p("bench/scan_0001.keypoints.json").string() + " --init " + p("bench/scan_0001.init.json").string() +
                  " --iters 50 --max-points 300 --seed 3 -o " + p("fit" + t).string()),
              0);
  }
  EXPECT_EQ(slurp(p("sa.bin")), slurp(p("sb.bin")));
  EXPECT_EQ(slurp(p("bencha/scan_0000.ply")), slurp(p("benchb/scan_0000.ply")));
  EXPECT_EQ(slurp(p("fita.json")), slurp(p("fitb.json")));
  EXPECT_EQ(slurp(p("fita.obj")), slurp(p("fitb.obj")));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("pose"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("pose " + p("missing.bin").string() + " -o " + p("x.obj").string()), 2);
  std::ofstream(p("garbage.bin")) << "not a rig";
  EXPECT_EQ(run("pose " + p("garbage.bin").string() + " -o " + p("x.obj").string()), 2);
  EXPECT_EQ(run("pose " + p("rig.bin").string() + " --params nope=1 -o " + p("x.obj").string()), 2);
  // A scan with a NaN point makes the loss non-finite.
  std::ofstream(p("nan.obj")) << "v 0 1 0\nv nan 0 0\nv 0 0 0.1\n";
  EXPECT_EQ(run("fit " + p("rig.bin").string() + " " + p("nan.obj").string() + " --iters 5 -o " + p("nan").string()), 3);
}

TEST_F(Cli, EvalReportColumns) {
  ASSERT_EQ(run("eval " + p("rig.bin").string() + " " + p("bench").string() + " --components 2,16 --iters 20 -o " +
                p("report.csv").string()),
            0);
  std::istringstream in(slurp(p("report.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "components,mean_mm,median_mm,p95_mm,runtime_s");
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
  }
  EXPECT_EQ(rows, 2u);
}

TEST_F(Cli, PipelineCommands) {
  const std::string rig = p("rig.bin").string();
  std::ofstream(p("chain.json")) << R"({"layout": "chain", "rings": 30})";
  ASSERT_EQ(run("synth --spec " + p("chain.json").string() + " -o " + p("chain.bin").string() + " --dataset " +
                p("ds").string() + " --count 8 --seed 1"),
            0);
  EXPECT_EQ(run("train-correctives " + p("chain.bin").string() + " " + p("ds").string() + " --epochs 2 -o " +
                p("trained.bin").string()),
            0);
  ASSERT_EQ(run("synth -o " + p("r2.bin").string() + " --registrations " + p("regs").string() + " --count 8"), 0);
  EXPECT_EQ(run("build-identity " + p("regs").string() + " --rig " + p("r2.bin").string() + " --masks " +
                p("regs/masks.json").string() + " --counts 4,2,2 --mirror -o " + p("ident.bin").string()),
            0);
  const std::string identity = "build-identity " + p("regs").string() + " --rig " + p("r2.bin").string() +
      " --masks " + p("regs/masks.json").string() + " --counts 4,2,2 -o " + p("ident2.bin").string();
  EXPECT_EQ(run(identity + " --drop body:0,2"), 0);
  EXPECT_EQ(rigkit::loadRig(p("ident2.bin").string()).identity.size(), 8u);
  EXPECT_EQ(run(identity + " --drop elbow:0"), 2);
  EXPECT_EQ(run("pose " + rig + " -o " + p("t.obj").string()), 0);
  EXPECT_EQ(run("lod-transfer " + rig + " " + p("t.obj").string() + " --smooth -o " + p("lod.bin").string()), 0);
  EXPECT_EQ(rigkit::loadRig(p("lod.bin").string()).vertexCount(), rigkit::loadRig(rig).vertexCount());
}
