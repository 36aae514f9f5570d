#include <gtest/gtest.h>

#include <unistd.h>

#include <fstream>

#include "shuttle/pipeline.hpp"

using namespace shuttle;
namespace fs = std::filesystem;

namespace {

SimulationConfig tiny_config() {
  auto c = load_config(fs::path(SHUTTLE_SOURCE_DIR) / "configs" / "ci.cfg");
  c.geometry.box_y = 1.6;
  c.num_steps = 6;
  c.seeds = {1};
  c.rms_list = {0.0};
  c.speed_grid = {50.0};
  c.threads = 1;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("shuttle_pipeline_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::set<std::string> ran_stages(const RunManifest& m) {
  std::set<std::string> out;
  for (const auto& s : m.stages)
    if (s.ran) out.insert(s.name);
  return out;
}

RunManifest run(const SimulationConfig& c, const fs::path& out, std::set<std::string> stages = {}) {
  PipelineOptions o;
  o.out_dir = out;
  o.stages = std::move(stages);
  return run_pipeline(c, o);
}

// One full run shared by the tests that only inspect its outputs.
class FullRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("full"));
    manifest_ = new RunManifest(run(tiny_config(), *dir_));
  }
  void SetUp() override { ASSERT_NE(manifest_, nullptr) << "shared pipeline run failed"; }
  static void TearDownTestSuite() {
    if (dir_) fs::remove_all(*dir_);
    delete dir_;
    delete manifest_;
  }
  static fs::path* dir_;
  static RunManifest* manifest_;
};
fs::path* FullRun::dir_ = nullptr;
RunManifest* FullRun::manifest_ = nullptr;

}  // namespace

TEST(Pipeline, SingleStageOnFreshDirectory) {
  const auto dir = scratch("single");
  const auto m = run(tiny_config(), dir, {"solve-potential"});
  EXPECT_EQ(ran_stages(m), std::set<std::string>{"solve-potential"});
  for (int g = 1; g <= 6; ++g) EXPECT_TRUE(fs::exists(dir / ("potential_g" + std::to_string(g) + ".potgrid")));
  EXPECT_FALSE(fs::exists(dir / "surface_top.rsurf"));
  EXPECT_FALSE(fs::exists(dir / "sweep.sweep"));
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_F(FullRun, AllStagesRanAndWroteArtifacts) {
  EXPECT_EQ(ran_stages(*manifest_).size(), stage_names().size());
  for (const auto& s : manifest_->stages)
    for (const auto& a : s.artifacts) EXPECT_TRUE(fs::exists(a)) << a;
  EXPECT_TRUE(manifest_->complete);
}

TEST_F(FullRun, SecondRunRecomputesNothing) {
  const auto m = run(tiny_config(), *dir_);
  EXPECT_TRUE(ran_stages(m).empty());
}

TEST_F(FullRun, ArtifactsCarryStageHashes) {
  const auto h = stage_hashes(tiny_config(), 1);
  EXPECT_EQ(artifact_hash(*dir_ / "surface_top.rsurf"), h.surface);
  EXPECT_EQ(artifact_hash(*dir_ / "relaxed.atoms"), h.relax);
  EXPECT_EQ(artifact_hash(*dir_ / "potential_g4.potgrid"), h.potential);
  EXPECT_EQ(artifact_hash(*dir_ / "trace.vtrace"), h.trace);
  EXPECT_EQ(artifact_hash(*dir_ / "sweep.sweep"), h.sweep);
}

TEST_F(FullRun, DeletedIntermediateRegeneratesOnlyDependents) {
  fs::remove(*dir_ / "relaxed.atoms");
  const auto m = run(tiny_config(), *dir_);
  EXPECT_EQ(ran_stages(m), (std::set<std::string>{"relax", "trace", "dynamics"}));
}

TEST_F(FullRun, SpeedChangeRerunsDynamicsAndSweepOnly) {
  const auto dir = scratch("speeds");
  fs::copy(*dir_, dir, fs::copy_options::recursive);
  auto c = tiny_config();
  c.speed_grid = {20.0, 50.0};
  const auto m = run(c, dir);
  EXPECT_EQ(ran_stages(m), (std::set<std::string>{"dynamics", "sweep"}));
  EXPECT_EQ(parse_sweep(read_file(dir / "dynamics.sweep")).size(), 2u);
  fs::remove_all(dir);
}

TEST_F(FullRun, SweepHasOneRowPerCell) {
  const auto r = parse_sweep(read_file(*dir_ / "sweep.sweep"));
  const auto c = tiny_config();
  ASSERT_EQ(r.size(), c.rms_list.size() * c.speed_grid.size());
  EXPECT_EQ(r[0].n, 1);
  EXPECT_GE(r[0].mean, 0.0);
  EXPECT_LE(r[0].mean, 1.0);
  EXPECT_TRUE(fs::exists(*dir_ / "members" / "rms_0_seed_1.vtrace"));
}

TEST_F(FullRun, SweepMemberMatchesSingleChain) {
  // rms 0 and seed 1 with rms_target 0 is the same member as the single chain
  auto c = tiny_config();
  c.roughness.rms_target = 0.0;
  const auto dir = scratch("chain");
  run(c, dir, {"trace"});
  const auto a = parse_trace(read_file(dir / "trace.vtrace"));
  const auto b = parse_trace(read_file(*dir_ / "members" / "rms_0_seed_1.vtrace"));
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) EXPECT_EQ(a.samples[k].Ev, b.samples[k].Ev);
  fs::remove_all(dir);
}

TEST_F(FullRun, DescribeEveryFormat) {
  const std::vector<std::pair<std::string, std::string>> cases{{"surface_top.rsurf", "ROUGHSURF v1"},
                                                               {"potential_g1.potgrid", "POTGRID v1"},
                                                               {"relaxed.atoms", "ATOMS v1"},
                                                               {"trace.vtrace", "VTRACE v1"},
                                                               {"sweep.sweep", "SWEEP v1"}};
  for (const auto& [file, fmt] : cases) {
    const auto d = describe_artifact(*dir_ / file);
    EXPECT_NE(d.find("format: " + fmt), std::string::npos) << file;
    EXPECT_NE(d.find("provenance hash: " + artifact_hash(*dir_ / file)), std::string::npos) << file;
  }
  EXPECT_NE(describe_artifact(*dir_ / "trace.vtrace").find("steps: 6"), std::string::npos);
}

TEST_F(FullRun, DescribeRejectsTruncatedAndUnknown) {
  const auto dir = scratch("describe");
  fs::create_directories(dir);
  const auto text = read_file(*dir_ / "trace.vtrace");
  write_file_atomic(dir / "cut.vtrace", text.substr(0, text.size() / 2));
  EXPECT_THROW(describe_artifact(dir / "cut.vtrace"), IoError);
  write_file_atomic(dir / "odd.txt", "HELLO v9\n1 2 3\n");
  try {
    describe_artifact(dir / "odd.txt");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("ROUGHSURF v1"), std::string::npos);
  }
  EXPECT_THROW(describe_artifact(dir / "missing.sweep"), IoError);
  fs::remove_all(dir);
}

TEST(Pipeline, CorruptUpstreamFileIsIoErrorWithPartialManifest) {
  const auto dir = scratch("corrupt");
  auto c = tiny_config();
  run(c, dir, {"build-lattice"});
  // the hash still matches, so build-lattice is skipped and relax reads the damaged file
  write_file_atomic(dir / "lattice.atoms", "ATOMS v1\n# hash=" + stage_hashes(c, 1).lattice + "\n3\n");
  EXPECT_THROW(run(c, dir, {"relax"}), IoError);
  const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_FALSE(manifest["complete"].get<bool>());
  fs::remove_all(dir);
}

TEST(Pipeline, StageHashesTrackTheirInputs) {
  const auto c = tiny_config();
  auto d = c;
  d.alloy.x_ge = 0.25;
  const auto a = stage_hashes(c, 1), b = stage_hashes(d, 1);
  EXPECT_EQ(a.surface, b.surface);
  EXPECT_EQ(a.potential, b.potential);
  EXPECT_NE(a.lattice, b.lattice);
  EXPECT_NE(a.trace, b.trace);
  EXPECT_NE(stage_hashes(c, 2).surface, a.surface);
  EXPECT_EQ(stage_hashes(c, 2).potential, a.potential);
}

TEST(Pipeline, MemberSeedsAreDistinctStreams) {
  const auto s = member_seeds(7);
  EXPECT_NE(s.top, s.bottom);
  EXPECT_NE(s.top, s.alloy);
  EXPECT_EQ(member_seeds(7).alloy, s.alloy);
}

TEST(Pipeline, FreshRunsAreByteIdentical) {
  const auto a = scratch("bytes_a"), b = scratch("bytes_b");
  run(tiny_config(), a);
  run(tiny_config(), b);
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    const auto rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(read_file(e.path()), read_file(b / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 10);
  fs::remove_all(a);
  fs::remove_all(b);
}
