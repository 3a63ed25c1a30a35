#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ldfs/cache_io.hpp"
#include "ldfs/report.hpp"
#include "ldfs/text_engine.hpp"
#include "test_support.hpp"

namespace ldfs {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string output;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(LDFS_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fixture bundle with a short schedule passed as flag overrides.
const char* kFast = " --shots 4 --epochs1 3 --batch1 6 --epochs2 3 --gap-seeds 2";

TEST(Cli, ToyThenPipelineSucceeds) {
  test::TempDir tmp;
  const auto toy = tmp.path() / "toy";
  auto r = cli("toy --output " + quoted(toy) + " --samples-per-cell 8");
  ASSERT_EQ(r.code, 0) << r.output;
  r = cli("pipeline -c " + quoted(toy / "config.json") + kFast + " --output-dir " + quoted(tmp.path() / "runs"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("average accuracy"), std::string::npos);
  bool found_summary = false;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path() / "runs")) {
    if (e.path().filename() == "summary.csv") found_summary = true;
  }
  EXPECT_TRUE(found_summary);
}

TEST(Cli, StagedCommandsAndInspection) {
  test::TempDir tmp;
  const auto toy = tmp.path() / "toy";
  ASSERT_EQ(cli("toy --output " + quoted(toy) + " --samples-per-cell 8").code, 0);
  const std::string cfg = "-c " + quoted(toy / "config.json") + kFast;
  // Out of order: no synthesis yet.
  EXPECT_EQ(cli("evaluate " + cfg).code, 3);
  ASSERT_EQ(cli("synthesize " + cfg).code, 0);
  ASSERT_EQ(cli("finetune " + cfg).code, 0);
  const auto eval = cli("evaluate " + cfg);
  ASSERT_EQ(eval.code, 0) << eval.output;
  EXPECT_NE(eval.output.find("DA "), std::string::npos);

  const auto nn = cli("inspect-nn " + cfg + " --limit 2");
  ASSERT_EQ(nn.code, 0) << nn.output;
  EXPECT_EQ(std::count(nn.output.begin(), nn.output.end(), '\n'), 3);
  EXPECT_EQ(nn.output.rfind("instance_id,", 0), 0u);

  const auto gap_csv = tmp.path() / "gap.csv";
  ASSERT_EQ(cli("gap " + cfg + " --output " + quoted(gap_csv)).code, 0);
  EXPECT_EQ(slurp(gap_csv).rfind("gamma,gap\n", 0), 0u);
  EXPECT_TRUE(fs::exists(tmp.path() / "gap.svg"));

  const auto abl = cli("ablate " + cfg + " --variants full,no_all");
  ASSERT_EQ(abl.code, 0) << abl.output;
  EXPECT_NE(abl.output.find("no_all seed 0"), std::string::npos);
  EXPECT_EQ(cli("ablate " + cfg + " --variants everything").code, 2);
}

TEST(Cli, ReportReemitsBundle) {
  test::TempDir tmp;
  EvalReport r;
  r.accuracy.per_domain = {{"x", 0.5}};
  r.accuracy.average = 0.5;
  r.zero_shot_accuracy = r.accuracy;
  save_report(tmp.path() / "report.json", r);
  const auto out = cli("report --input " + quoted(tmp.path() / "report.json") + " --output " + quoted(tmp.path() / "b"));
  ASSERT_EQ(out.code, 0) << out.output;
  EXPECT_TRUE(fs::exists(tmp.path() / "b" / "accuracy.csv"));
  EXPECT_TRUE(fs::exists(tmp.path() / "b" / "gap_curve.svg"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  test::TempDir tmp;
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("pipeline -c " + quoted(tmp.path() / "missing.json")).code, 2);
  std::ofstream(tmp.path() / "bad.json") << R"({"source_domain": "a", "lr": 1})";
  const auto r = cli("pipeline -c " + quoted(tmp.path() / "bad.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("unknown key 'lr'"), std::string::npos) << r.output;
  ASSERT_EQ(cli("toy --output " + quoted(tmp.path() / "toy") + " --samples-per-cell 4").code, 0);
  EXPECT_EQ(cli("pipeline -c " + quoted(tmp.path() / "toy" / "config.json") + " --target-domains domain0").code, 2);
  EXPECT_EQ(cli("toy --output " + quoted(tmp.path() / "t2") + " --dim 6").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, IngestBuildsAndValidatesCache) {
  test::TempDir tmp;
  const auto raw = tmp.path() / "raw";
  fs::create_directories(raw);
  std::ofstream(raw / "photo.csv") << "# id,class,values\np1,dog,3,4,0\np2,cat,0,0,2\n";
  std::ofstream(raw / "sketch.csv") << "s1,dog,1,0,0\r\n";
  const auto r = cli("ingest --input " + quoted(raw) + " --output " + quoted(tmp.path() / "cache") + " --dim 3");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto cache = read_feature_cache(tmp.path() / "cache");
  ASSERT_EQ(cache.size(), 3u);
  EXPECT_EQ(cache.class_names(), (std::vector<std::string>{"cat", "dog"}));
  EXPECT_EQ(cache.domain_names(), (std::vector<std::string>{"photo", "sketch"}));
  EXPECT_NEAR(cache.row(0)[0], 0.6, 1e-7);
  EXPECT_EQ(cache.label(0), 1);
  EXPECT_EQ(cache.domain(2), 1);

  const auto v = cli("ingest --validate " + quoted(tmp.path() / "cache"));
  EXPECT_EQ(v.code, 0) << v.output;
  EXPECT_NE(v.output.find("ok"), std::string::npos);

  std::ofstream(raw / "art.csv") << "a1,dog,1,0\n";
  EXPECT_EQ(cli("ingest --input " + quoted(raw) + " --output " + quoted(tmp.path() / "c2") + " --dim 3").code, 3);
  EXPECT_EQ(cli("ingest --validate " + quoted(tmp.path() / "nothing")).code, 3);
  EXPECT_EQ(cli("ingest").code, 2);
}

TEST(Cli, IngestWritesPresetTemplates) {
  test::TempDir tmp;
  const auto out = tmp.path() / "templates.json";
  ASSERT_EQ(cli("ingest --dataset pacs --templates-out " + quoted(out)).code, 0);
  const auto t = DescriptionTemplates::load(out);
  EXPECT_EQ(t.source, "a real photo of a {class}.");
  EXPECT_EQ(t.target_for("sketch"), "a sketch photo of a {class}.");
  EXPECT_EQ(cli("ingest --dataset caltech --templates-out " + quoted(out)).code, 2);
}

}  // namespace
}  // namespace ldfs
