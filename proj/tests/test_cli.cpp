#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;

  static int run(const std::string& args, std::string* stdout_text = nullptr) {
    const fs::path out = root / "stdout.txt";
    const std::string cmd = "cd '" + root.string() + "' && '" SPLATMARK_CLI_PATH "' " + args + " > '" +
                            out.string() + "' 2> '" + (root / "stderr.txt").string() + "'";
    const int rc = std::system(cmd.c_str());
    if (stdout_text) *stdout_text = read_file(out);
    return rc;
  }

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("splatmark_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    ASSERT_EQ(run("--seed 3 --run-dir scene make-scene --gaussians 300 --views 4 --held-out 2 --resolution 32"), 0);
    ASSERT_EQ(run("--seed 3 --run-dir dec train-decoder --bits 4 --epochs 3 --out dec.bin"), 0);
    ASSERT_EQ(run("--seed 3 --run-dir emb embed --asset scene/scene.ply --views scene/views.json "
                  "--decoder dec.bin --message 9 --epochs 3 --out wm.ply"),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static std::string inputs() {
    return "--asset scene/scene.ply --views scene/views.json --decoder dec.bin --message 9";
  }
};

fs::path Cli::root;

TEST_F(Cli, RunDirectoryHoldsResolvedConfigAndLog) {
  for (const char* dir : {"scene", "dec", "emb"}) {
    EXPECT_TRUE(fs::exists(root / dir / "config.json")) << dir;
    EXPECT_TRUE(fs::exists(root / dir / "log.jsonl")) << dir;
  }
  auto cfg = nlohmann::json::parse(read_file(root / "emb" / "config.json"));
  EXPECT_EQ(cfg["command"], "embed");
  EXPECT_EQ(cfg["seed"], 3);
  EXPECT_EQ(cfg["version"], 1);
  EXPECT_EQ(cfg["embed"]["epochs"], 3);
  EXPECT_DOUBLE_EQ(cfg["embed"]["lambda_msg"].get<double>(), 0.03);
  EXPECT_DOUBLE_EQ(cfg["embed"]["lambda_off"].get<double>(), 10.0);
  // One log line per epoch plus the offset summary.
  EXPECT_EQ(read_lines(root / "emb" / "log.jsonl").size(), 4u);
  EXPECT_EQ(read_file(root / "wm.ply"), read_file(root / "emb" / "watermarked.ply"));
}

TEST_F(Cli, TimestampedRunDirectories) {
  ASSERT_EQ(run("--runs-dir runs make-scene --gaussians 20 --views 2 --held-out 0 --resolution 16"), 0);
  ASSERT_EQ(run("--runs-dir runs make-scene --gaussians 20 --views 2 --held-out 0 --resolution 16"), 0);
  size_t n = 0;
  for (const auto& e : fs::directory_iterator(root / "runs")) {
    EXPECT_NE(e.path().filename().string().find("make-scene"), std::string::npos);
    EXPECT_TRUE(fs::exists(e.path() / "config.json"));
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

TEST_F(Cli, SameSeedReproducesBitForBit) {
  ASSERT_EQ(run("--seed 3 --run-dir scene2 make-scene --gaussians 300 --views 4 --held-out 2 --resolution 32"), 0);
  EXPECT_EQ(read_file(root / "scene" / "scene.ply"), read_file(root / "scene2" / "scene.ply"));
  EXPECT_EQ(read_file(root / "scene" / "views.json"), read_file(root / "scene2" / "views.json"));

  ASSERT_EQ(run("--seed 3 --run-dir dec2 train-decoder --bits 4 --epochs 3"), 0);
  EXPECT_EQ(read_file(root / "dec" / "decoder.bin"), read_file(root / "dec2" / "decoder.bin"));

  ASSERT_EQ(run("--seed 3 --run-dir emb2 embed " + inputs() + " --epochs 3"), 0);
  EXPECT_EQ(read_file(root / "emb" / "watermarked.ply"), read_file(root / "emb2" / "watermarked.ply"));
  EXPECT_EQ(read_file(root / "emb" / "log.jsonl"), read_file(root / "emb2" / "log.jsonl"));

  ASSERT_EQ(run("--seed 4 --run-dir emb3 embed " + inputs() + " --epochs 3"), 0);
  EXPECT_NE(read_file(root / "emb" / "watermarked.ply"), read_file(root / "emb3" / "watermarked.ply"));
}

TEST_F(Cli, ExtractPrintsHexOfDecoderLength) {
  std::string out;
  ASSERT_EQ(run("--run-dir ex extract --asset wm.ply --views scene/views.json --view 1 --decoder dec.bin", &out), 0);
  ASSERT_GE(out.size(), 2u);
  EXPECT_EQ(out.size(), 2u);  // one hex digit for 4 bits, then a newline
  EXPECT_NE(std::string("0123456789abcdef").find(out[0]), std::string::npos);
  auto log = nlohmann::json::parse(read_lines(root / "ex" / "log.jsonl").at(0));
  EXPECT_EQ(log["message"], out.substr(0, 1));
}

TEST_F(Cli, ExtractNeedsAView) {
  EXPECT_NE(run("--run-dir ex2 extract --asset wm.ply --decoder dec.bin"), 0);
}

TEST_F(Cli, BadMessageIsRejected) {
  EXPECT_NE(run("--run-dir bad1 embed " + std::string("--asset scene/scene.ply --views scene/views.json ") +
                "--decoder dec.bin --message 1f --epochs 1"),
            0);
  EXPECT_NE(run("--run-dir bad2 embed " + std::string("--asset scene/scene.ply --views scene/views.json ") +
                "--decoder dec.bin --message zz --epochs 1"),
            0);
}

TEST_F(Cli, RobustnessSuiteHasOneRowPerDistortion) {
  ASSERT_EQ(run("--run-dir rob evaluate --suite robustness " + inputs() + " --watermarked wm.ply"), 0);
  auto lines = read_lines(root / "rob" / "report.csv");
  ASSERT_EQ(lines.size(), 10u);
  EXPECT_EQ(lines[0], "label,bit_acc,psnr,ssim,lpips");
  const std::vector<std::string> labels = {"none", "noise",      "rotate", "scale",   "blur",
                                           "crop", "brightness", "jpeg",   "combined"};
  for (size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(lines[i + 1].substr(0, lines[i + 1].find(',')), labels[i]);
  EXPECT_TRUE(fs::exists(root / "rob" / "report.json"));
}

TEST_F(Cli, InvisibilitySuiteReportsTrainAndHeldOut) {
  ASSERT_EQ(run("--run-dir inv evaluate --suite invisibility " + inputs() + " --watermarked wm.ply"), 0);
  auto lines = read_lines(root / "inv" / "report.csv");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1].rfind("train_views,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("held_out_views,", 0), 0u);
}

TEST_F(Cli, AblationSuiteRunsThreeVariants) {
  ASSERT_EQ(run("--run-dir abl evaluate --suite ablation " + inputs() + " --epochs 2"), 0);
  auto lines = read_lines(root / "abl" / "report.csv");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[1].rfind("msg,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("msg+recon,", 0), 0u);
  EXPECT_EQ(lines[3].rfind("msg+recon+off,", 0), 0u);
}

TEST_F(Cli, SweepEmitsAccuracyAndPsnrPerValue) {
  ASSERT_EQ(run("--run-dir sw sweep --param lambda_msg --grid 0.01,0.1 " + inputs() + " --epochs 2"), 0);
  auto lines = read_lines(root / "sw" / "report.csv");
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1].rfind("lambda_msg=0.01,", 0), 0u);
  EXPECT_EQ(lines[2].rfind("lambda_msg=0.1,", 0), 0u);
  auto json = nlohmann::json::parse(read_file(root / "sw" / "report.json"));
  ASSERT_EQ(json.size(), 2u);
  EXPECT_TRUE(json[0].contains("bit_acc"));
  EXPECT_TRUE(json[0].contains("psnr"));
  EXPECT_NE(run("--run-dir sw2 sweep --param lambda_msg --grid 0.1,x " + inputs()), 0);
}

TEST_F(Cli, PruneAttackWritesReport) {
  ASSERT_EQ(run("--run-dir atk attack --mode prune-bottom --fraction 0.05 " + inputs() + " --watermarked wm.ply"), 0);
  EXPECT_TRUE(fs::exists(root / "atk" / "pruned.ply"));
  EXPECT_EQ(read_lines(root / "atk" / "report.csv").size(), 4u);
  EXPECT_NE(run("--run-dir atk2 attack --mode prune-bottom --fraction 1.5 " + inputs() + " --watermarked wm.ply"), 0);
}

TEST_F(Cli, StegoSetIsBalanced) {
  ASSERT_EQ(run("--run-dir st export-stego-set --asset scene/scene.ply --watermarked wm.ply "
                "--views scene/views.json --include-held-out"),
            0);
  auto lines = read_lines(root / "st" / "labels.csv");
  ASSERT_EQ(lines.size(), 7u);
  int marked = 0;
  for (size_t i = 1; i < lines.size(); ++i) {
    marked += lines[i].back() == '1';
    EXPECT_TRUE(fs::exists(root / "st" / "images" / lines[i].substr(0, lines[i].find(','))));
  }
  EXPECT_EQ(marked, 3);
}

}  // namespace
