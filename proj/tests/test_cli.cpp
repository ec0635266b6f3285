#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "cxrnet/arch.hpp"
#include "cxrnet/cli.hpp"
#include "cxrnet/metrics.hpp"
#include "test_util.hpp"

using namespace cxr;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cxrnet");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// A tiny desk-scale run setup: synthetic data plus a small spec file.
struct RunDir {
  TempDir dir;
  fs::path config;

  RunDir() {
    EXPECT_EQ(run({"synth", "--out", (dir / "data").string(), "--n-per-class", "5", "--size", "16"}).code, 0);
    testutil::write_text(dir / "tiny.txt", format_spec(mini_vgg_spec(3, 0.3, 16, 16, 2, 3, FlatTail{8, 8, 6, 6})));
    config = dir / "run.cfg";
    testutil::write_text(config, "arch = tiny.txt\nimage_size = 16\nepochs = 1\nbatch_size = 4\nk = 5\n"
                                 "data = data\nseed = 3\n");
  }
};

}  // namespace

TEST(Cli, ParamsFirstRowAndComparison) {
  const Result r = run({"params", "vgg16", "--input", "182x182", "--compare", "17994563"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(first.rfind("2D-Conv_111", 0), 0u) << first;
  EXPECT_NE(first.find("1,792"), std::string::npos) << first;
  EXPECT_NE(r.out.find("Claimed total: 17,994,563"), std::string::npos);
  EXPECT_NE(r.out.find("Computed total: "), std::string::npos);
  EXPECT_NE(r.out.find("Difference (computed - claimed): "), std::string::npos);
  EXPECT_NE(r.err.find("status=ok exit=0"), std::string::npos);
}

TEST(Cli, ParamsVgg19MinusVgg16ConvSubtotal) {
  auto conv_subtotal = [](const std::string& out) {
    const auto pos = out.find("Convolutional params: ");
    std::string digits;
    for (std::size_t i = pos + 22; i < out.size() && out[i] != '\n'; ++i)
      if (out[i] != ',') digits += out[i];
    return std::stoull(digits);
  };
  const Result a = run({"params", "vgg16"});
  const Result b = run({"params", "vgg19"});
  EXPECT_EQ(conv_subtotal(b.out) - conv_subtotal(a.out), 590080u + 2359808u + 2359808u);
}

TEST(Cli, UnknownFlagIsRejected) {
  const Result r = run({"params", "vgg16", "--bogus"});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("exit=2"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}).code, kExitConfig);
}

TEST(Cli, BadSpecIsConfigExit) {
  TempDir d;
  testutil::write_text(d / "bad.txt", "input 8x8x3\nx dense(4)\ny softmax(3)\n");
  EXPECT_EQ(run({"params", (d / "bad.txt").string(), "--input", "8x8"}).code, kExitConfig);
}

TEST(Cli, ZeroEpochsIsValidationError) {
  RunDir rd;
  const Result r = run({"crossval", "--config", rd.config.string(), "--epochs", "0", "--out-root",
                        (rd.dir / "runs").string(), "--run-name", "x"});
  EXPECT_EQ(r.code, kExitConfig) << r.err;
  EXPECT_FALSE(fs::exists(rd.dir / "runs/x"));
}

TEST(Cli, MissingDatasetIsDatasetExit) {
  TempDir d;
  testutil::write_text(d / "c.cfg", "arch = mini-vgg\nimage_size = 16\ndata = nowhere\nepochs = 1\n");
  const Result r = run({"crossval", "--config", (d / "c.cfg").string(), "--out-root", (d / "runs").string()});
  EXPECT_EQ(r.code, kExitDataset) << r.err;
}

TEST(Cli, DivergenceIsNumericExit) {
  RunDir rd;
  const Result r = run({"train", "--config", rd.config.string(), "--set", "lr=1e308", "--epochs", "5", "--out",
                        (rd.dir / "t").string()});
  EXPECT_EQ(r.code, kExitNumeric) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos);
}

TEST(Cli, CrossvalRunDirectoryAndReport) {
  RunDir rd;
  const fs::path root = rd.dir / "runs";
  const Result r = run({"crossval", "--config", rd.config.string(), "--out-root", root.string(), "--run-name",
                        "r1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path run_dir = root / "r1";
  for (const char* f : {"config.snapshot", "arch.txt", "summary.json", "summary.csv"})
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  for (int i = 0; i < 5; ++i) {
    const fs::path fold = run_dir / ("fold" + std::to_string(i));
    EXPECT_TRUE(fs::exists(fold / "checkpoint"));
    EXPECT_TRUE(fs::exists(fold / "losses.csv"));
    EXPECT_TRUE(fs::exists(fold / "stats.json"));
  }
  const std::string snapshot = testutil::read_text(run_dir / "config.snapshot");
  EXPECT_NE(snapshot.find("epochs = 1"), std::string::npos);

  // Refuses to overwrite without --force.
  const Result again = run({"crossval", "--config", rd.config.string(), "--out-root", root.string(),
                            "--run-name", "r1"});
  EXPECT_EQ(again.code, kExitConfig);

  const Result rep1 = run({"report", run_dir.string()});
  const Result rep2 = run({"report", run_dir.string(), "--plot-csv", (rd.dir / "plot.csv").string()});
  ASSERT_EQ(rep1.code, 0) << rep1.err;
  EXPECT_EQ(rep1.out, rep2.out);
  EXPECT_NE(rep1.out.find("External / Testing Set"), std::string::npos);
  EXPECT_TRUE(fs::exists(rd.dir / "plot.csv"));

  const Result cmp = run({"report", run_dir.string(), run_dir.string()});
  EXPECT_NE(cmp.out.find("#1 Recall"), std::string::npos);

  const Result ev = run({"eval", "--run", (run_dir / "fold0").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("\"accuracy\""), std::string::npos);

  EXPECT_EQ(run({"report", (rd.dir / "missing").string()}).code, kExitDataset);
}

TEST(Cli, OutRootFromEnvironment) {
  RunDir rd;
  const fs::path env_root = rd.dir / "env-runs";
  ::setenv(kOutRootEnv, env_root.string().c_str(), 1);
  const Result r = run({"crossval", "--config", rd.config.string(), "--run-name", "e"});
  ::unsetenv(kOutRootEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(env_root / "e/summary.csv"));
}

TEST(Cli, TrainThenEval) {
  RunDir rd;
  const Result r = run({"train", "--config", rd.config.string(), "--out", (rd.dir / "model").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"checkpoint", "stats.json", "losses.csv", "config.snapshot", "arch.txt"})
    EXPECT_TRUE(fs::exists(rd.dir / "model" / f)) << f;
  const Result ev = run({"eval", "--run", (rd.dir / "model").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out, r.out);
  EXPECT_EQ(run({"train", "--config", rd.config.string(), "--out", (rd.dir / "model").string()}).code,
            kExitConfig);
}

TEST(Cli, AugmentPreviewWritesImages) {
  RunDir rd;
  const Result r = run({"augment-preview", "--data", (rd.dir / "data").string(), "--n", "3", "--size", "24",
                        "--out", (rd.dir / "prev").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"preview_000.png", "preview_001.png", "preview_002.png"}) {
    const RawImage img = read_image((rd.dir / "prev" / f).string());
    EXPECT_EQ(img.width, 24u);
  }
}

TEST(Cli, BinaryReportsStatusLine) {
  TempDir d;
  const std::string cmd = std::string(CXRNET_CLI_PATH) + " params mini-vgg --input 32x32 > " +
                          (d / "o.txt").string() + " 2> " + (d / "e.txt").string();
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_NE(testutil::read_text(d / "e.txt").find("status=ok exit=0"), std::string::npos);
  const std::string bad = std::string(CXRNET_CLI_PATH) + " crossval --epochs 0 2> /dev/null";
  EXPECT_EQ(WEXITSTATUS(std::system(bad.c_str())), 2);
}
