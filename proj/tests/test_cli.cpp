#include <gtest/gtest.h>

#include <fstream>

#include "rdsr/cli.hpp"
#include "rdsr/degradation.hpp"
#include "rdsr/scenes.hpp"
#include "rdsr/trainer.hpp"
#include "test_common.hpp"

using namespace rdsr;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) { return cli::run_cli(args); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}), cli::kOk);
  EXPECT_EQ(run({}), cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}), cli::kUsage);
  EXPECT_EQ(run({"gen-scenes"}), cli::kUsage);
  const auto dir = test::scratch_dir("cli_usage");
  EXPECT_EQ(run({"gen-scenes", "--out", dir.string(), "--size", "8"}), cli::kUsage);
}

TEST(Cli, DataErrorsExitWithTwo) {
  const auto dir = test::scratch_dir("cli_data");
  EXPECT_EQ(run({"synth", "--hr-dir", (dir / "missing").string(), "--out", (dir / "o").string()}), cli::kData);
  EXPECT_EQ(run({"plot", "--report", (dir / "missing").string(), "--out", (dir / "p").string()}), cli::kData);
}

TEST(Cli, ScenesSynthEvalAndManifest) {
  const auto dir = test::scratch_dir("cli_flow");
  ASSERT_EQ(run({"gen-scenes", "--out", (dir / "hr").string(), "--count", "3", "--size", "64", "--seed", "4"}),
            cli::kOk);
  EXPECT_EQ(list_pngs(dir / "hr").size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "hr" / "run_manifest.txt"));
  ASSERT_EQ(run({"synth", "--hr-dir", (dir / "hr").string(), "--out", (dir / "data").string(), "--n", "3"}), cli::kOk);
  const auto m = read_manifest(dir / "data" / "manifest.csv");
  ASSERT_EQ(m.size(), 3u);
  ASSERT_EQ(run({"eval", "--manifest", (dir / "data" / "manifest.csv").string(), "--out", (dir / "ev").string()}),
            cli::kOk);
  const std::string metrics = slurp(dir / "ev" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("image_id,psnr_y,ssim,nr_score\n", 0), 0u);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 4);
  const std::string manifest = slurp(dir / "ev" / "run_manifest.txt");
  EXPECT_NE(manifest.find("command=eval"), std::string::npos);
  EXPECT_NE(manifest.find("version="), std::string::npos);
}

TEST(Cli, RunThenPlot) {
  const auto dir = test::scratch_dir("cli_run");
  fs::create_directories(dir / "refs");
  for (int i = 0; i < 3; ++i)
    save_image(generate_scene(96, 96, 10 + i), (dir / "refs" / ("r" + std::to_string(i) + ".png")).string());
  std::mt19937_64 rng(1);
  DegradationConfig dc;
  save_image(degrade(generate_scene(112, 112, 1), dc, rng), (dir / "lr.png").string());
  Baseline<Real> b(2, 8);
  b.init(rng);
  save_baseline(b, (dir / "b.ckpt").string());
  const std::vector<std::string> common = {"run",
                                           "--lr",
                                           (dir / "lr.png").string(),
                                           "--refs-dir",
                                           (dir / "refs").string(),
                                           "--baseline",
                                           (dir / "b.ckpt").string(),
                                           "--n-refs",
                                           "2",
                                           "--set",
                                           "iters_initial=10",
                                           "--set",
                                           "iters_per_ref=10",
                                           "--set",
                                           "eval_every=5",
                                           "--set",
                                           "patch_lr=24"};
  auto args = common;
  args.insert(args.end(), {"--out", (dir / "out").string()});
  ASSERT_EQ(run(args), cli::kOk);
  for (const char* p : {"report.csv", "output.png", "config.txt", "run_manifest.txt", "summary.txt"})
    EXPECT_TRUE(fs::exists(dir / "out" / p)) << p;
  EXPECT_NE(slurp(dir / "out" / "config.txt").find("iters_initial=10"), std::string::npos);
  ASSERT_EQ(run({"plot", "--report", (dir / "out").string(), "--out", (dir / "plots").string()}), cli::kOk);
  EXPECT_TRUE(fs::exists(dir / "plots" / "loss_trace.png"));
  EXPECT_EQ(list_pngs(dir / "plots" / "kernels").size(), 5u);

  args = common;
  args.insert(args.end(), {"--out", (dir / "bad").string(), "--set", "no_such=1"});
  EXPECT_EQ(run(args), cli::kUsage);
  args = common;
  args[8] = "9";
  args.insert(args.end(), {"--out", (dir / "big").string()});
  EXPECT_EQ(run(args), cli::kUsage);
}

TEST(Plot, KernelHeatmapColors) {
  Kernel<double> k(Matrix<double>::Zero(3, 3));
  k.weights(1, 1) = 1.0;
  k.weights(0, 0) = -1.0;
  const auto img = cli::plot_kernel(k, 4);
  EXPECT_EQ(img.height, 12);
  EXPECT_EQ(img(0, 5, 5), 1.0f);
  EXPECT_EQ(img(1, 5, 5), 0.0f);
  EXPECT_EQ(img(2, 1, 1), 1.0f);
  EXPECT_EQ(img(0, 1, 1), 0.0f);
  EXPECT_EQ(img(1, 11, 11), 1.0f);
}
