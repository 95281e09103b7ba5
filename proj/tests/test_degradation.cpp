#include <gtest/gtest.h>

#include <fstream>
#include <numbers>

#include "rdsr/degradation.hpp"
#include "rdsr/scenes.hpp"
#include "test_common.hpp"

using namespace rdsr;

namespace {

Kernel<double> gauss(double major, double minor, double theta, int size = 11) {
  GaussianSpec s;
  s.sigma_major = major;
  s.sigma_minor = minor;
  s.theta = theta;
  s.size = size;
  return make_anisotropic_gaussian<double>(s);
}

}  // namespace

TEST(Gaussian, NormalizedAndCentrosymmetric) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const double a = 0.2 + 3.0 * u(rng), b = 0.2 + 3.0 * u(rng);
    const auto k = gauss(std::max(a, b), std::min(a, b), std::numbers::pi * u(rng));
    EXPECT_NEAR(k.sum(), 1.0, 1e-12);
    EXPECT_TRUE(is_valid_kernel(k));
    EXPECT_GE(k.weights.minCoeff(), 0.0);
    EXPECT_LT((k.weights - k.weights.reverse()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Gaussian, IsotropicIgnoresAngleAndIsSeparable) {
  const auto a = gauss(1.3, 1.3, 0.0), b = gauss(1.3, 1.3, 1.1);
  EXPECT_LT((a.weights - b.weights).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((a.weights - a.weights.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.weights);
  EXPECT_LT(svd.singularValues()(1) / svd.singularValues()(0), 1e-12);
}

TEST(Gaussian, MajorAxisFollowsTheta) {
  const auto h = gauss(3.0, 0.5, 0.0);
  const Index c = h.center();
  EXPECT_GT(h.weights(c, c + 3), h.weights(c + 3, c));
  const auto v = gauss(3.0, 0.5, std::numbers::pi / 2);
  EXPECT_GT(v.weights(c + 3, c), v.weights(c, c + 3));
  const auto rot = gauss(3.0, 0.5, std::numbers::pi / 2);
  EXPECT_LT((rot.weights - h.weights.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gaussian, RejectsBadSpecs) {
  EXPECT_THROW(gauss(1.0, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(gauss(0.5, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(gauss(1.0, 1.0, 0.0, 10), std::invalid_argument);
}

TEST(Correlate, MatchesNaiveLoop) {
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd in = Eigen::MatrixXd::Random(13, 11);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Random(3, 5);
  for (Index stride : {1, 2, 3}) {
    const auto out = correlate_valid<double>(in, k, stride);
    for (Index i = 0; i < out.rows(); ++i)
      for (Index j = 0; j < out.cols(); ++j) {
        double acc = 0.0;
        for (Index a = 0; a < 3; ++a)
          for (Index b = 0; b < 5; ++b) acc += in(i * stride + a, j * stride + b) * k(a, b);
        EXPECT_NEAR(out(i, j), acc, 1e-12);
      }
    EXPECT_EQ(out.rows(), (13 - 3) / stride + 1);
  }
}

TEST(Correlate, FullConvolveIsAssociativeOnDeltas) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 3);
  const auto d = Kernel<double>::delta(5);
  const auto c = full_convolve<double>(a, d.weights);
  EXPECT_EQ(c.rows(), 7);
  EXPECT_LT((c.block(2, 2, 3, 3) - a).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(c.sum(), a.sum(), 1e-12);
}

TEST(Degrade, DeltaKernelIsPureDecimation) {
  std::mt19937_64 rng(7);
  const auto hr = test::random_image<double>(3, 16, 12, rng);
  DegradationConfig cfg;
  cfg.scale = 2;
  const auto lr = degrade(hr, cfg, rng);
  ASSERT_EQ(lr.height, 8);
  ASSERT_EQ(lr.width, 6);
  EXPECT_EQ(lr(2, 3, 4), hr(2, 6, 8));
}

TEST(Degrade, ConstantImageIsPreservedByAnyNormalizedKernel) {
  std::mt19937_64 rng(8);
  const auto hr = Image<double>::constant(3, 24, 24, 0.37);
  DegradationConfig cfg;
  cfg.scale = 4;
  cfg.kernel = gauss(2.0, 0.7, 0.4);
  const auto lr = degrade(hr, cfg, rng);
  EXPECT_LT((lr.data.array() - 0.37).abs().maxCoeff(), 1e-12);
}

TEST(Degrade, NoiseAndClamping) {
  std::mt19937_64 rng(9);
  const auto hr = Image<double>::constant(3, 64, 64, 0.5);
  DegradationConfig cfg;
  cfg.noise_sigma = 0.05;
  const auto lr = degrade(hr, cfg, rng);
  const double sd = std::sqrt((lr.data.array() - 0.5).square().mean());
  EXPECT_NEAR(sd, 0.05, 0.01);
  EXPECT_GE(lr.data.minCoeff(), 0.0);
  EXPECT_LE(lr.data.maxCoeff(), 1.0);
  Image<double> odd(3, 15, 16);
  EXPECT_THROW(degrade(odd, cfg, rng), std::invalid_argument);
}

TEST(KernelIo, RoundTripIsExact) {
  const auto dir = test::scratch_dir("kernel_io");
  const auto k = gauss(2.1, 0.9, 0.7);
  write_kernel(k, (dir / "k.txt").string());
  const auto back = read_kernel((dir / "k.txt").string());
  EXPECT_EQ(back.weights, k.weights);
  {
    std::ofstream((dir / "bad.txt").string()) << "size 4\n";
  }
  EXPECT_THROW(read_kernel((dir / "bad.txt").string()), DataError);
}

TEST(Synthesize, WritesConsistentDataset) {
  const auto dir = test::scratch_dir("synth");
  write_scenes(dir / "hr", 4, 48, 40, 11);
  DegradationRanges ranges;
  ranges.scale = 2;
  const auto m = synthesize_dataset(dir / "hr", 3, ranges, 5, dir / "out");
  ASSERT_EQ(m.size(), 3u);
  const auto back = read_manifest(dir / "out" / "manifest.csv");
  ASSERT_EQ(back.size(), 3u);
  for (size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back[i].seed, m[i].seed);
    EXPECT_NEAR(back[i].sigma_major, m[i].sigma_major, 1e-12);
    EXPECT_GE(m[i].sigma_major, m[i].sigma_minor);
    EXPECT_GE(m[i].sigma_minor, ranges.sigma_min);
    EXPECT_LE(m[i].sigma_major, ranges.sigma_max);
    const auto lr = load_image(back[i].path_lr), hr = load_image(back[i].path_hr);
    EXPECT_EQ(lr.height * 2, hr.height);
    EXPECT_EQ(lr.width * 2, hr.width);
    const auto k = read_kernel(back[i].kernel_path);
    EXPECT_EQ(k.size(), 11);
    EXPECT_NEAR(k.sum(), 1.0, 1e-9);
  }
  synthesize_dataset(dir / "hr", 3, ranges, 5, dir / "out2");
  EXPECT_EQ(load_image((dir / "out2" / m[1].path_lr).string()).data, load_image(back[1].path_lr).data);
  EXPECT_THROW(synthesize_dataset(dir / "hr", 9, ranges, 5, dir / "out3"), DataError);
}

TEST(Scenes, DeterministicPerSeedAndInRange) {
  const auto a = generate_scene(64, 48, 3), b = generate_scene(64, 48, 3), c = generate_scene(64, 48, 4);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  EXPECT_GE(a.data.minCoeff(), 0.0f);
  EXPECT_LE(a.data.maxCoeff(), 1.0f);
}
