#include <gtest/gtest.h>

#include <fstream>

#include "loss_suite.hpp"
#include "rdsr/checkpoint.hpp"

using namespace rdsr;

TEST(Encoder, FixedLengthAndDeterministic) {
  std::mt19937_64 rng(1);
  DegradationEncoder<double> enc;
  enc.init(rng);
  const auto x = test::random_image<double>(3, 16, 16, rng);
  const auto a = encode_degradation(enc, x), b = encode_degradation(enc, x);
  EXPECT_EQ(a.size(), kRepDim);
  EXPECT_EQ(a, b);
  EXPECT_EQ(encode_degradation(enc, test::random_image<double>(3, 37, 21, rng)).size(), kRepDim);
  EXPECT_THROW(encode_degradation(enc, test::random_image<double>(3, 15, 40, rng)), std::invalid_argument);
}

TEST(Upscaler, ExactScaleAndAspect) {
  std::mt19937_64 rng(2);
  for (int s : {2, 4}) {
    Upscaler<double> up(s, 8);
    up.init(rng);
    const auto x = test::random_image<double>(3, 16, 11, rng);
    const auto y = upscale(up, x, Vector<double>::Zero(kRepDim).eval());
    EXPECT_EQ(y.height, 16 * s);
    EXPECT_EQ(y.width, 11 * s);
  }
}

TEST(Upscaler, RejectsWrongCodeLengthAndStaysFiniteOnZeros) {
  std::mt19937_64 rng(3);
  Upscaler<float> up(2, 8);
  up.init(rng);
  const Image<float> zero(3, 16, 16);
  EXPECT_THROW(up.forward(zero, Vector<float>::Zero(5)), std::invalid_argument);
  EXPECT_TRUE(all_finite(up.forward(zero, Vector<float>::Zero(kRepDim))));
}

TEST(Upscaler, FreshInitIsNearCatmullRomUpsampling) {
  std::mt19937_64 rng(4);
  Upscaler<double> up(2, 8);
  up.init(rng);
  const auto x = test::smooth_image<double>(16, 16, rng);
  const auto y = up.forward(x, Vector<double>::Zero(kRepDim));
  const auto base = resize_with(x, aligned_upsample_matrix<double>(16, 2), aligned_upsample_matrix<double>(16, 2));
  EXPECT_LT(std::sqrt((y.data - base.data).array().square().mean()), 0.1);
}

TEST(Upscaler, ConditioningPathIsLive) {
  std::mt19937_64 rng(5);
  test::ProbeNets n(rng, 8);
  const auto x = test::random_image<double>(3, 16, 16, rng);
  const Vector<double> rep = Vector<double>::Random(kRepDim);
  const Vector<double> g = Vector<double>::Random(kRepDim);
  const double h = 1e-5;
  const auto a = n.up.forward(x, Vector<double>(rep + h * g)), b = n.up.forward(x, Vector<double>(rep - h * g));
  EXPECT_GT((a.data - b.data).cwiseAbs().maxCoeff() / (2 * h), 1e-6);
}

TEST(Upscaler, InputAndCodeGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  test::ProbeNets n(rng, 4);
  const auto x = test::random_image<double>(3, 8, 8, rng);
  const Vector<double> rep = Vector<double>::Random(kRepDim);
  const auto w = test::random_image<double>(3, 16, 16, rng);
  Upscaler<double>::Tape t;
  n.up.forward(x, rep, &t);
  const auto g = n.up.backward(w, t, false, true);
  const auto r = test::check_input_grad(
      x, g.input, [&](const Image<double>& p) { return n.up.forward(p, rep).data.cwiseProduct(w.data).sum(); }, rng);
  EXPECT_LT(r.max_rel, 1e-6);
  for (Index i = 0; i < kRepDim; ++i) {
    Vector<double> rp = rep, rm = rep;
    rp(i) += 1e-5;
    rm(i) -= 1e-5;
    const double num =
        (n.up.forward(x, rp).data.cwiseProduct(w.data).sum() - n.up.forward(x, rm).data.cwiseProduct(w.data).sum()) /
        2e-5;
    EXPECT_NEAR(g.rep(i), num, 1e-6 * std::max(1.0, std::abs(num)));
  }
}

TEST(PixelShuffle, UnshuffleIsInverse) {
  std::mt19937_64 rng(7);
  const auto t = test::random_image<double>(12, 5, 4, rng);
  const auto s = pixel_shuffle(t, 2);
  EXPECT_EQ(s.channels, 3);
  EXPECT_EQ(s.height, 10);
  EXPECT_EQ(pixel_unshuffle(s, 2).data, t.data);
}

TEST(Discriminator, ScoreMapShapeAndInputGradient) {
  std::mt19937_64 rng(8);
  Discriminator<double> d;
  d.init(rng);
  EXPECT_EQ(discriminate(d, test::random_image<double>(3, 64, 64, rng)).rows(), 4);
  EXPECT_EQ(discriminate(d, test::random_image<double>(3, 32, 32, rng)).size(), 4);
  EXPECT_THROW(discriminate(d, test::random_image<double>(3, 31, 64, rng)), std::invalid_argument);

  const auto img = test::random_image<double>(3, 32, 32, rng);
  EXPECT_EQ(discriminate(d, img), discriminate(d, img));
  Discriminator<double>::Tape t;
  const auto s = d.forward(img, &t);
  const auto w = test::random_image<double>(1, s.height, s.width, rng);
  const auto g = d.backward(w, t, false, true);
  const auto r = test::check_input_grad(
      img, g, [&](const Image<double>& p) { return d.forward(p).data.cwiseProduct(w.data).sum(); }, rng);
  EXPECT_LT(r.max_rel, 1e-3);
}

TEST(Baseline, SaveLoadRoundTrip) {
  std::mt19937_64 rng(9);
  Baseline<Real> b(2, 8);
  b.init(rng);
  const auto dir = test::scratch_dir("baseline_ckpt");
  save_baseline(b, (dir / "b.ckpt").string());
  Baseline<Real> back = load_baseline((dir / "b.ckpt").string());
  EXPECT_EQ(back.scale(), 2);
  EXPECT_EQ(back.upscaler.width(), 8);
  const auto x = test::random_image<Real>(3, 16, 16, rng);
  EXPECT_EQ(back.super_resolve(x).data, b.super_resolve(x).data);
  Baseline<Real> b4(4, 8);
  save_baseline(b4, (dir / "b4.ckpt").string());
  EXPECT_EQ(load_baseline((dir / "b4.ckpt").string()).scale(), 4);
}

TEST(Checkpoint, RejectsTruncatedAndForeignFiles) {
  const auto dir = test::scratch_dir("ckpt_bad");
  {
    std::ofstream((dir / "junk.ckpt").string()) << "RDSRCKPT";
  }
  EXPECT_THROW(read_checkpoint((dir / "junk.ckpt").string()), DataError);
  {
    std::ofstream((dir / "foreign.ckpt").string()) << "NOTACKPT0000000000000000";
  }
  EXPECT_THROW(read_checkpoint((dir / "foreign.ckpt").string()), DataError);
  EXPECT_THROW(read_checkpoint((dir / "missing.ckpt").string()), DataError);
}
