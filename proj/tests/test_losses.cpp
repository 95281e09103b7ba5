#include <gtest/gtest.h>

#include "loss_suite.hpp"

using namespace rdsr;

TEST(Charbonnier, EqualInputsGiveEpsilon) {
  std::mt19937_64 rng(1);
  const auto x = test::random_image<double>(3, 9, 7, rng);
  EXPECT_NEAR(charbonnier(x, x, 1e-6), 1e-6, 1e-15);
  EXPECT_NEAR(charbonnier(x, x, 0.25), 0.25, 1e-15);
}

TEST(Charbonnier, ApproachesL1ForLargeResiduals) {
  std::mt19937_64 rng(2);
  const auto a = test::random_image<double>(3, 8, 8, rng), b = test::random_image<double>(3, 8, 8, rng);
  const double l1 = (a.data - b.data).cwiseAbs().mean();
  const double c = charbonnier(a, b, 1e-6);
  EXPECT_GE(c, l1);
  EXPECT_LT(c - l1, 1e-4);
  EXPECT_THROW(charbonnier(a, test::random_image<double>(3, 8, 9, rng), 1e-6), std::invalid_argument);
}

TEST(Perceptual, ZeroOnEqualAndBlindToConstantShift) {
  std::mt19937_64 rng(3);
  const FeatureExtractor phi;
  const auto a = test::random_image<double>(3, 12, 12, rng);
  auto b = a;
  EXPECT_EQ(perceptual(a, b, phi), 0.0);
  b.data.array() += 0.3;
  EXPECT_LT(perceptual(a, b, phi), 1e-12);
  Image<double> tiny(3, 5, 5);
  EXPECT_THROW(perceptual(tiny, tiny, phi), std::invalid_argument);
}

TEST(Perceptual, AdjointIsTransposeOfFeatures) {
  std::mt19937_64 rng(4);
  const FeatureExtractor phi;
  const auto x = test::random_image<double>(3, 11, 10, rng);
  const Vector<double> fx = phi.features(x);
  const Vector<double> g = Vector<double>::Random(fx.size());
  const auto ag = phi.adjoint(g, 3, 11, 10);
  EXPECT_NEAR(fx.dot(g), x.data.cwiseProduct(ag.data).sum(), 1e-10);
}

TEST(Adversarial, StubDiscriminatorIdentities) {
  std::mt19937_64 rng(5);
  const auto img = test::random_image<double>(3, 32, 32, rng);
  test::StubDisc ones;
  EXPECT_EQ(gen_adv_loss(ones, img), 0.0);
  test::StubDisc zeros{0.0};
  EXPECT_EQ(gen_adv_loss(zeros, img), 1.0);
  test::StubDisc perfect{0.0, true};
  const auto real = Image<double>::constant(3, 32, 32, 0.9), fake = Image<double>::constant(3, 32, 32, 0.1);
  EXPECT_EQ(disc_loss(perfect, real, fake), 0.0);
  EXPECT_EQ(disc_loss(perfect, fake, real), 2.0);
}

TEST(Adversarial, LsganTermsAndGradients) {
  Matrix<double> s(2, 2);
  s << 1.0, 0.0, 2.0, 0.5;
  Matrix<double> g;
  EXPECT_NEAR(lsgan_real_term<double>(s, &g), (0.0 + 1.0 + 1.0 + 0.25) / 4.0, 1e-15);
  EXPECT_NEAR(g(1, 0), 2.0 * 1.0 / 4.0, 1e-15);
  EXPECT_NEAR(lsgan_fake_term<double>(s, &g), (1.0 + 0.0 + 4.0 + 0.25) / 4.0, 1e-15);
  EXPECT_NEAR(g(1, 1), 2.0 * 0.5 / 4.0, 1e-15);
}

TEST(Regularizer, ZeroForIdenticalInputs) {
  std::mt19937_64 rng(6);
  DegradationEncoder<double> enc(8);
  enc.init(rng);
  const auto x = test::random_image<double>(3, 16, 16, rng);
  EXPECT_EQ(reg_loss(enc, x, x), 0.0);
  EXPECT_GT(reg_loss(enc, x, test::random_image<double>(3, 16, 16, rng)), 0.0);
}

TEST(Totals, WeightedSums) {
  const LossWeights w;
  EXPECT_EQ(cycle_total(1.0, 1.0, w), 6.0);
  LossComponents c{1.0, 1.0, 1.0, 1.0};
  EXPECT_EQ(total_loss(c, w), 6.0 + 20.0 + 1.0);
  EXPECT_EQ(total_loss(6.0, 0.5, 2.0, w), 6.0 + 10.0 + 2.0);
}

TEST(Alignment, MarginsPlaceOutputsOnLrGrid) {
  for (Index s : {2, 4}) {
    const auto al = CycleAlignment::for_downsampler(13, s);
    EXPECT_GE(al.hr_offset, 0);
    EXPECT_LT(al.hr_offset, s);
    EXPECT_EQ(al.hr_offset + 6, s * al.lr_margin);
  }
}

TEST(Alignment, IdentityCycleIsNearlyLossless) {
  // Delta downsampler after exact replication upsampling returns x itself.
  struct Replicate {
    struct Tape {};
    struct Grads {
      Image<double> input;
      Vector<double> rep;
    };
    int scale() const { return 2; }
    Image<double> forward(const Image<double>& x, const Vector<double>&, Tape* = nullptr) const {
      Image<double> out(3, 2 * x.height, 2 * x.width);
      for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < out.height; ++y)
          for (Index xx = 0; xx < out.width; ++xx) out(c, y, xx) = x(c, y / 2, xx / 2);
      return out;
    }
    Grads backward(const Image<double>&, const Tape&, bool, bool) { return {}; }
  };
  struct NullEnc {
    struct Tape {};
    Vector<double> forward(const Image<double>&, Tape* = nullptr) const { return Vector<double>::Zero(1); }
    Image<double> backward(const Vector<double>&, const Tape&, bool, bool) { return {}; }
  };
  std::mt19937_64 rng(7);
  const auto x = test::random_image<double>(3, 20, 20, rng);
  Replicate up;
  NullEnc enc;
  LinearDownsampler<double> dn(2);
  const FeatureExtractor phi;
  LossWeights w;
  w.perceptual_weight = 0.0;
  EXPECT_NEAR(cycle_forward(x, up, dn, enc, phi, w), w.charbonnier_eps, 1e-12);
}

TEST(Gradients, AllLossesMatchFiniteDifferences) {
  for (std::uint64_t seed : {11u, 12u, 13u})
    for (const auto& [name, r] : test::gradient_errors(seed)) EXPECT_LT(r.vector_rel, 1e-3) << name << " seed " << seed;
}

TEST(Gradients, EveryCoordinateMatchesOnSmoothLosses) {
  LossWeights w;
  w.charbonnier_eps = 0.1;
  w.perceptual_weight = 0.0;
  for (const auto& [name, r] : test::gradient_errors(21, w)) EXPECT_LT(r.max_rel, 1e-3) << name;
}
