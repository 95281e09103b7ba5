#include <gtest/gtest.h>

#include <fstream>

#include "rdsr/degradation.hpp"
#include "rdsr/scenes.hpp"
#include "rdsr/trainer.hpp"
#include "test_common.hpp"

using namespace rdsr;

namespace {

struct Fixture {
  Baseline<Real> baseline{2, 8};
  Image<Real> hr, x_lr, ref;
  Kernel<double> k_true;
  TrainConfig cfg;

  Fixture() {
    std::mt19937_64 rng(5);
    baseline.init(rng);
    hr = generate_scene(112, 112, 1);
    GaussianSpec s;
    s.sigma_major = 1.6;
    s.sigma_minor = 0.8;
    s.theta = 0.6;
    k_true = make_anisotropic_gaussian<double>(s);
    DegradationConfig dc;
    dc.kernel = k_true;
    x_lr = degrade(hr, dc, rng);
    ref = generate_scene(96, 96, 2);
    cfg = make_profile("desk");
    cfg.iters_initial = 20;
    cfg.iters_per_ref = 10;
    cfg.eval_every = 5;
    cfg.patch_lr = 24;
    cfg.seed = 3;
  }
};

bool same_params(nn::ParamList<Real> a, nn::ParamList<Real> b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i]->value != b[i]->value) return false;
  return true;
}

}  // namespace

TEST(InitialPhase, TrainsOnlyTheDownsampler) {
  Fixture f;
  RunReport rep;
  TrainState st = initial_phase(f.x_lr, f.baseline, f.cfg, &rep);
  EXPECT_TRUE(same_params(st.gup.params(), f.baseline.upscaler.params()));
  EXPECT_TRUE(same_params(st.enc.params(), f.baseline.encoder.params()));
  ASSERT_EQ(rep.rows.size(), 20u);
  for (const auto& r : rep.rows) EXPECT_TRUE(std::isfinite(r.initial_loss));
  EXPECT_EQ(st.best_output.data, st.initial_sr.data);
  EXPECT_EQ(st.initial_sr.height, 2 * f.x_lr.height);

  auto zero = f.cfg;
  zero.iters_initial = 0;
  TrainState a = initial_phase(f.x_lr, f.baseline, zero), b = initial_phase(f.x_lr, f.baseline, zero);
  EXPECT_TRUE(same_params(a.gdn.params(), b.gdn.params()));
  EXPECT_FALSE(same_params(a.gdn.params(), st.gdn.params()));
}

TEST(InitialPhase, RejectsSmallImagesAndScaleMismatch) {
  Fixture f;
  EXPECT_THROW(initial_phase(crop(f.x_lr, 0, 0, 40, 56), f.baseline, f.cfg), DataError);
  auto c4 = f.cfg;
  c4.scale = 4;
  EXPECT_THROW(initial_phase(f.x_lr, f.baseline, c4), UsageError);
}

TEST(Finetune, StepMovesAllTrainedNetworks) {
  Fixture f;
  TrainState st = initial_phase(f.x_lr, f.baseline, f.cfg);
  const auto up0 = nn::flatten(st.gup.params()), dn0 = nn::flatten(st.gdn.params()), d0 = nn::flatten(st.disc.params());
  const ReportRow row = finetune_step(st, f.x_lr, f.ref, f.cfg);
  EXPECT_TRUE(std::isfinite(row.total));
  EXPECT_GT((nn::flatten(st.gup.params()) - up0).norm(), 0.0);
  EXPECT_GT((nn::flatten(st.gdn.params()) - dn0).norm(), 0.0);
  EXPECT_GT((nn::flatten(st.disc.params()) - d0).norm(), 0.0);
  const double expect =
      total_loss(LossComponents{row.cycle_forward, row.cycle_backward, row.reg, row.gan}, f.cfg.weights);
  EXPECT_NEAR(row.total, expect, 1e-9 * std::max(1.0, expect));
}

TEST(Finetune, SameSeedGivesBitwiseIdenticalTrajectories) {
  Fixture f;
  TrainState a = initial_phase(f.x_lr, f.baseline, f.cfg), b = initial_phase(f.x_lr, f.baseline, f.cfg);
  for (int i = 0; i < 10; ++i) {
    finetune_step(a, f.x_lr, f.ref, f.cfg);
    finetune_step(b, f.x_lr, f.ref, f.cfg);
  }
  EXPECT_EQ(nn::flatten(a.gup.params()), nn::flatten(b.gup.params()));
  EXPECT_EQ(nn::flatten(a.gdn.params()), nn::flatten(b.gdn.params()));
  EXPECT_EQ(nn::flatten(a.disc.params()), nn::flatten(b.disc.params()));
}

TEST(Finetune, ReferenceTooSmallIsDataError) {
  Fixture f;
  TrainState st = initial_phase(f.x_lr, f.baseline, f.cfg);
  EXPECT_THROW(finetune_step(st, f.x_lr, crop(f.ref, 0, 0, 40, 40), f.cfg), DataError);
}

TEST(Checkpoint, AcceptsOnlyJointImprovement) {
  Fixture f;
  TrainState st = initial_phase(f.x_lr, f.baseline, f.cfg);
  st.best_criteria.cycle = -1.0;
  EvalRecord ev = evaluate_checkpoint(st, f.x_lr, f.cfg);
  EXPECT_FALSE(ev.accepted);
  EXPECT_EQ(st.best_output.data, st.initial_sr.data);

  st.best_criteria.cycle = 1e9;
  st.initial_criteria.nr_score = -1.0;
  ev = evaluate_checkpoint(st, f.x_lr, f.cfg);
  EXPECT_FALSE(ev.accepted);

  st.initial_criteria.nr_score = 1e9;
  ev = evaluate_checkpoint(st, f.x_lr, f.cfg);
  EXPECT_TRUE(ev.accepted);
  EXPECT_EQ(st.best_criteria.cycle, ev.cycle);
  ASSERT_TRUE(st.best_networks.has_value());
  ASSERT_TRUE(st.best_gdn.has_value());
}

TEST(Run, BookkeepingAndZeroFinetuneFallback) {
  Fixture f;
  const std::vector<Image<Real>> refs = {f.ref, f.ref};
  const RunResult r = run_rdsr(f.x_lr, refs, f.cfg, f.baseline);
  EXPECT_EQ(r.report.rows.size(), static_cast<size_t>(f.cfg.iters_initial + 2 * f.cfg.iters_per_ref));
  EXPECT_EQ(r.report.evaluations.size(), 4u);
  EXPECT_EQ(r.report.kernels.size(), 5u);

  auto none = f.cfg;
  none.iters_per_ref = 0;
  const RunResult z = run_rdsr(f.x_lr, {f.ref}, none, f.baseline);
  EXPECT_EQ(z.sr.data, z.state.initial_sr.data);
  EXPECT_THROW(run_rdsr(f.x_lr, std::vector<Image<Real>>{}, f.cfg, f.baseline), DataError);
}

TEST(Run, DivergenceReturnsBaselineOutputExactly) {
  Fixture f;
  auto wild = f.cfg;
  wild.lr_gup = wild.lr_enc = wild.lr_gdn = wild.lr_disc = 1e6;
  wild.iters_per_ref = 20;
  const RunResult r = run_rdsr(f.x_lr, {f.ref}, wild, f.baseline);
  EXPECT_FALSE(r.report.output_replaced);
  EXPECT_EQ(r.sr.data, r.state.initial_sr.data);
  const auto expect = super_resolve(f.baseline.encoder, f.baseline.upscaler, f.x_lr);
  EXPECT_EQ(r.sr.data, expect.data);
}

TEST(Run, AcceptedOutputsDominateBaselineCriteria) {
  Fixture f;
  const RunResult r = run_rdsr(f.x_lr, {f.ref}, f.cfg, f.baseline);
  if (r.sr.data != r.state.initial_sr.data) {
    EXPECT_LT(r.state.best_criteria.cycle, r.state.initial_criteria.cycle);
    EXPECT_LT(r.state.best_criteria.nr_score, r.state.initial_criteria.nr_score);
  }
  for (const auto& ev : r.report.evaluations) {
    if (ev.accepted) {
      EXPECT_LT(ev.nr_score, r.state.initial_criteria.nr_score);
    }
  }
}

TEST(GtKernel, FixedKernelMatchesTargetStatistics) {
  Fixture f;
  TrainState st = initial_state_with_kernel(f.x_lr, f.baseline, f.k_true, f.cfg);
  EXPECT_TRUE(st.uses_fixed_kernel());
  Image<Real> y_lr = aligned_downsample(*st.fixed_dn, f.hr, nullptr);
  const Image<Real> x_mid = crop(f.x_lr, 3, 3, y_lr.height, y_lr.width);
  for (Index c = 0; c < 3; ++c) {
    const double my = y_lr.data.row(c).mean(), mx = x_mid.data.row(c).mean();
    EXPECT_NEAR(my, mx, 0.05);
    const double sy = std::sqrt((y_lr.data.row(c).array() - my).square().mean());
    const double sx = std::sqrt((x_mid.data.row(c).array() - mx).square().mean());
    EXPECT_NEAR(sy, sx, 0.05);
  }
  const RunResult r = run_rdsr(f.x_lr, {f.ref}, f.cfg, f.baseline, f.k_true);
  EXPECT_TRUE(r.state.uses_fixed_kernel());
  for (const auto& row : r.report.rows) EXPECT_EQ(row.penalty, 0.0);
  Kernel<double> bad = f.k_true;
  bad.weights *= 2.0;
  EXPECT_THROW(initial_state_with_kernel(f.x_lr, f.baseline, bad, f.cfg), DataError);
}

TEST(Report, WritesLayout) {
  Fixture f;
  const RunResult r = run_rdsr(f.x_lr, {f.ref}, f.cfg, f.baseline);
  const auto dir = test::scratch_dir("report");
  write_report(r, dir);
  for (const char* p : {"report.csv", "output.png", "initial_sr.png", "summary.txt",
                        "checkpoints/downsampler_final.ckpt", "kernels/iter_0020.txt"})
    EXPECT_TRUE(std::filesystem::exists(dir / p)) << p;
  std::ifstream in(dir / "report.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header.rfind("iteration,phase,total,", 0), 0u);
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, f.cfg.iters_initial + f.cfg.iters_per_ref);
}

TEST(Pretrain, ZeroIterationsKeepInitAndSeedReproduces) {
  std::vector<Image<Real>> lr, hr;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 6; ++i) {
    hr.push_back(generate_scene(64, 64, 50 + i));
    DegradationConfig dc;
    lr.push_back(degrade(hr.back(), dc, rng));
  }
  TrainConfig cfg = make_profile("desk");
  cfg.width = 8;
  cfg.pretrain.max_iters = 0;
  std::mt19937_64 r1(4), r2(4);
  Baseline<Real> init(2, 8);
  init.init(r2);
  const Baseline<Real> b0 = pretrain_baseline_upscaler(lr, hr, 2, cfg, r1);
  EXPECT_EQ(nn::flatten(const_cast<Baseline<Real>&>(b0).params()), nn::flatten(init.params()));

  cfg.pretrain.max_iters = 20;
  cfg.pretrain.eval_every = 10;
  std::mt19937_64 a(7), b(7);
  PretrainReport ra, rb;
  pretrain_baseline_upscaler(lr, hr, 2, cfg, a, &ra);
  pretrain_baseline_upscaler(lr, hr, 2, cfg, b, &rb);
  ASSERT_FALSE(ra.validation_psnr.empty());
  EXPECT_NEAR(ra.best_psnr, rb.best_psnr, 1e-4);
}

TEST(Pretrain, ManifestNeedsEnoughPairsAndKernels) {
  Manifest m(10);
  TrainConfig cfg = make_profile("desk");
  std::mt19937_64 rng(1);
  EXPECT_THROW(pretrain_baseline_upscaler(m, cfg, rng), DataError);
}
