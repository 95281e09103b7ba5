// Per-image adaptation: an initial phase that fits the downsampler to the
// baseline's own super-resolved output, then a dual-branch fine-tune phase on
// content-irrelevant HR references with periodic output selection.
#ifndef RDSR_TRAINER_HPP
#define RDSR_TRAINER_HPP

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rdsr/config.hpp"
#include "rdsr/downsampler.hpp"
#include "rdsr/losses.hpp"
#include "rdsr/sr_networks.hpp"

namespace rdsr {

/// Scalar type used for per-image training.
using Real = float;

template <typename Scalar>
struct FinetuneResult {
  LossComponents components;
  double total = 0.0;
  Image<Scalar> fake_hr;
};

/// One evaluation of the fine-tune objective on a target LR patch `x` and a
/// reference HR patch `y`:
///   target branch    x -> up(x, enc(x)) -> dn          (forward cycle, adversarial term)
///   reference branch y -> dn -> up(., enc(dn(y)))      (backward cycle)
///   regularizer      |enc(x) - enc(dn(y))|_1
/// With `backprop`, gradients of the weighted total are accumulated into the
/// upscaler, encoder and downsampler parameters (discriminator untouched).
template <typename Scalar, typename Dn, typename Disc>
FinetuneResult<Scalar> finetune_objective(const Image<Scalar>& x, const Image<Scalar>& y, Upscaler<Scalar>& up, Dn& dn,
                                          DegradationEncoder<Scalar>& enc, Disc& disc, const FeatureExtractor& phi,
                                          const LossWeights& w, bool backprop) {
  FinetuneResult<Scalar> r;
  const CycleAlignment al = alignment_of(dn);
  const Index s = dn.scale();

  typename DegradationEncoder<Scalar>::Tape ex, ey;
  typename Upscaler<Scalar>::Tape ux, uy;
  typename Dn::Tape dx, dy;

  const DegradationRep<Scalar> rep_x = enc.forward(x, &ex);
  r.fake_hr = up.forward(x, rep_x, &ux);
  const Image<Scalar> back = aligned_downsample(dn, r.fake_hr, &dx);
  const Image<Scalar> target_x = crop(x, al.lr_margin, al.lr_margin, back.height, back.width);
  Image<Scalar> g_back;
  r.components.cycle_forward = reconstruction_loss(back, target_x, phi, w, backprop ? &g_back : nullptr);

  Image<Scalar> g_fake;
  r.components.gan = gen_adv_loss(disc, r.fake_hr, backprop ? &g_fake : nullptr);

  const Image<Scalar> lr_y = aligned_downsample(dn, y, &dy);
  const DegradationRep<Scalar> rep_y = enc.forward(lr_y, &ey);
  const Image<Scalar> rec_y = up.forward(lr_y, rep_y, &uy);
  const Image<Scalar> target_y = crop(y, s * al.lr_margin, s * al.lr_margin, rec_y.height, rec_y.width);
  Image<Scalar> g_rec;
  r.components.cycle_backward = reconstruction_loss(rec_y, target_y, phi, w, backprop ? &g_rec : nullptr);

  Vector<Scalar> g_reg;
  r.components.reg = rep_l1<Scalar>(rep_x, rep_y, backprop ? &g_reg : nullptr);
  r.total = total_loss(r.components, w);

  if (backprop) {
    // Target branch.
    g_back.data *= Scalar(w.lambda_cycle_target);
    Image<Scalar> g_hr = aligned_downsample_backward(dn, g_back, dx, r.fake_hr.height, r.fake_hr.width, true, true);
    g_hr.data += Scalar(w.lambda_gan) * g_fake.data;
    const auto gx = up.backward(g_hr, ux, true, false);
    g_reg *= Scalar(w.lambda_reg);
    enc.backward(Vector<Scalar>(gx.rep + g_reg), ex, true, false);

    // Reference branch.
    g_rec.data *= Scalar(w.lambda_cycle_ref);
    const auto gy = up.backward(g_rec, uy, true, true);
    Image<Scalar> g_lr = gy.input;
    g_lr.data += enc.backward(Vector<Scalar>(gy.rep - g_reg), ey, true, true).data;
    aligned_downsample_backward(dn, g_lr, dy, y.height, y.width, true, false);
  }
  return r;
}

struct ReportRow {
  long iteration = 0;
  std::string phase;
  double total = 0.0;
  double cycle_forward = 0.0;
  double cycle_backward = 0.0;
  double reg = 0.0;
  double gan = 0.0;
  double disc = 0.0;
  double penalty = 0.0;
  double initial_loss = 0.0;
  std::optional<double> eval_cycle;
  std::optional<double> nr_score;
  std::optional<bool> accepted;
};

struct EvalRecord {
  long iteration = 0;
  double cycle = 0.0;
  double nr_score = 0.0;
  bool accepted = false;
};

struct Criteria {
  double cycle = 0.0;
  double nr_score = 0.0;
};

struct KernelSnapshot {
  long iteration = 0;
  Kernel<double> kernel;
};

struct RunReport {
  std::vector<ReportRow> rows;
  std::vector<KernelSnapshot> kernels;
  std::vector<EvalRecord> evaluations;
  std::vector<std::string> references;
  double wall_seconds = 0.0;
  bool diverged = false;
  bool output_replaced = false;
};

struct TrainState {
  explicit TrainState(const Baseline<Real>& baseline);

  LinearDownsampler<Real> gdn;
  std::optional<FixedKernelDownsampler<Real>> fixed_dn;
  Upscaler<Real> gup;
  DegradationEncoder<Real> enc;
  Discriminator<Real> disc;
  nn::AdamState<Real> adam_gdn, adam_gup, adam_enc, adam_disc;
  long iteration = 0;
  Image<Real> initial_sr;
  Image<Real> best_output;
  Criteria initial_criteria;
  Criteria best_criteria;
  /// Networks at the last accepted evaluation.
  std::optional<Baseline<Real>> best_networks;
  std::optional<LinearDownsampler<Real>> best_gdn;
  std::mt19937_64 rng;
  bool diverged = false;

  bool uses_fixed_kernel() const { return fixed_dn.has_value(); }
};

/// Baseline output on the full image, clamped to [0,1].
Image<Real> super_resolve(const DegradationEncoder<Real>& enc, const Upscaler<Real>& up, const Image<Real>& lr);

/// Builds the state, computes the baseline output and fits the downsampler to
/// (baseline output, target LR) for `cfg.iters_initial` steps.
TrainState initial_phase(const Image<Real>& x_lr, const Baseline<Real>& baseline, const TrainConfig& cfg,
                         RunReport* report = nullptr);

/// Same starting point, but the downsampler is a fixed known kernel and no
/// initial-phase training happens.
TrainState initial_state_with_kernel(const Image<Real>& x_lr, const Baseline<Real>& baseline,
                                     const Kernel<double>& kernel, const TrainConfig& cfg);

/// One dual-branch update of upscaler, encoder and downsampler followed by one
/// discriminator update.
ReportRow finetune_step(TrainState& state, const Image<Real>& x_lr, const Image<Real>& y_ref, const TrainConfig& cfg);

/// Full-image forward cycle loss of the current networks.
double full_cycle_loss(TrainState& state, const Image<Real>& x_lr, const TrainConfig& cfg);

/// Replaces the kept output only when the full-image cycle loss improves on
/// the best so far and the no-reference score beats the baseline output's.
EvalRecord evaluate_checkpoint(TrainState& state, const Image<Real>& x_lr, const TrainConfig& cfg);

struct RunResult {
  Image<Real> sr;
  RunReport report;
  TrainState state;
};

/// Selects references from `ref_collection` per cfg.policy / cfg.n_refs.
RunResult run_rdsr(const Image<Real>& x_lr, const std::filesystem::path& ref_collection, const TrainConfig& cfg,
                   const Baseline<Real>& baseline);

/// Variant taking already-selected reference images.
RunResult run_rdsr(const Image<Real>& x_lr, const std::vector<Image<Real>>& refs, const TrainConfig& cfg,
                   const Baseline<Real>& baseline, const std::optional<Kernel<double>>& gt_kernel = std::nullopt);

RunResult run_with_gt_kernel(const Image<Real>& x_lr, const Kernel<double>& k_true,
                             const std::filesystem::path& ref_collection, const TrainConfig& cfg,
                             const Baseline<Real>& baseline);

/// Writes report.csv, kernels/, checkpoints/, output.png and summary.txt.
void write_report(const RunResult& result, const std::filesystem::path& out_dir);

struct PretrainReport {
  std::vector<std::pair<int, double>> validation_psnr;
  int iterations = 0;
  double best_psnr = 0.0;
};

/// Jointly trains encoder and upscaler with Charbonnier loss on LR/HR pairs
/// until validation PSNR-Y stops improving for `patience` evaluations.
Baseline<Real> pretrain_baseline_upscaler(const std::vector<Image<Real>>& lr, const std::vector<Image<Real>>& hr,
                                          int scale, const TrainConfig& cfg, std::mt19937_64& rng,
                                          PretrainReport* report = nullptr);

Baseline<Real> pretrain_baseline_upscaler(const Manifest& manifest, const TrainConfig& cfg, std::mt19937_64& rng,
                                          PretrainReport* report = nullptr);

void save_baseline(Baseline<Real>& b, const std::string& path);
Baseline<Real> load_baseline(const std::string& path);

}  // namespace rdsr

#endif  // RDSR_TRAINER_HPP
