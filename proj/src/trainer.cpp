#include "rdsr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include "rdsr/checkpoint.hpp"
#include "rdsr/metrics.hpp"
#include "rdsr/reference_select.hpp"

namespace rdsr {

namespace fs = std::filesystem;

namespace {

nn::AdamHyper adam_for(const TrainConfig& cfg, double lr) {
  nn::AdamHyper h;
  h.lr = lr;
  h.beta1 = cfg.adam_beta1;
  h.beta2 = cfg.adam_beta2;
  return h;
}

/// Calls `fn` with whichever downsampler is active.
template <typename Fn>
decltype(auto) with_downsampler(TrainState& st, Fn&& fn) {
  if (st.fixed_dn) return fn(*st.fixed_dn);
  return fn(st.gdn);
}

void check_inputs(const Image<Real>& x_lr, const Baseline<Real>& baseline, const TrainConfig& cfg) {
  cfg.validate();
  require_rgb(x_lr, "run");
  if (x_lr.height < 48 || x_lr.width < 48) throw DataError("target LR image must be at least 48x48");
  if (baseline.scale() != cfg.scale)
    throw UsageError("baseline scale x" + std::to_string(baseline.scale()) + " does not match config scale x" +
                     std::to_string(cfg.scale));
}

Index lr_patch_extent(const Image<Real>& x_lr, const TrainConfig& cfg) {
  return std::min<Index>({static_cast<Index>(cfg.patch_lr), x_lr.height, x_lr.width});
}

Kernel<double> current_kernel(const TrainState& st) {
  if (st.fixed_dn) return Kernel<double>(st.fixed_dn->kernel().cast<double>());
  return extract_kernel(st.gdn).normalized.cast<double>();
}

bool finite(double v) { return std::isfinite(v); }

TrainState make_state(const Image<Real>& x_lr, const Baseline<Real>& baseline, const TrainConfig& cfg) {
  check_inputs(x_lr, baseline, cfg);
  TrainState st(baseline);
  st.rng.seed(cfg.seed);
  st.disc.init(st.rng);
  st.gdn = init_downsampler<Real>(cfg.scale, st.rng, cfg.gdn_init_std);
  st.initial_sr = super_resolve(st.enc, st.gup, x_lr);
  st.best_output = st.initial_sr;
  return st;
}

void finish_initial_criteria(TrainState& st, const Image<Real>& x_lr, const TrainConfig& cfg) {
  st.initial_criteria.cycle = full_cycle_loss(st, x_lr, cfg);
  st.initial_criteria.nr_score = nr_quality(st.initial_sr);
  st.best_criteria = st.initial_criteria;
}

}  // namespace

TrainState::TrainState(const Baseline<Real>& baseline)
    : gdn(baseline.scale()), gup(baseline.upscaler), enc(baseline.encoder), disc() {}

Image<Real> super_resolve(const DegradationEncoder<Real>& enc, const Upscaler<Real>& up, const Image<Real>& lr) {
  return clamp01(up.forward(lr, enc.forward(lr)));
}

TrainState initial_phase(const Image<Real>& x_lr, const Baseline<Real>& baseline, const TrainConfig& cfg,
                         RunReport* report) {
  TrainState st = make_state(x_lr, baseline, cfg);
  const Index s = cfg.scale;
  const Index patch = lr_patch_extent(x_lr, cfg);
  const CycleAlignment al = alignment_of(st.gdn);
  const nn::AdamHyper hyper = adam_for(cfg, cfg.lr_gdn);
  const auto params = st.gdn.params();

  for (int it = 0; it < cfg.iters_initial; ++it) {
    const PatchOrigin o = sample_patch_origin(x_lr, patch, st.rng);
    const Image<Real> hr = crop(st.initial_sr, s * o.y, s * o.x, s * patch, s * patch);
    nn::zero_grads(params);
    LinearDownsampler<Real>::Tape tape;
    const Image<Real> out = aligned_downsample(st.gdn, hr, &tape);
    const Image<Real> target = crop(x_lr, o.y + al.lr_margin, o.x + al.lr_margin, out.height, out.width);
    Image<Real> g;
    const double loss = charbonnier(out, target, cfg.weights.charbonnier_eps, &g);
    aligned_downsample_backward(st.gdn, g, tape, hr.height, hr.width, true, false);
    const double pen = kernel_penalties(st.gdn, cfg.penalties, true);
    ++st.iteration;
    if (report) {
      ReportRow row;
      row.iteration = st.iteration;
      row.phase = "initial";
      row.initial_loss = loss;
      row.penalty = pen;
      row.total = loss + pen;
      report->rows.push_back(row);
    }
    if (!finite(loss) || !finite(pen)) {
      st.diverged = true;
      break;
    }
    nn::adam_step(params, st.adam_gdn, hyper);
  }
  if (report) report->kernels.push_back({st.iteration, current_kernel(st)});
  finish_initial_criteria(st, x_lr, cfg);
  return st;
}

TrainState initial_state_with_kernel(const Image<Real>& x_lr, const Baseline<Real>& baseline,
                                     const Kernel<double>& kernel, const TrainConfig& cfg) {
  if (!is_valid_kernel(kernel) || kernel.size() > kDownsamplerReceptiveField)
    throw DataError("ground-truth kernel must be a normalized odd kernel of size <= 13");
  TrainState st = make_state(x_lr, baseline, cfg);
  st.fixed_dn.emplace(kernel.cast<Real>(), cfg.scale);
  finish_initial_criteria(st, x_lr, cfg);
  return st;
}

ReportRow finetune_step(TrainState& st, const Image<Real>& x_lr, const Image<Real>& y_ref, const TrainConfig& cfg) {
  const Index s = cfg.scale;
  const Index patch = lr_patch_extent(x_lr, cfg);
  if (y_ref.height < s * patch || y_ref.width < s * patch)
    throw DataError("reference image smaller than the HR patch size");
  const PatchOrigin ox = sample_patch_origin(x_lr, patch, st.rng);
  const PatchOrigin oy = sample_patch_origin(y_ref, s * patch, st.rng);
  const Image<Real> xp = crop(x_lr, ox.y, ox.x, patch, patch);
  const Image<Real> yp = crop(y_ref, oy.y, oy.x, s * patch, s * patch);

  const auto up_params = st.gup.params();
  const auto enc_params = st.enc.params();
  const auto dn_params = st.gdn.params();
  nn::zero_grads(up_params);
  nn::zero_grads(enc_params);
  nn::zero_grads(dn_params);

  const FeatureExtractor phi;
  FinetuneResult<Real> res = with_downsampler(
      st, [&](auto& dn) { return finetune_objective(xp, yp, st.gup, dn, st.enc, st.disc, phi, cfg.weights, true); });
  const double pen = st.uses_fixed_kernel() ? 0.0 : kernel_penalties(st.gdn, cfg.penalties, true);

  ReportRow row;
  row.iteration = ++st.iteration;
  row.phase = "finetune";
  row.total = res.total;
  row.cycle_forward = res.components.cycle_forward;
  row.cycle_backward = res.components.cycle_backward;
  row.reg = res.components.reg;
  row.gan = res.components.gan;
  row.penalty = pen;
  if (!finite(res.total) || !finite(pen)) {
    st.diverged = true;
    return row;
  }
  nn::adam_step(up_params, st.adam_gup, adam_for(cfg, cfg.lr_gup));
  nn::adam_step(enc_params, st.adam_enc, adam_for(cfg, cfg.lr_enc));
  if (!st.uses_fixed_kernel()) nn::adam_step(dn_params, st.adam_gdn, adam_for(cfg, cfg.lr_gdn));

  const auto disc_params = st.disc.params();
  nn::zero_grads(disc_params);
  Backprop bp;
  bp.enabled = true;
  row.disc = disc_loss(st.disc, yp, res.fake_hr, bp);
  if (!finite(row.disc)) {
    st.diverged = true;
    return row;
  }
  nn::adam_step(disc_params, st.adam_disc, adam_for(cfg, cfg.lr_disc));
  return row;
}

double full_cycle_loss(TrainState& st, const Image<Real>& x_lr, const TrainConfig& cfg) {
  const FeatureExtractor phi;
  return with_downsampler(
      st, [&](auto& dn) -> double { return cycle_forward(x_lr, st.gup, dn, st.enc, phi, cfg.weights); });
}

EvalRecord evaluate_checkpoint(TrainState& st, const Image<Real>& x_lr, const TrainConfig& cfg) {
  EvalRecord ev;
  ev.iteration = st.iteration;
  const Image<Real> sr = super_resolve(st.enc, st.gup, x_lr);
  ev.cycle = full_cycle_loss(st, x_lr, cfg);
  ev.nr_score = all_finite(sr) ? nr_quality(sr) : std::numeric_limits<double>::quiet_NaN();
  ev.accepted = finite(ev.cycle) && finite(ev.nr_score) && ev.cycle < st.best_criteria.cycle &&
                ev.nr_score < st.initial_criteria.nr_score;
  if (ev.accepted) {
    st.best_output = sr;
    st.best_criteria = {ev.cycle, ev.nr_score};
    Baseline<Real> nets(cfg.scale, cfg.width);
    nets.encoder = st.enc;
    nets.upscaler = st.gup;
    st.best_networks = std::move(nets);
    if (!st.uses_fixed_kernel()) st.best_gdn = st.gdn;
  }
  return ev;
}

RunResult run_rdsr(const Image<Real>& x_lr, const std::vector<Image<Real>>& refs, const TrainConfig& cfg,
                   const Baseline<Real>& baseline, const std::optional<Kernel<double>>& gt_kernel) {
  const auto t0 = std::chrono::steady_clock::now();
  if (refs.empty()) throw DataError("no reference images");
  RunReport report;
  TrainState st = gt_kernel ? initial_state_with_kernel(x_lr, baseline, *gt_kernel, cfg)
                            : initial_phase(x_lr, baseline, cfg, &report);
  for (const auto& ref : refs) {
    for (int i = 1; i <= cfg.iters_per_ref && !st.diverged; ++i) {
      ReportRow row = finetune_step(st, x_lr, ref, cfg);
      if (!st.diverged && i % cfg.eval_every == 0) {
        const EvalRecord ev = evaluate_checkpoint(st, x_lr, cfg);
        row.eval_cycle = ev.cycle;
        row.nr_score = ev.nr_score;
        row.accepted = ev.accepted;
        report.evaluations.push_back(ev);
        report.kernels.push_back({st.iteration, current_kernel(st)});
        if (ev.accepted) report.output_replaced = true;
      }
      report.rows.push_back(row);
    }
  }
  report.diverged = st.diverged;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Image<Real> sr = st.best_output;
  return RunResult{std::move(sr), std::move(report), std::move(st)};
}

namespace {

std::vector<Image<Real>> load_refs(const std::vector<std::string>& paths) {
  std::vector<Image<Real>> refs;
  for (const auto& p : paths) refs.push_back(load_image(p));
  return refs;
}

}  // namespace

RunResult run_rdsr(const Image<Real>& x_lr, const fs::path& ref_collection, const TrainConfig& cfg,
                   const Baseline<Real>& baseline) {
  std::mt19937_64 sel_rng(cfg.seed ^ 0x5eedULL);
  const auto paths = select_references(x_lr, ref_collection, cfg.n_refs, cfg.policy, sel_rng);
  RunResult r = run_rdsr(x_lr, load_refs(paths), cfg, baseline);
  r.report.references = paths;
  return r;
}

RunResult run_with_gt_kernel(const Image<Real>& x_lr, const Kernel<double>& k_true, const fs::path& ref_collection,
                             const TrainConfig& cfg, const Baseline<Real>& baseline) {
  std::mt19937_64 sel_rng(cfg.seed ^ 0x5eedULL);
  const auto paths = select_references(x_lr, ref_collection, cfg.n_refs, cfg.policy, sel_rng);
  RunResult r = run_rdsr(x_lr, load_refs(paths), cfg, baseline, k_true);
  r.report.references = paths;
  return r;
}

namespace {

std::string opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(9) << *v;
  return os.str();
}

std::string iter_name(long it, const char* ext) {
  std::ostringstream os;
  os << "iter_" << std::setw(4) << std::setfill('0') << it << ext;
  return os.str();
}

}  // namespace

void write_report(const RunResult& result, const fs::path& out_dir) {
  fs::create_directories(out_dir / "kernels");
  fs::create_directories(out_dir / "checkpoints");
  const RunReport& rep = result.report;
  {
    std::ofstream csv(out_dir / "report.csv");
    if (!csv) throw DataError("cannot write report.csv in " + out_dir.string());
    csv << "iteration,phase,total,cycle_forward,cycle_backward,reg,gan,disc,penalty,initial_loss,eval_cycle,nr_score,"
           "accepted\n"
        << std::setprecision(9);
    for (const auto& r : rep.rows)
      csv << r.iteration << ',' << r.phase << ',' << r.total << ',' << r.cycle_forward << ',' << r.cycle_backward << ','
          << r.reg << ',' << r.gan << ',' << r.disc << ',' << r.penalty << ',' << r.initial_loss << ','
          << opt(r.eval_cycle) << ',' << opt(r.nr_score) << ',' << (r.accepted ? (*r.accepted ? "1" : "0") : "")
          << '\n';
  }
  for (const auto& k : rep.kernels)
    write_kernel(k.kernel, (out_dir / "kernels" / iter_name(k.iteration, ".txt")).string());

  TrainState& st = const_cast<TrainState&>(result.state);
  if (!st.uses_fixed_kernel())
    write_checkpoint(make_checkpoint(NetworkTag::Downsampler, st.gdn.params()),
                     (out_dir / "checkpoints" / "downsampler_final.ckpt").string());
  if (st.best_networks) {
    write_checkpoint(make_checkpoint(NetworkTag::Baseline, st.best_networks->params()),
                     (out_dir / "checkpoints" / "upscaler_best.ckpt").string());
  }
  if (st.best_gdn)
    write_checkpoint(make_checkpoint(NetworkTag::Downsampler, st.best_gdn->params()),
                     (out_dir / "checkpoints" / "downsampler_best.ckpt").string());

  save_image(result.sr, (out_dir / "output.png").string());
  save_image(st.initial_sr, (out_dir / "initial_sr.png").string());

  std::ofstream summary(out_dir / "summary.txt");
  summary << "iterations=" << rep.rows.size() << '\n'
          << "evaluations=" << rep.evaluations.size() << '\n'
          << "output_replaced=" << (rep.output_replaced ? 1 : 0) << '\n'
          << "diverged=" << (rep.diverged ? 1 : 0) << '\n'
          << "initial_cycle=" << st.initial_criteria.cycle << '\n'
          << "initial_nr=" << st.initial_criteria.nr_score << '\n'
          << "best_cycle=" << st.best_criteria.cycle << '\n'
          << "best_nr=" << st.best_criteria.nr_score << '\n'
          << "wall_seconds=" << rep.wall_seconds << '\n';
  for (size_t i = 0; i < rep.references.size(); ++i) summary << "reference_" << i << '=' << rep.references[i] << '\n';
}

// ---------------------------------------------------------------------------
// Baseline pretraining.

namespace {

double validation_psnr(const Baseline<Real>& b, const std::vector<Image<Real>>& lr, const std::vector<Image<Real>>& hr,
                       const std::vector<size_t>& idx) {
  double acc = 0.0;
  for (size_t i : idx) acc += psnr_y(clamp01(b.super_resolve(lr[i])), hr[i]);
  return acc / static_cast<double>(idx.size());
}

}  // namespace

Baseline<Real> pretrain_baseline_upscaler(const std::vector<Image<Real>>& lr, const std::vector<Image<Real>>& hr,
                                          int scale, const TrainConfig& cfg, std::mt19937_64& rng,
                                          PretrainReport* report) {
  cfg.validate();
  if (lr.size() != hr.size() || lr.size() < 2) throw DataError("pretraining needs at least two LR/HR pairs");
  for (size_t i = 0; i < lr.size(); ++i)
    if (hr[i].height != scale * lr[i].height || hr[i].width != scale * lr[i].width)
      throw DataError("pretraining pair " + std::to_string(i) + " does not match scale x" + std::to_string(scale));

  const PretrainConfig& pc = cfg.pretrain;
  const size_t n_val = std::clamp<size_t>(
      static_cast<size_t>(std::lround(pc.val_fraction * static_cast<double>(lr.size()))), 1, lr.size() - 1);
  std::vector<size_t> train_idx, val_idx;
  for (size_t i = 0; i < lr.size(); ++i) (i + n_val < lr.size() ? train_idx : val_idx).push_back(i);

  Baseline<Real> b(scale, cfg.width);
  b.init(rng);
  const auto params = b.params();
  nn::AdamState<Real> adam;
  nn::AdamHyper hyper;
  hyper.lr = pc.lr;

  Baseline<Real> best = b;
  double best_psnr = validation_psnr(b, lr, hr, val_idx);
  if (report) report->validation_psnr.emplace_back(0, best_psnr);
  int bad = 0;
  int it = 0;
  std::uniform_int_distribution<size_t> pick(0, train_idx.size() - 1);
  const Real inv_batch = Real(1) / static_cast<Real>(pc.batch);

  while (it < pc.max_iters) {
    ++it;
    nn::zero_grads(params);
    for (int k = 0; k < pc.batch; ++k) {
      const size_t i = train_idx[pick(rng)];
      const Index patch = std::min<Index>({static_cast<Index>(pc.patch_lr), lr[i].height, lr[i].width});
      const PatchOrigin o = sample_patch_origin(lr[i], patch, rng);
      const Image<Real> lp = crop(lr[i], o.y, o.x, patch, patch);
      const Image<Real> hp = crop(hr[i], scale * o.y, scale * o.x, scale * patch, scale * patch);
      DegradationEncoder<Real>::Tape et;
      Upscaler<Real>::Tape ut;
      const auto rep = b.encoder.forward(lp, &et);
      const Image<Real> sr = b.upscaler.forward(lp, rep, &ut);
      Image<Real> g;
      charbonnier(sr, hp, cfg.weights.charbonnier_eps, &g);
      g.data *= inv_batch;
      const auto gu = b.upscaler.backward(g, ut, true, false);
      b.encoder.backward(gu.rep, et, true, false);
    }
    nn::adam_step(params, adam, hyper);
    if (it % pc.eval_every == 0) {
      const double v = validation_psnr(b, lr, hr, val_idx);
      if (!std::isfinite(v)) throw NumericalError("pretraining diverged");
      if (report) report->validation_psnr.emplace_back(it, v);
      if (v > best_psnr) {
        best_psnr = v;
        best = b;
        bad = 0;
      } else if (++bad >= pc.patience) {
        break;
      }
    }
  }
  if (report) {
    report->iterations = it;
    report->best_psnr = best_psnr;
  }
  return best;
}

Baseline<Real> pretrain_baseline_upscaler(const Manifest& manifest, const TrainConfig& cfg, std::mt19937_64& rng,
                                          PretrainReport* report) {
  if (manifest.size() < 50) throw DataError("pretraining manifest needs at least 50 pairs");
  std::set<std::tuple<double, double, double>> kernels;
  for (const auto& r : manifest) {
    if (r.scale != cfg.scale) throw DataError("manifest scale does not match config scale");
    kernels.insert({r.sigma_major, r.sigma_minor, r.theta});
  }
  if (kernels.size() < 5) throw DataError("pretraining manifest must span at least 5 distinct kernels");
  std::vector<Image<Real>> lr, hr;
  for (const auto& r : manifest) {
    lr.push_back(load_image(r.path_lr));
    hr.push_back(load_image(r.path_hr));
  }
  return pretrain_baseline_upscaler(lr, hr, cfg.scale, cfg, rng, report);
}

void save_baseline(Baseline<Real>& b, const std::string& path) {
  Checkpoint ck = make_checkpoint(NetworkTag::Baseline, b.params());
  write_checkpoint(ck, path);
}

Baseline<Real> load_baseline(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.tag != NetworkTag::Baseline) throw DataError("not a baseline checkpoint: " + path);
  // Encoder: 3 convs (w, b) + head (w, b); the upscaler tail's output count
  // is 3 s^2 and its width is the head conv's output count.
  if (ck.tensors.size() < 12) throw DataError("baseline checkpoint too short: " + path);
  const Index width = ck.tensors[0].rows();
  const Index tail_out = ck.tensors[8 + 2 + 2 * Upscaler<Real>::kBodyLayers].rows();
  const int scale = static_cast<int>(std::lround(std::sqrt(static_cast<double>(tail_out) / 3.0)));
  Baseline<Real> b(scale, width);
  restore_checkpoint(ck, NetworkTag::Baseline, b.params());
  return b;
}

}  // namespace rdsr
