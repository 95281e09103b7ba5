#include "rdsr/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "rdsr/metrics.hpp"
#include "rdsr/scenes.hpp"
#include "rdsr/trainer.hpp"

namespace rdsr::cli {

namespace fs = std::filesystem;

void write_run_manifest(const RunManifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write run manifest: " + path.string());
  out << "command=" << m.command << '\n'
      << "version=" << m.version << '\n'
      << "seed=" << m.seed << '\n'
      << "out_dir=" << m.out_dir << '\n';
  for (size_t i = 0; i < m.inputs.size(); ++i) out << "input_" << i << '=' << m.inputs[i] << '\n';
  for (const auto& [k, v] : m.config) out << "config." << k << '=' << v << '\n';
}

namespace {

/// Options shared by every command that builds a TrainConfig.
struct ConfigOptions {
  std::string profile = "desk";
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--profile", profile, "Schedule profile: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--config", config_path, "key=value config file");
    app->add_option("--set", overrides, "key=value override, repeatable");
    app->add_option("--seed", seed, "Random seed");
  }

  /// profile < config file < RDSR_SEED < --set < --seed
  TrainConfig build() const {
    TrainConfig cfg = make_profile(profile);
    if (!config_path.empty()) apply_key_values(cfg, read_key_values(config_path));
    if (const char* env = std::getenv("RDSR_SEED"); env && *env) apply_key_values(cfg, {{"seed", env}});
    KeyValues kv;
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + o);
      kv[o.substr(0, eq)] = o.substr(eq + 1);
    }
    apply_key_values(cfg, kv);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

std::string fmt_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

void begin(const std::string& command, const TrainConfig* cfg, std::vector<std::string> inputs, const fs::path& out,
           std::uint64_t seed) {
  fs::create_directories(out);
  RunManifest m;
  m.command = command;
  if (cfg) m.config = to_key_values(*cfg);
  m.inputs = std::move(inputs);
  m.out_dir = out.string();
  m.seed = seed;
  write_run_manifest(m, out / "run_manifest.txt");
}

Baseline<Real> load_baseline_for(const std::string& path, const TrainConfig& cfg) {
  Baseline<Real> b = load_baseline(path);
  if (b.scale() != cfg.scale)
    throw UsageError("baseline is x" + std::to_string(b.scale()) + " but config asks for x" +
                     std::to_string(cfg.scale));
  return b;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string hr_dir, out;
  int n = 10;
  DegradationRanges ranges;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a) {
  if (!fs::is_directory(a.hr_dir)) throw DataError("not a directory: " + a.hr_dir);
  begin("synth", nullptr, {a.hr_dir}, a.out, a.seed);
  const Manifest m = synthesize_dataset(a.hr_dir, a.n, a.ranges, a.seed, a.out);
  std::cout << "wrote " << m.size() << " pairs to " << (fs::path(a.out) / "manifest.csv").string() << '\n';
  return kOk;
}

// --- gen-scenes ------------------------------------------------------------

struct ScenesArgs {
  std::string out;
  int count = 10;
  int size = 128;
  std::uint64_t seed = 0;
};

int cmd_gen_scenes(const ScenesArgs& a) {
  begin("gen-scenes", nullptr, {}, a.out, a.seed);
  write_scenes(a.out, a.count, a.size, a.size, a.seed);
  return kOk;
}

// --- pretrain --------------------------------------------------------------

struct PretrainArgs {
  std::string manifest, out;
  ConfigOptions opts;
};

int cmd_pretrain(const PretrainArgs& a) {
  const TrainConfig cfg = a.opts.build();
  if (!fs::exists(a.manifest)) throw DataError("missing manifest: " + a.manifest);
  begin("pretrain", &cfg, {a.manifest}, a.out, cfg.seed);
  const Manifest m = read_manifest(a.manifest);
  std::mt19937_64 rng(cfg.seed);
  PretrainReport rep;
  Baseline<Real> b = pretrain_baseline_upscaler(m, cfg, rng, &rep);
  save_baseline(b, (fs::path(a.out) / "baseline.ckpt").string());
  std::ofstream csv(fs::path(a.out) / "pretrain.csv");
  csv << "iteration,val_psnr_y\n" << std::setprecision(9);
  for (const auto& [it, p] : rep.validation_psnr) csv << it << ',' << p << '\n';
  std::cout << "pretrained " << rep.iterations << " iterations, best validation PSNR-Y " << fmt_metric(rep.best_psnr)
            << " dB\n";
  return kOk;
}

// --- run -------------------------------------------------------------------

struct RunArgs {
  std::string lr, refs_dir, baseline, out, gt_kernel;
  std::optional<int> n_refs;
  std::optional<std::string> policy;
  ConfigOptions opts;
};

TrainConfig run_config(const RunArgs& a) {
  TrainConfig cfg = a.opts.build();
  if (a.n_refs) cfg.n_refs = *a.n_refs;
  if (a.policy) cfg.policy = parse_policy(*a.policy);
  cfg.validate();
  return cfg;
}

int cmd_run(const RunArgs& a) {
  const TrainConfig cfg = run_config(a);
  std::vector<std::string> inputs = {a.lr, a.refs_dir, a.baseline};
  if (!a.gt_kernel.empty()) inputs.push_back(a.gt_kernel);
  begin("run", &cfg, inputs, a.out, cfg.seed);
  write_key_values(to_key_values(cfg), (fs::path(a.out) / "config.txt").string());

  const Image<Real> x = load_image(a.lr);
  const Baseline<Real> baseline = load_baseline_for(a.baseline, cfg);
  RunResult r = a.gt_kernel.empty() ? run_rdsr(x, fs::path(a.refs_dir), cfg, baseline)
                                    : run_with_gt_kernel(x, read_kernel(a.gt_kernel), a.refs_dir, cfg, baseline);
  write_report(r, a.out);
  std::cout << "iterations " << r.report.rows.size() << ", output "
            << (r.report.output_replaced ? "replaced" : "kept baseline") << ", " << std::fixed << std::setprecision(1)
            << r.report.wall_seconds << " s\n";
  if (r.report.diverged) {
    std::cerr << "error: training diverged (non-finite loss); wrote the last accepted output\n";
    return kNumerical;
  }
  return kOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string manifest, sr_dir, baseline, out;
  std::string method;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.manifest)) throw DataError("missing manifest: " + a.manifest);
  begin("eval", nullptr, {a.manifest, a.sr_dir, a.baseline}, a.out, 0);
  const Manifest m = read_manifest(a.manifest);
  std::optional<Baseline<Real>> baseline;
  if (!a.baseline.empty()) baseline = load_baseline(a.baseline);
  std::string method = a.method;
  if (method.empty()) method = !a.sr_dir.empty() ? "rdsr" : baseline ? "baseline" : "bicubic";

  std::ofstream csv(fs::path(a.out) / "metrics.csv");
  csv << "image_id,psnr_y,ssim,nr_score\n";
  double sum_p = 0, sum_s = 0;
  int scale = m.empty() ? 0 : m.front().scale;
  for (const auto& row : m) {
    const std::string id = fs::path(row.path_lr).stem().string();
    const Image<Real> gt = load_image(row.path_hr);
    Image<Real> sr;
    if (!a.sr_dir.empty()) {
      sr = load_image((fs::path(a.sr_dir) / (id + ".png")).string());
    } else if (baseline) {
      sr = clamp01(baseline->super_resolve(load_image(row.path_lr)));
    } else {
      sr = clamp01(bicubic_resize(load_image(row.path_lr), gt.height, gt.width));
    }
    const MetricReport mr = evaluate_pair(sr, gt);
    csv << id << ',' << fmt_metric(mr.psnr_y) << ',' << fmt_metric(mr.ssim) << ',' << fmt_metric(mr.nr_score) << '\n';
    sum_p += mr.psnr_y;
    sum_s += mr.ssim;
  }
  const double n = static_cast<double>(m.size());
  std::ofstream summary(fs::path(a.out) / "summary.csv");
  summary << "method,scale,psnr_y,ssim\n";
  const std::string mp = m.empty() ? "" : fmt_metric(sum_p / n), ms = m.empty() ? "" : fmt_metric(sum_s / n);
  summary << method << ',' << scale << ',' << mp << ',' << ms << '\n';
  std::cout << std::left << std::setw(12) << "method" << std::setw(8) << "scale" << std::setw(10) << "PSNR-Y"
            << "SSIM\n"
            << std::setw(12) << method << std::setw(8) << ("x" + std::to_string(scale)) << std::setw(10) << mp << ms
            << '\n';
  return kOk;
}

// --- ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string lr, hr, refs_dir, baseline, out;
  std::vector<std::string> sweeps = {"policy", "n_refs", "toggles"};
  ConfigOptions opts;
};

int cmd_ablate(const AblateArgs& a) {
  const TrainConfig base = a.opts.build();
  begin("ablate", &base, {a.lr, a.hr, a.refs_dir, a.baseline}, a.out, base.seed);
  const Image<Real> x = load_image(a.lr);
  std::optional<Image<Real>> gt;
  if (!a.hr.empty()) gt = load_image(a.hr);
  const Baseline<Real> baseline = load_baseline_for(a.baseline, base);

  struct Cell {
    std::string sweep, name;
    TrainConfig cfg;
  };
  std::vector<Cell> cells;
  for (const auto& s : a.sweeps) {
    if (s == "policy") {
      for (auto p : {SelectionPolicy::Auto, SelectionPolicy::Random, SelectionPolicy::Reverse}) {
        TrainConfig c = base;
        c.policy = p;
        cells.push_back({s, to_string(p), c});
      }
    } else if (s == "n_refs") {
      for (int n : {1, 3, 5}) {
        TrainConfig c = base;
        c.n_refs = n;
        cells.push_back({s, std::to_string(n), c});
      }
    } else if (s == "toggles") {
      cells.push_back({s, "none", base});
      TrainConfig g = base;
      g.weights.lambda_gan = 0.0;
      cells.push_back({s, "-gan", g});
      TrainConfig r = base;
      r.weights.lambda_reg = 0.0;
      cells.push_back({s, "-reg", r});
    } else {
      throw UsageError("unknown sweep: " + s);
    }
  }

  std::ofstream csv(fs::path(a.out) / "ablation.csv");
  csv << "sweep,cell,psnr_y,ssim,nr_score,best_cycle,replaced,diverged\n";
  int status = kOk;
  for (const auto& c : cells) {
    const RunResult r = run_rdsr(x, fs::path(a.refs_dir), c.cfg, baseline);
    std::string p, s;
    if (gt) {
      p = fmt_metric(psnr_y(r.sr, *gt));
      s = fmt_metric(ssim(r.sr, *gt));
    }
    csv << c.sweep << ',' << c.name << ',' << p << ',' << s << ',' << fmt_metric(nr_quality(r.sr)) << ','
        << std::setprecision(9) << r.state.best_criteria.cycle << ',' << (r.report.output_replaced ? 1 : 0) << ','
        << (r.report.diverged ? 1 : 0) << '\n';
    std::cout << c.sweep << '/' << c.name << ": " << (p.empty() ? "done" : p + " dB") << '\n';
    if (r.report.diverged) status = kNumerical;
  }
  return status;
}

// --- plot ------------------------------------------------------------------

int cmd_plot(const std::string& report, const std::string& out) {
  if (!fs::exists(fs::path(report) / "report.csv")) throw DataError("missing report: " + report);
  begin("plot", nullptr, {report}, out, 0);
  const int n = render_report_plots(report, out);
  std::cout << "wrote loss_trace.png and " << n << " kernel heatmaps\n";
  return kOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Per-image blind super-resolution with reference-guided degradation learning"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Degrade HR images with random Gaussian kernels");
  s->add_option("--hr-dir", synth.hr_dir, "Directory of HR PNGs")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--n", synth.n, "Number of images")->check(CLI::NonNegativeNumber);
  s->add_option("--scale", synth.ranges.scale)->check(CLI::IsMember({2, 4}));
  s->add_option("--sigma-min", synth.ranges.sigma_min);
  s->add_option("--sigma-max", synth.ranges.sigma_max);
  s->add_flag("--isotropic", synth.ranges.isotropic);
  s->add_option("--noise", synth.ranges.noise_sigma);
  s->add_option("--kernel-size", synth.ranges.kernel_size);
  s->add_option("--seed", synth.seed);

  ScenesArgs scenes;
  auto* g = app.add_subcommand("gen-scenes", "Write procedural HR test scenes");
  g->add_option("--out", scenes.out)->required();
  g->add_option("--count", scenes.count)->check(CLI::NonNegativeNumber);
  g->add_option("--size", scenes.size)->check(CLI::Range(16, 4096));
  g->add_option("--seed", scenes.seed);

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Train the baseline encoder and upscaler on a manifest");
  p->add_option("--manifest", pre.manifest)->required();
  p->add_option("--out", pre.out)->required();
  pre.opts.attach(p);

  RunArgs run;
  auto* r = app.add_subcommand("run", "Adapt the baseline to one LR image");
  r->add_option("--lr", run.lr, "Target LR image")->required();
  r->add_option("--refs-dir", run.refs_dir, "HR reference collection")->required();
  r->add_option("--baseline", run.baseline, "Baseline checkpoint")->required();
  r->add_option("--out", run.out)->required();
  r->add_option("--n-refs", run.n_refs);
  r->add_option("--policy", run.policy)->check(CLI::IsMember({"auto", "random", "reverse"}));
  r->add_option("--gt-kernel", run.gt_kernel, "Known blur kernel; replaces the learned downsampler");
  run.opts.attach(r);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "PSNR-Y / SSIM / NR score over a manifest");
  e->add_option("--manifest", ev.manifest)->required();
  e->add_option("--out", ev.out)->required();
  auto* sr_opt = e->add_option("--sr-dir", ev.sr_dir, "Directory of SR outputs named like the LR files");
  e->add_option("--baseline", ev.baseline, "Evaluate this baseline checkpoint instead")->excludes(sr_opt);
  e->add_option("--method", ev.method, "Label for the summary table");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Sweep selection policy, reference count and loss toggles");
  b->add_option("--lr", ab.lr)->required();
  b->add_option("--hr", ab.hr, "Ground truth for PSNR-Y");
  b->add_option("--refs-dir", ab.refs_dir)->required();
  b->add_option("--baseline", ab.baseline)->required();
  b->add_option("--out", ab.out)->required();
  b->add_option("--sweep", ab.sweeps, "policy, n_refs, toggles")->delimiter(',');
  ab.opts.attach(b);

  std::string plot_report, plot_out;
  auto* pl = app.add_subcommand("plot", "Render loss traces and kernel heatmaps");
  pl->add_option("--report", plot_report, "Run output directory")->required();
  pl->add_option("--out", plot_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*g) return cmd_gen_scenes(scenes);
    if (*p) return cmd_pretrain(pre);
    if (*r) return cmd_run(run);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_ablate(ab);
    if (*pl) return cmd_plot(plot_report, plot_out);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kUsage;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return kNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kData;
  }
  return kUsage;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> storage = args;
  storage.insert(storage.begin(), "rdsr");
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace rdsr::cli
