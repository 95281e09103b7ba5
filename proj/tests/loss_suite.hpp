// Loss test doubles and finite-difference gradient checks shared by the unit
// and acceptance tests.
#ifndef RDSR_LOSS_SUITE_HPP
#define RDSR_LOSS_SUITE_HPP

#include <map>
#include <string>

#include "rdsr/losses.hpp"
#include "rdsr/sr_networks.hpp"
#include "rdsr/trainer.hpp"
#include "test_common.hpp"

namespace rdsr::test {

/// Discriminator double: every score is `value`, or, with `split`, 1 for
/// images whose mean exceeds 0.5 and 0 otherwise.
struct StubDisc {
  struct Tape {
    Index h = 0, w = 0;
  };
  double value = 1.0;
  bool split = false;

  Tensor<double> forward(const Image<double>& img, Tape* t = nullptr) const {
    if (t) t->h = img.height, t->w = img.width;
    const double v = split ? (img.data.mean() > 0.5 ? 1.0 : 0.0) : value;
    return Tensor<double>::constant(1, std::max<Index>(img.height / 16, 1), std::max<Index>(img.width / 16, 1), v);
  }
  Image<double> backward(const Tensor<double>&, const Tape& t, bool = true, bool = true) {
    return Image<double>(3, t.h, t.w);
  }
};

struct ProbeNets {
  Upscaler<double> up;
  DegradationEncoder<double> enc;
  LinearDownsampler<double> dn;
  Discriminator<double> disc;

  explicit ProbeNets(std::mt19937_64& rng, Index width = 4) : up(2, width), enc(width), dn(2) {
    up.init(rng);
    enc.init(rng);
    disc.init(rng);
    dn = init_downsampler<double>(2, rng, 0.03);
    // Unit gain per layer keeps the kernel sum at 1, away from the centroid singularity.
    for (auto& l : dn.layers) l.value /= l.value.sum();
    // Non-zero tail and modulation so every parameter reaches the output.
    for (auto* p : up.params())
      if (p->value.cwiseAbs().maxCoeff() == 0.0) nn::fill_normal(p->value, 0.1, rng);
  }

  void zero() {
    nn::zero_grads(up.params());
    nn::zero_grads(enc.params());
    nn::zero_grads(dn.params());
    nn::zero_grads(disc.params());
  }
};

inline nn::ParamList<double> join(std::initializer_list<nn::ParamList<double>> lists) {
  nn::ParamList<double> out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

/// Central differences with respect to sampled entries of an input image.
inline GradCheck check_input_grad(Image<double> a, const Image<double>& analytic,
                                  const std::function<double(const Image<double>&)>& f, std::mt19937_64& rng,
                                  int coords = 48, double h = 1e-4) {
  GradCheck r;
  std::vector<double> ana_all, num_all;
  const std::function<double()> at_a = [&] { return f(a); };
  const double f0 = at_a();
  for (int i = 0; i < coords; ++i) {
    const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(a.data.size()));
    const double num = central_difference(a.data.data()[j], h, f0, at_a), ana = analytic.data.data()[j];
    r.max_rel = std::max(r.max_rel, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
    ana_all.push_back(ana);
    num_all.push_back(num);
    ++r.checked;
  }
  r.vector_rel = vector_relative_error(ana_all, num_all);
  return r;
}

/// Gradient check per loss for one seed, on 8x8 probes where the networks
/// allow it (encoder input >= 16, discriminator input >= 32), sampling up to
/// `coords` entries per parameter tensor.
inline std::map<std::string, GradCheck> gradient_errors(std::uint64_t seed, const LossWeights& w = {},
                                                        int coords = 24) {
  std::mt19937_64 rng(seed);
  std::map<std::string, GradCheck> out;
  const FeatureExtractor phi;

  {
    const auto a = random_image<double>(3, 8, 8, rng), b = random_image<double>(3, 8, 8, rng);
    Image<double> g;
    charbonnier(a, b, w.charbonnier_eps, &g);
    out["charbonnier"] = check_input_grad(
        a, g, [&](const Image<double>& p) { return charbonnier(p, b, w.charbonnier_eps); }, rng, 2 * coords);
    perceptual(a, b, phi, &g);
    out["perceptual"] =
        check_input_grad(a, g, [&](const Image<double>& p) { return perceptual(p, b, phi); }, rng, 2 * coords);
    reconstruction_loss(a, b, phi, w, &g);
    out["reconstruction"] = check_input_grad(
        a, g, [&](const Image<double>& p) { return reconstruction_loss(p, b, phi, w); }, rng, 2 * coords);
  }

  ProbeNets n(rng);
  const auto x = random_image<double>(3, 16, 16, rng);
  const auto y = random_image<double>(3, 48, 48, rng);

  n.zero();
  cycle_forward(x, n.up, n.dn, n.enc, phi, w, Backprop{true, 1.0});
  out["cycle_forward"] = check_param_grads(
      join({n.up.params(), n.enc.params(), n.dn.params()}),
      [&] { return static_cast<double>(cycle_forward(x, n.up, n.dn, n.enc, phi, w)); }, rng, coords);

  n.zero();
  cycle_backward(y, n.up, n.dn, n.enc, phi, w, Backprop{true, 1.0});
  out["cycle_backward"] = check_param_grads(
      join({n.up.params(), n.enc.params(), n.dn.params()}),
      [&] { return static_cast<double>(cycle_backward(y, n.up, n.dn, n.enc, phi, w)); }, rng, coords);

  n.zero();
  {
    typename DegradationEncoder<double>::Tape et;
    typename Upscaler<double>::Tape ut;
    const auto fake = n.up.forward(x, n.enc.forward(x, &et), &ut);
    Image<double> gf;
    gen_adv_loss(n.disc, fake, &gf);
    const auto gu = n.up.backward(gf, ut, true, false);
    n.enc.backward(gu.rep, et, true, false);
  }
  out["gen_adv"] = check_param_grads(
      join({n.up.params(), n.enc.params()}),
      [&] { return static_cast<double>(gen_adv_loss(n.disc, n.up.forward(x, n.enc.forward(x)))); }, rng, coords);

  n.zero();
  const auto real = random_image<double>(3, 32, 32, rng), fake = random_image<double>(3, 32, 32, rng);
  disc_loss(n.disc, real, fake, Backprop{true, 1.0});
  out["disc"] = check_param_grads(
      n.disc.params(), [&] { return static_cast<double>(disc_loss(n.disc, real, fake)); }, rng, coords);

  n.zero();
  const auto x2 = random_image<double>(3, 16, 16, rng);
  reg_loss(n.enc, x, x2, Backprop{true, 1.0});
  out["reg"] =
      check_param_grads(n.enc.params(), [&] { return static_cast<double>(reg_loss(n.enc, x, x2)); }, rng, coords);

  n.zero();
  kernel_penalties(n.dn, PenaltyWeights{}, true);
  out["kernel_penalty"] = check_param_grads(
      n.dn.params(), [&] { return static_cast<double>(kernel_penalties(std::as_const(n.dn), PenaltyWeights{})); }, rng,
      coords);

  n.zero();
  const auto y32 = random_image<double>(3, 48, 48, rng);
  finetune_objective(x, y32, n.up, n.dn, n.enc, n.disc, phi, w, true);
  out["total"] = check_param_grads(
      join({n.up.params(), n.enc.params(), n.dn.params()}),
      [&] { return finetune_objective(x, y32, n.up, n.dn, n.enc, n.disc, phi, w, false).total; }, rng, coords);
  return out;
}

}  // namespace rdsr::test

#endif  // RDSR_LOSS_SUITE_HPP
