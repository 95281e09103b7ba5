// Training objectives and their gradients.
//
// The cycle helpers are generic over the network types so that test doubles
// (identity maps, constant discriminators) can stand in for real networks.
// Required surface:
//   up:  forward(img, rep, Tape*), backward(grad, tape, accumulate, need_input) -> {input, rep}, scale()
//   dn:  forward(img, Tape*), backward(grad, tape, accumulate, need_input) -> img, scale()
//   enc: forward(img, Tape*), backward(grad_rep, tape, accumulate, need_input) -> img
//   d:   forward(img, Tape*), backward(grad_scores, tape, accumulate, need_input) -> img
#ifndef RDSR_LOSSES_HPP
#define RDSR_LOSSES_HPP

#include <cmath>

#include "rdsr/downsampler.hpp"
#include "rdsr/image.hpp"

namespace rdsr {

struct LossWeights {
  double lambda_cycle_target = 5.0;
  double lambda_cycle_ref = 1.0;
  double lambda_reg = 20.0;
  double lambda_gan = 1.0;
  double charbonnier_eps = 1e-6;
  double charbonnier_weight = 1.0;
  double perceptual_weight = 1.0;
};

/// Mean of sqrt((a-b)^2 + eps^2). Optionally writes d/da.
template <typename Scalar>
Scalar charbonnier(const Tensor<Scalar>& a, const Tensor<Scalar>& b, double eps, Tensor<Scalar>* grad_a = nullptr) {
  if (!a.same_shape(b)) throw std::invalid_argument("charbonnier: shape mismatch");
  const auto d = (a.data - b.data).array();
  const Scalar e2 = static_cast<Scalar>(eps * eps);
  const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = (d.square() + e2).sqrt();
  const Scalar n = static_cast<Scalar>(a.data.size());
  if (grad_a) {
    *grad_a = Tensor<Scalar>(a.channels, a.height, a.width);
    grad_a->data = (d / r / n).matrix();
  }
  return static_cast<Scalar>(r.template cast<double>().sum() / static_cast<double>(a.data.size()));
}

/// Fixed derivative/Laplacian filter bank on each RGB channel at full and half
/// resolution (valid filtering, so constants map to zero).
class FeatureExtractor {
 public:
  static constexpr Index kMinExtent = 6;

  template <typename Scalar>
  Vector<Scalar> features(const Image<Scalar>& img) const {
    check(img);
    std::vector<Matrix<Scalar>> maps;
    for (Index c = 0; c < img.channels; ++c) {
      const Matrix<Scalar> p = img.plane(c);
      append(maps, p);
      append(maps, pool(p));
    }
    Index n = 0;
    for (const auto& m : maps) n += m.size();
    Vector<Scalar> out(n);
    Index off = 0;
    for (const auto& m : maps) {
      out.segment(off, m.size()) = Eigen::Map<const Vector<Scalar>>(m.data(), m.size());
      off += m.size();
    }
    return out;
  }

  /// Adjoint of features(): maps a feature-space gradient back to image space.
  template <typename Scalar>
  Image<Scalar> adjoint(const Vector<Scalar>& g, Index channels, Index height, Index width) const {
    Image<Scalar> out(channels, height, width);
    Index off = 0;
    for (Index c = 0; c < channels; ++c) {
      Matrix<Scalar> full = Matrix<Scalar>::Zero(height, width);
      off = scatter(g, off, full);
      Matrix<Scalar> half = Matrix<Scalar>::Zero(height / 2, width / 2);
      off = scatter(g, off, half);
      for (Index y = 0; y < half.rows(); ++y)
        for (Index x = 0; x < half.cols(); ++x) full.block(2 * y, 2 * x, 2, 2).array() += half(y, x) / Scalar(4);
      out.plane(c) = full;
    }
    return out;
  }

 private:
  template <typename Scalar>
  static std::array<Matrix<Scalar>, 3> bank() {
    Matrix<Scalar> dx(1, 3), dy(3, 1), lap(3, 3);
    dx << -0.5, 0, 0.5;
    dy << -0.5, 0, 0.5;
    lap << 0, 1, 0, 1, -4, 1, 0, 1, 0;
    return {dx, dy, lap};
  }

  template <typename Scalar>
  static void check(const Image<Scalar>& img) {
    if (img.height < kMinExtent || img.width < kMinExtent)
      throw std::invalid_argument("perceptual: input smaller than filter support");
  }

  template <typename Scalar>
  static Matrix<Scalar> pool(const Matrix<Scalar>& p) {
    Matrix<Scalar> h(p.rows() / 2, p.cols() / 2);
    for (Index y = 0; y < h.rows(); ++y)
      for (Index x = 0; x < h.cols(); ++x) h(y, x) = p.block(2 * y, 2 * x, 2, 2).sum() / Scalar(4);
    return h;
  }

  template <typename Scalar>
  static void append(std::vector<Matrix<Scalar>>& maps, const Matrix<Scalar>& p) {
    for (const auto& k : bank<Scalar>()) maps.push_back(correlate_valid<Scalar>(p, k));
  }

  template <typename Scalar>
  static Index scatter(const Vector<Scalar>& g, Index off, Matrix<Scalar>& plane) {
    for (const auto& k : bank<Scalar>()) {
      const Index fh = plane.rows() - k.rows() + 1, fw = plane.cols() - k.cols() + 1;
      const Eigen::Map<const Matrix<Scalar>> gm(g.data() + off, fh, fw);
      for (Index a = 0; a < k.rows(); ++a)
        for (Index b = 0; b < k.cols(); ++b)
          if (k(a, b) != Scalar(0)) plane.block(a, b, fh, fw) += k(a, b) * gm;
      off += fh * fw;
    }
    return off;
  }
};

/// Mean absolute difference of the filter-bank responses.
template <typename Scalar>
Scalar perceptual(const Image<Scalar>& a, const Image<Scalar>& b, const FeatureExtractor& phi,
                  Image<Scalar>* grad_a = nullptr) {
  if (!a.same_shape(b)) throw std::invalid_argument("perceptual: shape mismatch");
  const Vector<Scalar> d = phi.features(a) - phi.features(b);
  const double n = static_cast<double>(d.size());
  if (grad_a) {
    const Vector<Scalar> sg =
        d.unaryExpr([n](Scalar v) { return static_cast<Scalar>((v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0)) / n); });
    *grad_a = phi.adjoint(sg, a.channels, a.height, a.width);
  }
  return static_cast<Scalar>(d.template cast<double>().cwiseAbs().sum() / n);
}

/// charbonnier_weight * charbonnier + perceptual_weight * perceptual.
template <typename Scalar>
Scalar reconstruction_loss(const Image<Scalar>& a, const Image<Scalar>& b, const FeatureExtractor& phi,
                           const LossWeights& w, Image<Scalar>* grad_a = nullptr) {
  Image<Scalar> gc, gp;
  const Scalar c = charbonnier(a, b, w.charbonnier_eps, grad_a ? &gc : nullptr);
  const Scalar p = perceptual(a, b, phi, grad_a ? &gp : nullptr);
  if (grad_a) {
    *grad_a = gc;
    grad_a->data = Scalar(w.charbonnier_weight) * gc.data + Scalar(w.perceptual_weight) * gp.data;
  }
  return Scalar(w.charbonnier_weight) * c + Scalar(w.perceptual_weight) * p;
}

/// Crop geometry that aligns a downsampler's valid output with LR pixels.
/// With receptive field R and scale s, the downsampler output i sits on HR
/// position `hr_offset + s*i + (R-1)/2`; dropping `hr_offset` leading HR
/// pixels makes that equal s*(i + lr_margin).
struct CycleAlignment {
  Index lr_margin = 0;
  Index hr_offset = 0;

  static CycleAlignment for_downsampler(Index receptive_field, Index scale) {
    const Index half = (receptive_field - 1) / 2;
    CycleAlignment a;
    a.lr_margin = (half + scale - 1) / scale;
    a.hr_offset = scale * a.lr_margin - half;
    return a;
  }
};

template <typename Dn>
Index receptive_field_of(const Dn& dn) {
  if constexpr (requires { dn.receptive_field(); })
    return dn.receptive_field();
  else
    return kDownsamplerReceptiveField;
}

template <typename Dn>
CycleAlignment alignment_of(const Dn& dn) {
  return CycleAlignment::for_downsampler(receptive_field_of(dn), dn.scale());
}

/// Downsampler applied to an HR image aligned to the LR grid; returns the
/// LR-aligned output and records the offset in `tape`.
template <typename Dn, typename Scalar>
Image<Scalar> aligned_downsample(const Dn& dn, const Image<Scalar>& hr, typename Dn::Tape* tape) {
  const CycleAlignment al = alignment_of(dn);
  const Image<Scalar> cropped = crop(hr, al.hr_offset, al.hr_offset, hr.height - al.hr_offset, hr.width - al.hr_offset);
  return dn.forward(cropped, tape);
}

template <typename Dn, typename Scalar>
Image<Scalar> aligned_downsample_backward(Dn& dn, const Image<Scalar>& grad, const typename Dn::Tape& tape, Index hr_h,
                                          Index hr_w, bool accumulate, bool need_input) {
  const CycleAlignment al = alignment_of(dn);
  Image<Scalar> g = dn.backward(grad, tape, accumulate, need_input);
  if (!need_input) return {};
  return uncrop(g, hr_h, hr_w, al.hr_offset, al.hr_offset);
}

/// When `enabled`, the loss gradient scaled by `weight` is accumulated into
/// the parameter gradients of the networks involved.
struct Backprop {
  bool enabled = false;
  double weight = 1.0;
};

/// Target-branch cycle: x -> up -> dn, compared with the aligned part of x.
template <typename Up, typename Dn, typename Enc, typename Scalar>
Scalar cycle_forward(const Image<Scalar>& x, Up& up, Dn& dn, Enc& enc, const FeatureExtractor& phi,
                     const LossWeights& w, Backprop bp = {}) {
  typename Enc::Tape enc_t;
  typename Up::Tape up_t;
  typename Dn::Tape dn_t;
  const auto rep = enc.forward(x, &enc_t);
  const Image<Scalar> hr = up.forward(x, rep, &up_t);
  const Image<Scalar> back = aligned_downsample(dn, hr, &dn_t);
  const CycleAlignment al = alignment_of(dn);
  if (al.lr_margin + back.height > x.height || al.lr_margin + back.width > x.width)
    throw std::invalid_argument("cycle_forward: shape incompatibility after crop");
  const Image<Scalar> target = crop(x, al.lr_margin, al.lr_margin, back.height, back.width);
  Image<Scalar> g;
  const Scalar value = reconstruction_loss(back, target, phi, w, bp.enabled ? &g : nullptr);
  if (bp.enabled) {
    g.data *= Scalar(bp.weight);
    const Image<Scalar> ghr = aligned_downsample_backward(dn, g, dn_t, hr.height, hr.width, true, true);
    const auto gu = up.backward(ghr, up_t, true, false);
    enc.backward(gu.rep, enc_t, true, false);
  }
  return value;
}

/// Reference-branch cycle: y -> dn -> up (conditioned on enc(dn(y))), compared
/// with the aligned part of y.
template <typename Up, typename Dn, typename Enc, typename Scalar>
Scalar cycle_backward(const Image<Scalar>& y, Up& up, Dn& dn, Enc& enc, const FeatureExtractor& phi,
                      const LossWeights& w, Backprop bp = {}) {
  typename Enc::Tape enc_t;
  typename Up::Tape up_t;
  typename Dn::Tape dn_t;
  const Image<Scalar> lr = aligned_downsample(dn, y, &dn_t);
  const auto rep = enc.forward(lr, &enc_t);
  const Image<Scalar> rec = up.forward(lr, rep, &up_t);
  const CycleAlignment al = alignment_of(dn);
  const Index s = dn.scale();
  if (s * al.lr_margin + rec.height > y.height || s * al.lr_margin + rec.width > y.width)
    throw std::invalid_argument("cycle_backward: shape incompatibility after crop");
  const Image<Scalar> target = crop(y, s * al.lr_margin, s * al.lr_margin, rec.height, rec.width);
  Image<Scalar> g;
  const Scalar value = reconstruction_loss(rec, target, phi, w, bp.enabled ? &g : nullptr);
  if (bp.enabled) {
    g.data *= Scalar(bp.weight);
    const auto gu = up.backward(g, up_t, true, true);
    Image<Scalar> glr = gu.input;
    glr.data += enc.backward(gu.rep, enc_t, true, true).data;
    aligned_downsample_backward(dn, glr, dn_t, y.height, y.width, true, false);
  }
  return value;
}

inline double cycle_total(double fwd, double bwd, const LossWeights& w) {
  return w.lambda_cycle_target * fwd + w.lambda_cycle_ref * bwd;
}

/// Mean of (s - 1)^2 over a score map, with d/ds.
template <typename Scalar>
Scalar lsgan_real_term(const Matrix<Scalar>& s, Matrix<Scalar>* grad = nullptr) {
  const Scalar n = static_cast<Scalar>(s.size());
  if (grad) *grad = (s.array() - Scalar(1)) * (Scalar(2) / n);
  return (s.array() - Scalar(1)).square().sum() / n;
}

/// Mean of s^2 over a score map, with d/ds.
template <typename Scalar>
Scalar lsgan_fake_term(const Matrix<Scalar>& s, Matrix<Scalar>* grad = nullptr) {
  const Scalar n = static_cast<Scalar>(s.size());
  if (grad) *grad = s * (Scalar(2) / n);
  return s.array().square().sum() / n;
}

/// Generator adversarial loss mean (D(fake) - 1)^2. When `grad_fake` is given
/// it receives d loss / d fake; discriminator parameters are left untouched.
template <typename Disc, typename Scalar>
Scalar gen_adv_loss(Disc& d, const Image<Scalar>& fake, Image<Scalar>* grad_fake = nullptr) {
  typename Disc::Tape t;
  const Tensor<Scalar> s = d.forward(fake, &t);
  Matrix<Scalar> gs;
  const Scalar value = lsgan_real_term<Scalar>(s.plane(0), grad_fake ? &gs : nullptr);
  if (grad_fake) {
    Tensor<Scalar> g(1, s.height, s.width);
    g.plane(0) = gs;
    *grad_fake = d.backward(g, t, false, true);
  }
  return value;
}

/// Discriminator loss mean (D(real) - 1)^2 + mean D(fake)^2. With `bp`
/// enabled, accumulates discriminator parameter gradients.
template <typename Disc, typename Scalar>
Scalar disc_loss(Disc& d, const Image<Scalar>& real, const Image<Scalar>& fake, Backprop bp = {}) {
  typename Disc::Tape tr, tf;
  const Tensor<Scalar> sr = d.forward(real, &tr);
  const Tensor<Scalar> sf = d.forward(fake, &tf);
  Matrix<Scalar> gr, gf;
  const Scalar value = lsgan_real_term<Scalar>(sr.plane(0), bp.enabled ? &gr : nullptr) +
                       lsgan_fake_term<Scalar>(sf.plane(0), bp.enabled ? &gf : nullptr);
  if (bp.enabled) {
    Tensor<Scalar> g(1, sr.height, sr.width);
    g.plane(0) = gr * Scalar(bp.weight);
    d.backward(g, tr, true, false);
    Tensor<Scalar> h(1, sf.height, sf.width);
    h.plane(0) = gf * Scalar(bp.weight);
    d.backward(h, tf, true, false);
  }
  return value;
}

/// Mean absolute difference of two degradation codes, with d/da.
template <typename Scalar>
Scalar rep_l1(const Vector<Scalar>& a, const Vector<Scalar>& b, Vector<Scalar>* grad_a = nullptr) {
  const Vector<Scalar> d = a - b;
  const Scalar n = static_cast<Scalar>(d.size());
  if (grad_a)
    *grad_a = d.unaryExpr([n](Scalar v) { return (v > 0 ? Scalar(1) : (v < 0 ? Scalar(-1) : Scalar(0))) / n; });
  return d.cwiseAbs().sum() / n;
}

/// L1 distance between the codes of the target LR and a downsampled reference.
template <typename Enc, typename Scalar>
Scalar reg_loss(Enc& enc, const Image<Scalar>& x, const Image<Scalar>& dn_ref, Backprop bp = {}) {
  typename Enc::Tape ta, tb;
  const auto ra = enc.forward(x, &ta);
  const auto rb = enc.forward(dn_ref, &tb);
  Vector<Scalar> g;
  const Scalar value = rep_l1<Scalar>(ra, rb, bp.enabled ? &g : nullptr);
  if (bp.enabled) {
    g *= Scalar(bp.weight);
    enc.backward(g, ta, true, false);
    enc.backward(Vector<Scalar>(-g), tb, true, false);
  }
  return value;
}

struct LossComponents {
  double cycle_forward = 0.0;
  double cycle_backward = 0.0;
  double reg = 0.0;
  double gan = 0.0;
};

inline double total_loss(const LossComponents& c, const LossWeights& w) {
  return cycle_total(c.cycle_forward, c.cycle_backward, w) + w.lambda_reg * c.reg + w.lambda_gan * c.gan;
}

/// Sum of an already-combined cycle loss with the weighted remaining terms.
inline double total_loss(double cycle, double reg, double gan, const LossWeights& w) {
  return cycle + w.lambda_reg * reg + w.lambda_gan * gan;
}

}  // namespace rdsr

#endif  // RDSR_LOSSES_HPP
