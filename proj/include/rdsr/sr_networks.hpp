// Degradation encoder, conditional upscaler and patch discriminator.
#ifndef RDSR_SR_NETWORKS_HPP
#define RDSR_SR_NETWORKS_HPP

#include <array>

#include "rdsr/metrics.hpp"
#include "rdsr/nn.hpp"

namespace rdsr {

inline constexpr Index kRepDim = 16;

template <typename Scalar>
using DegradationRep = Vector<Scalar>;

/// Conv features, global average pooling and a linear head to a length-16 code.
template <typename Scalar>
class DegradationEncoder {
 public:
  static constexpr Index kMinExtent = 16;

  struct Tape {
    typename nn::Conv2d<Scalar>::Tape t1, t2, t3;
    Tensor<Scalar> z1, z2, z3;
    Vector<Scalar> pooled;
  };

  explicit DegradationEncoder(Index width = 32, Index rep_dim = kRepDim)
      : conv1(3, width, 3, 1, 1), conv2(width, width, 3, 2, 1), conv3(width, width, 3, 1, 1), head(width, rep_dim) {}

  template <typename Rng>
  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    conv3.init(rng);
    head.init(rng);
  }

  Index rep_dim() const { return head.weight.value.rows(); }

  DegradationRep<Scalar> forward(const Image<Scalar>& x, Tape* tape = nullptr) const {
    if (x.height < kMinExtent || x.width < kMinExtent) throw std::invalid_argument("encoder: input smaller than 16x16");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.z1 = conv1.forward(x, &t.t1);
    t.z2 = conv2.forward(nn::silu(t.z1), &t.t2);
    t.z3 = conv3.forward(nn::silu(t.z2), &t.t3);
    t.pooled = nn::silu(t.z3.data).rowwise().mean();
    return head.forward(t.pooled);
  }

  Image<Scalar> backward(const DegradationRep<Scalar>& grad_rep, const Tape& t, bool accumulate_params = true,
                         bool need_input_grad = true) {
    const Vector<Scalar> gp = head.backward(grad_rep, t.pooled, accumulate_params);
    Tensor<Scalar> g(t.z3.channels, t.z3.height, t.z3.width);
    g.data = (gp / static_cast<Scalar>(t.z3.pixels())).replicate(1, t.z3.pixels());
    g = conv3.backward(nn::silu_backward(g, t.z3), t.t3, accumulate_params);
    g = conv2.backward(nn::silu_backward(g, t.z2), t.t2, accumulate_params);
    return conv1.backward(nn::silu_backward(g, t.z1), t.t1, accumulate_params, need_input_grad);
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> p;
    for (auto* l : {&conv1, &conv2, &conv3})
      for (auto* q : l->params()) p.push_back(q);
    for (auto* q : head.params()) p.push_back(q);
    return p;
  }

  nn::Conv2d<Scalar> conv1, conv2, conv3;
  nn::Linear<Scalar> head;
};

/// Rearranges (3 s^2, h, w) into (3, h s, w s).
template <typename Scalar>
Tensor<Scalar> pixel_shuffle(const Tensor<Scalar>& t, Index s) {
  const Index c_out = t.channels / (s * s);
  Tensor<Scalar> out(c_out, t.height * s, t.width * s);
  for (Index c = 0; c < c_out; ++c)
    for (Index i = 0; i < s; ++i)
      for (Index j = 0; j < s; ++j) {
        const auto src = t.plane(c * s * s + i * s + j);
        for (Index y = 0; y < t.height; ++y)
          for (Index x = 0; x < t.width; ++x) out(c, y * s + i, x * s + j) = src(y, x);
      }
  return out;
}

template <typename Scalar>
Tensor<Scalar> pixel_unshuffle(const Tensor<Scalar>& g, Index s) {
  Tensor<Scalar> out(g.channels * s * s, g.height / s, g.width / s);
  for (Index c = 0; c < g.channels; ++c)
    for (Index i = 0; i < s; ++i)
      for (Index j = 0; j < s; ++j) {
        auto dst = out.plane(c * s * s + i * s + j);
        for (Index y = 0; y < out.height; ++y)
          for (Index x = 0; x < out.width; ++x) dst(y, x) = g(c, y * s + i, x * s + j);
      }
  return out;
}

/// Conditional upscaler. Eight 3x3 conv layers arranged as four residual
/// blocks; every conv output is modulated per channel by (1 + gamma, beta)
/// predicted from the degradation code. A sub-pixel head adds a residual on
/// top of a Catmull-Rom upsampling of the input.
template <typename Scalar>
class Upscaler {
 public:
  static constexpr int kBodyLayers = 8;

  struct Tape {
    Index in_h = 0, in_w = 0;
    Matrix<Scalar> up_rows, up_cols;
    typename nn::Conv2d<Scalar>::Tape head_t, tail_t;
    Tensor<Scalar> head_z;
    std::array<typename nn::Conv2d<Scalar>::Tape, kBodyLayers> body_t;
    std::array<Tensor<Scalar>, kBodyLayers> body_z;
    std::array<Tensor<Scalar>, kBodyLayers> body_u;
    Vector<Scalar> rep, m1, a1, mod;
  };

  Upscaler(int scale = 2, Index width = 32, Index rep_dim = kRepDim)
      : head(3, width, 3, 1, 1),
        tail(width, 3 * scale * scale, 3, 1, 1),
        map1(rep_dim, 64),
        map2(64, 2 * kBodyLayers * width),
        scale_(scale),
        width_(width) {
    for (auto& b : body) b = nn::Conv2d<Scalar>(width, width, 3, 1, 1);
  }

  template <typename Rng>
  void init(Rng& rng) {
    head.init(rng);
    for (size_t i = 0; i < body.size(); ++i) body[i].init(rng, i % 2 == 1 ? 0.5 : 1.0);
    tail.init(rng, 0.1);
    map1.init(rng);
    map2.init(rng, 0.1);
  }

  int scale() const { return scale_; }
  Index width() const { return width_; }
  Index rep_dim() const { return map1.weight.value.cols(); }

  Image<Scalar> forward(const Image<Scalar>& x, const DegradationRep<Scalar>& rep, Tape* tape = nullptr) const {
    if (rep.size() != rep_dim()) throw std::invalid_argument("upscaler: degradation code length mismatch");
    require_rgb(x, "upscale");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.in_h = x.height;
    t.in_w = x.width;
    t.rep = rep;
    t.m1 = map1.forward(rep);
    t.a1 = nn::silu(t.m1);
    t.mod = map2.forward(t.a1);

    t.head_z = head.forward(x, &t.head_t);
    Tensor<Scalar> f = nn::silu(t.head_z);
    for (int b = 0; b < kBodyLayers / 2; ++b) {
      const int l1 = 2 * b, l2 = 2 * b + 1;
      t.body_z[l1] = body[l1].forward(f, &t.body_t[l1]);
      t.body_u[l1] = modulate(t.body_z[l1], t.mod, l1);
      t.body_z[l2] = body[l2].forward(nn::silu(t.body_u[l1]), &t.body_t[l2]);
      f.data += modulate(t.body_z[l2], t.mod, l2).data;
    }
    Image<Scalar> out = pixel_shuffle(tail.forward(f, &t.tail_t), scale_);
    t.up_rows = aligned_upsample_matrix<Scalar>(x.height, scale_);
    t.up_cols = aligned_upsample_matrix<Scalar>(x.width, scale_);
    out.data += resize_with(x, t.up_rows, t.up_cols).data;
    return out;
  }

  struct Grads {
    Image<Scalar> input;
    DegradationRep<Scalar> rep;
  };

  Grads backward(const Image<Scalar>& grad_out, const Tape& t, bool accumulate_params = true,
                 bool need_input_grad = true) {
    Grads g;
    Vector<Scalar> gmod = Vector<Scalar>::Zero(t.mod.size());
    Tensor<Scalar> gf = tail.backward(pixel_unshuffle(grad_out, scale_), t.tail_t, accumulate_params);
    for (int b = kBodyLayers / 2 - 1; b >= 0; --b) {
      const int l1 = 2 * b, l2 = 2 * b + 1;
      Tensor<Scalar> gz2 = modulate_backward(gf, t.body_z[l2], t.mod, l2, gmod);
      Tensor<Scalar> gh1 = body[l2].backward(gz2, t.body_t[l2], accumulate_params);
      Tensor<Scalar> gz1 = modulate_backward(nn::silu_backward(gh1, t.body_u[l1]), t.body_z[l1], t.mod, l1, gmod);
      gf.data += body[l1].backward(gz1, t.body_t[l1], accumulate_params).data;
    }
    Tensor<Scalar> gx = head.backward(nn::silu_backward(gf, t.head_z), t.head_t, accumulate_params, need_input_grad);
    if (need_input_grad) {
      for (Index c = 0; c < gx.channels; ++c)
        gx.plane(c).noalias() += t.up_rows.transpose() * grad_out.plane(c) * t.up_cols;
      g.input = std::move(gx);
    }
    const Vector<Scalar> ga1 = map2.backward(gmod, t.a1, accumulate_params);
    const Vector<Scalar> gm1 = nn::silu_backward<Scalar>(ga1, t.m1);
    g.rep = map1.backward(gm1, t.rep, accumulate_params);
    return g;
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> p;
    auto add = [&p](nn::ParamList<Scalar> q) { p.insert(p.end(), q.begin(), q.end()); };
    add(head.params());
    for (auto& b : body) add(b.params());
    add(tail.params());
    add(map1.params());
    add(map2.params());
    return p;
  }

  nn::Conv2d<Scalar> head, tail;
  std::array<nn::Conv2d<Scalar>, kBodyLayers> body;
  nn::Linear<Scalar> map1, map2;

 private:
  auto gamma(const Vector<Scalar>& mod, int layer) const { return mod.segment(2 * layer * width_, width_); }
  auto beta(const Vector<Scalar>& mod, int layer) const { return mod.segment(2 * layer * width_ + width_, width_); }

  Tensor<Scalar> modulate(const Tensor<Scalar>& z, const Vector<Scalar>& mod, int layer) const {
    Tensor<Scalar> u(z.channels, z.height, z.width);
    const Vector<Scalar> scale = Vector<Scalar>::Ones(width_) + gamma(mod, layer);
    u.data = z.data.array().colwise() * scale.array();
    u.data.colwise() += beta(mod, layer);
    return u;
  }

  Tensor<Scalar> modulate_backward(const Tensor<Scalar>& gu, const Tensor<Scalar>& z, const Vector<Scalar>& mod,
                                   int layer, Vector<Scalar>& gmod) const {
    gmod.segment(2 * layer * width_, width_) += gu.data.cwiseProduct(z.data).rowwise().sum();
    gmod.segment(2 * layer * width_ + width_, width_) += gu.data.rowwise().sum();
    Tensor<Scalar> gz(z.channels, z.height, z.width);
    const Vector<Scalar> scale = Vector<Scalar>::Ones(width_) + gamma(mod, layer);
    gz.data = gu.data.array().colwise() * scale.array();
    return gz;
  }

  int scale_ = 2;
  Index width_ = 32;
};

/// Four stride-2 4x4 convolutions (3 -> 32 -> 64 -> 64 -> 1): a 1/16-resolution
/// score map without output squashing.
template <typename Scalar>
class Discriminator {
 public:
  static constexpr Index kMinExtent = 32;

  struct Tape {
    std::array<typename nn::Conv2d<Scalar>::Tape, 4> t;
    std::array<Tensor<Scalar>, 3> z;
  };

  Discriminator()
      : convs{nn::Conv2d<Scalar>(3, 32, 4, 2, 1), nn::Conv2d<Scalar>(32, 64, 4, 2, 1),
              nn::Conv2d<Scalar>(64, 64, 4, 2, 1), nn::Conv2d<Scalar>(64, 1, 4, 2, 1)} {}

  /// Weight std 1/sqrt(3 fan_in): small initial scores and input gradients.
  template <typename Rng>
  void init(Rng& rng) {
    for (auto& c : convs) c.init(rng, 1.0 / std::sqrt(6.0));
  }

  Matrix<Scalar> score_map(const Tensor<Scalar>& s) const { return s.plane(0); }

  Tensor<Scalar> forward(const Image<Scalar>& img, Tape* tape = nullptr) const {
    if (img.height < kMinExtent || img.width < kMinExtent)
      throw std::invalid_argument("discriminator: input smaller than 32x32");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.z[0] = convs[0].forward(img, &t.t[0]);
    t.z[1] = convs[1].forward(nn::silu(t.z[0]), &t.t[1]);
    t.z[2] = convs[2].forward(nn::silu(t.z[1]), &t.t[2]);
    return convs[3].forward(nn::silu(t.z[2]), &t.t[3]);
  }

  Image<Scalar> backward(const Tensor<Scalar>& grad_score, const Tape& t, bool accumulate_params = true,
                         bool need_input_grad = true) {
    Tensor<Scalar> g = convs[3].backward(grad_score, t.t[3], accumulate_params);
    g = convs[2].backward(nn::silu_backward(g, t.z[2]), t.t[2], accumulate_params);
    g = convs[1].backward(nn::silu_backward(g, t.z[1]), t.t[1], accumulate_params);
    return convs[0].backward(nn::silu_backward(g, t.z[0]), t.t[0], accumulate_params, need_input_grad);
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> p;
    for (auto& c : convs)
      for (auto* q : c.params()) p.push_back(q);
    return p;
  }

  std::array<nn::Conv2d<Scalar>, 4> convs;
};

template <typename Scalar>
DegradationRep<Scalar> encode_degradation(const DegradationEncoder<Scalar>& enc, const Image<Scalar>& lr) {
  return enc.forward(lr);
}

template <typename Scalar>
Image<Scalar> upscale(const Upscaler<Scalar>& up, const Image<Scalar>& lr, const DegradationRep<Scalar>& rep) {
  return up.forward(lr, rep);
}

template <typename Scalar>
Matrix<Scalar> discriminate(const Discriminator<Scalar>& d, const Image<Scalar>& img) {
  return d.forward(img).plane(0);
}

/// The pretrained pair used as the frozen starting point of every run.
template <typename Scalar>
struct Baseline {
  DegradationEncoder<Scalar> encoder;
  Upscaler<Scalar> upscaler;

  explicit Baseline(int scale = 2, Index width = 32) : encoder(width), upscaler(scale, width) {}

  template <typename Rng>
  void init(Rng& rng) {
    encoder.init(rng);
    upscaler.init(rng);
  }

  int scale() const { return upscaler.scale(); }

  Image<Scalar> super_resolve(const Image<Scalar>& lr) const { return upscaler.forward(lr, encoder.forward(lr)); }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> p = encoder.params();
    for (auto* q : upscaler.params()) p.push_back(q);
    return p;
  }
};

}  // namespace rdsr

#endif  // RDSR_SR_NETWORKS_HPP
