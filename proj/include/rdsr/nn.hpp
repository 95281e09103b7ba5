// Minimal layers with hand-written backward passes. Every layer is a value
// type; forward() records what backward() needs in a caller-owned tape, so a
// layer can be applied several times within one objective.
#ifndef RDSR_NN_HPP
#define RDSR_NN_HPP

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "rdsr/image.hpp"

namespace rdsr::nn {

template <typename Scalar>
struct Param {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  Param(Index rows, Index cols) : value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}
  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParamList = std::vector<Param<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar, typename Rng>
void fill_normal(Matrix<Scalar>& m, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

inline Index conv_out_extent(Index in, Index k, Index stride, Index pad) { return (in + 2 * pad - k) / stride + 1; }

/// 2-D convolution (cross-correlation) with zero padding, lowered to GEMM.
template <typename Scalar>
class Conv2d {
 public:
  struct Tape {
    Matrix<Scalar> cols;
    Index in_h = 0, in_w = 0;
  };

  Conv2d() = default;
  Conv2d(Index in, Index out, Index k, Index stride, Index pad)
      : weight(out, in * k * k), bias(out, 1), in_(in), out_(out), k_(k), stride_(stride), pad_(pad) {}

  template <typename Rng>
  void init(Rng& rng, double gain = 1.0) {
    fill_normal(weight.value, gain * std::sqrt(2.0 / static_cast<double>(in_ * k_ * k_)), rng);
    bias.value.setZero();
  }

  Index in_channels() const { return in_; }
  Index out_channels() const { return out_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Tape* tape = nullptr) const {
    if (x.channels != in_) throw std::invalid_argument("Conv2d: channel mismatch");
    const Index oh = conv_out_extent(x.height, k_, stride_, pad_);
    const Index ow = conv_out_extent(x.width, k_, stride_, pad_);
    if (oh < 1 || ow < 1) throw std::invalid_argument("Conv2d: input too small");
    Matrix<Scalar> cols = im2col(x, oh, ow);
    Tensor<Scalar> y(out_, oh, ow);
    y.data.noalias() = weight.value * cols;
    y.data.colwise() += bias.value.col(0);
    if (tape) {
      tape->cols = std::move(cols);
      tape->in_h = x.height;
      tape->in_w = x.width;
    }
    return y;
  }

  /// Accumulates parameter gradients (when requested) and returns d loss / d input.
  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out, const Tape& tape, bool accumulate_params = true,
                          bool need_input_grad = true) {
    if (accumulate_params) {
      weight.grad.noalias() += grad_out.data * tape.cols.transpose();
      bias.grad.col(0) += grad_out.data.rowwise().sum();
    }
    if (!need_input_grad) return {};
    const Matrix<Scalar> dcols = weight.value.transpose() * grad_out.data;
    return col2im(dcols, tape.in_h, tape.in_w, grad_out.height, grad_out.width);
  }

  ParamList<Scalar> params() { return {&weight, &bias}; }

  Param<Scalar> weight;
  Param<Scalar> bias;

 private:
  Matrix<Scalar> im2col(const Tensor<Scalar>& x, Index oh, Index ow) const {
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(in_ * k_ * k_, oh * ow);
    for (Index c = 0; c < in_; ++c) {
      const auto plane = x.plane(c);
      for (Index ky = 0; ky < k_; ++ky)
        for (Index kx = 0; kx < k_; ++kx) {
          Scalar* row = cols.row((c * k_ + ky) * k_ + kx).data();
          for (Index oy = 0; oy < oh; ++oy) {
            const Index iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= x.height) continue;
            for (Index ox = 0; ox < ow; ++ox) {
              const Index ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < x.width) row[oy * ow + ox] = plane(iy, ix);
            }
          }
        }
    }
    return cols;
  }

  Tensor<Scalar> col2im(const Matrix<Scalar>& cols, Index h, Index w, Index oh, Index ow) const {
    Tensor<Scalar> g(in_, h, w);
    for (Index c = 0; c < in_; ++c) {
      auto plane = g.plane(c);
      for (Index ky = 0; ky < k_; ++ky)
        for (Index kx = 0; kx < k_; ++kx) {
          const Scalar* row = cols.row((c * k_ + ky) * k_ + kx).data();
          for (Index oy = 0; oy < oh; ++oy) {
            const Index iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= h) continue;
            for (Index ox = 0; ox < ow; ++ox) {
              const Index ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < w) plane(iy, ix) += row[oy * ow + ox];
            }
          }
        }
    }
    return g;
  }

  Index in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
};

/// Dense layer on column vectors.
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out) : weight(out, in), bias(out, 1), in_(in) {}

  template <typename Rng>
  void init(Rng& rng, double gain = 1.0) {
    fill_normal(weight.value, gain * std::sqrt(1.0 / static_cast<double>(in_)), rng);
    bias.value.setZero();
  }

  Vector<Scalar> forward(const Vector<Scalar>& x) const {
    if (x.size() != in_) throw std::invalid_argument("Linear: input length mismatch");
    return weight.value * x + bias.value.col(0);
  }

  Vector<Scalar> backward(const Vector<Scalar>& grad_out, const Vector<Scalar>& input, bool accumulate_params = true) {
    if (accumulate_params) {
      weight.grad.noalias() += grad_out * input.transpose();
      bias.grad.col(0) += grad_out;
    }
    return weight.value.transpose() * grad_out;
  }

  ParamList<Scalar> params() { return {&weight, &bias}; }

  Param<Scalar> weight;
  Param<Scalar> bias;

 private:
  Index in_ = 0;
};

/// x * sigmoid(x): smooth, ReLU-like.
template <typename Derived>
auto silu(const Eigen::MatrixBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return z.unaryExpr([](S v) { return v / (S(1) + std::exp(-v)); });
}

template <typename Scalar, typename DerivedG, typename DerivedZ>
Matrix<Scalar> silu_backward(const Eigen::MatrixBase<DerivedG>& grad, const Eigen::MatrixBase<DerivedZ>& z) {
  Matrix<Scalar> d = z.unaryExpr([](Scalar v) {
    const Scalar sg = Scalar(1) / (Scalar(1) + std::exp(-v));
    return sg * (Scalar(1) + v * (Scalar(1) - sg));
  });
  return grad.cwiseProduct(d);
}

template <typename Scalar>
Tensor<Scalar> silu(const Tensor<Scalar>& z) {
  Tensor<Scalar> out(z.channels, z.height, z.width);
  out.data = silu(z.data);
  return out;
}

template <typename Scalar>
Tensor<Scalar> silu_backward(const Tensor<Scalar>& grad, const Tensor<Scalar>& z) {
  Tensor<Scalar> out(z.channels, z.height, z.width);
  out.data = silu_backward<Scalar>(grad.data, z.data);
  return out;
}

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment accumulators for one parameter group.
template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m, v;
  long step = 0;

  void reset(const ParamList<Scalar>& params) {
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
    step = 0;
  }
};

template <typename Scalar>
void adam_step(const ParamList<Scalar>& params, AdamState<Scalar>& st, const AdamHyper& h) {
  if (st.m.size() != params.size()) st.reset(params);
  ++st.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
  const Scalar b1 = Scalar(h.beta1), b2 = Scalar(h.beta2);
  const Scalar step_size = Scalar(h.lr / bc1);
  const Scalar inv_sqrt_bc2 = Scalar(1.0 / std::sqrt(bc2));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    st.m[i] = b1 * st.m[i] + (Scalar(1) - b1) * p.grad;
    st.v[i] = b2 * st.v[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
    p.value.array() -= step_size * st.m[i].array() / ((st.v[i].array().sqrt() * inv_sqrt_bc2) + Scalar(h.eps));
  }
}

/// Flat copy of all parameter values, for snapshots and comparisons.
template <typename Scalar>
Vector<Scalar> flatten(const ParamList<Scalar>& params) {
  Index n = 0;
  for (auto* p : params) n += p->value.size();
  Vector<Scalar> out(n);
  Index off = 0;
  for (auto* p : params) {
    out.segment(off, p->value.size()) = Eigen::Map<const Vector<Scalar>>(p->value.data(), p->value.size());
    off += p->value.size();
  }
  return out;
}

}  // namespace rdsr::nn

#endif  // RDSR_NN_HPP
