// Deep linear downsampler: five single-channel valid convolutions (7, 5, 3, 1, 1)
// with no nonlinearity, so the whole stack collapses to one 13x13 kernel
// followed by a stride-s subsample.
#ifndef RDSR_DOWNSAMPLER_HPP
#define RDSR_DOWNSAMPLER_HPP

#include <array>

#include "rdsr/degradation.hpp"
#include "rdsr/nn.hpp"

namespace rdsr {

inline constexpr std::array<Index, 5> kDownsamplerLayerSizes{7, 5, 3, 1, 1};
inline constexpr Index kDownsamplerReceptiveField = 13;

struct PenaltyWeights {
  double sum_to_one = 0.5;
  double boundary = 0.5;
  double centroid = 1.0;
};

template <typename Scalar>
struct ExtractedKernel {
  Kernel<Scalar> normalized;
  Matrix<Scalar> raw;
  Scalar raw_sum = 0;
};

/// Number of valid-convolution outputs along one axis.
inline Index downsampled_extent(Index in, Index scale) {
  return in < kDownsamplerReceptiveField ? 0 : (in - kDownsamplerReceptiveField) / scale + 1;
}

/// Per-plane valid correlation with stride, and its adjoints.
template <typename Scalar>
struct StridedCorrelation {
  static Index extent(Index in, Index k, Index stride) { return (in - k) / stride + 1; }

  static Tensor<Scalar> forward(const Tensor<Scalar>& x, const Matrix<Scalar>& k, Index stride) {
    if (x.height < k.rows() || x.width < k.cols())
      throw std::invalid_argument("downsampler: image smaller than receptive field");
    Tensor<Scalar> y(x.channels, extent(x.height, k.rows(), stride), extent(x.width, k.cols(), stride));
    for (Index c = 0; c < x.channels; ++c) y.plane(c) = correlate_valid<Scalar>(x.plane(c), k, stride);
    return y;
  }

  /// Upsamples the strided gradient onto the dense correlation grid.
  static Matrix<Scalar> dense_grad(const Eigen::Ref<const Matrix<Scalar>>& g, Index fh, Index fw, Index stride) {
    if (stride == 1) return g;
    Matrix<Scalar> d = Matrix<Scalar>::Zero(fh, fw);
    for (Index i = 0; i < g.rows(); ++i)
      for (Index j = 0; j < g.cols(); ++j) d(i * stride, j * stride) = g(i, j);
    return d;
  }

  static Tensor<Scalar> backward(const Tensor<Scalar>& grad_out, const Tensor<Scalar>& x, const Matrix<Scalar>& k,
                                 Index stride, Matrix<Scalar>* grad_k, bool need_input_grad) {
    const Index fh = x.height - k.rows() + 1, fw = x.width - k.cols() + 1;
    Tensor<Scalar> gx;
    if (need_input_grad) gx = Tensor<Scalar>(x.channels, x.height, x.width);
    for (Index c = 0; c < x.channels; ++c) {
      const Matrix<Scalar> gf = dense_grad(grad_out.plane(c), fh, fw, stride);
      const auto xp = x.plane(c);
      for (Index a = 0; a < k.rows(); ++a)
        for (Index b = 0; b < k.cols(); ++b) {
          if (grad_k) (*grad_k)(a, b) += (xp.block(a, b, fh, fw).array() * gf.array()).sum();
          if (need_input_grad) gx.plane(c).block(a, b, fh, fw) += k(a, b) * gf;
        }
    }
    return gx;
  }
};

template <typename Scalar>
class LinearDownsampler {
 public:
  struct Tape {
    std::array<Tensor<Scalar>, 5> inputs;
  };

  LinearDownsampler() : LinearDownsampler(2) {}
  explicit LinearDownsampler(int scale) : scale_(scale) {
    for (size_t i = 0; i < layers.size(); ++i) {
      layers[i] = nn::Param<Scalar>(kDownsamplerLayerSizes[i], kDownsamplerLayerSizes[i]);
      const Index c = kDownsamplerLayerSizes[i] / 2;
      layers[i].value(c, c) = Scalar(1);
    }
  }

  /// Delta layers plus Gaussian perturbation; stride on the final layer.
  template <typename Rng>
  static LinearDownsampler init(int scale, Rng& rng, double perturbation_std = 0.05) {
    if (scale != 2 && scale != 4)
      throw std::invalid_argument("downsampler: unsupported scale " + std::to_string(scale));
    LinearDownsampler net(scale);
    std::normal_distribution<double> dist(0.0, perturbation_std);
    for (auto& layer : net.layers)
      for (Index i = 0; i < layer.value.size(); ++i) layer.value.data()[i] += static_cast<Scalar>(dist(rng));
    return net;
  }

  int scale() const { return scale_; }
  static constexpr size_t stride_layer_index() { return 4; }

  Tensor<Scalar> forward(const Tensor<Scalar>& img, Tape* tape = nullptr) const {
    if (img.height < kDownsamplerReceptiveField || img.width < kDownsamplerReceptiveField)
      throw std::invalid_argument("downsampler: image smaller than receptive field");
    Tensor<Scalar> h = img;
    for (size_t i = 0; i < layers.size(); ++i) {
      const Index stride = i == stride_layer_index() ? scale_ : 1;
      Tensor<Scalar> next = StridedCorrelation<Scalar>::forward(h, layers[i].value, stride);
      if (tape) tape->inputs[i] = std::move(h);
      h = std::move(next);
    }
    return h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out, const Tape& tape, bool accumulate_params = true,
                          bool need_input_grad = true) {
    Tensor<Scalar> g = grad_out;
    for (size_t i = layers.size(); i-- > 0;) {
      const Index stride = i == stride_layer_index() ? scale_ : 1;
      const bool want_input = need_input_grad || i > 0;
      g = StridedCorrelation<Scalar>::backward(g, tape.inputs[i], layers[i].value, stride,
                                               accumulate_params ? &layers[i].grad : nullptr, want_input);
    }
    return g;
  }

  nn::ParamList<Scalar> params() {
    nn::ParamList<Scalar> out;
    for (auto& l : layers) out.push_back(&l);
    return out;
  }

  std::array<nn::Param<Scalar>, 5> layers;

 private:
  int scale_ = 2;
};

template <typename Scalar, typename Rng>
LinearDownsampler<Scalar> init_downsampler(int scale, Rng& rng, double perturbation_std = 0.05) {
  return LinearDownsampler<Scalar>::init(scale, rng, perturbation_std);
}

template <typename Scalar>
Image<Scalar> apply_downsampler(const LinearDownsampler<Scalar>& net, const Image<Scalar>& img) {
  return net.forward(img);
}

/// Folds the layers with full convolution into the raw 13x13 kernel.
template <typename Scalar>
Matrix<Scalar> compose_layers(const LinearDownsampler<Scalar>& net) {
  Matrix<Scalar> k = net.layers[0].value;
  for (size_t i = 1; i < net.layers.size(); ++i) k = full_convolve(k, net.layers[i].value);
  return k;
}

template <typename Scalar>
ExtractedKernel<Scalar> extract_kernel(const LinearDownsampler<Scalar>& net) {
  ExtractedKernel<Scalar> out;
  out.raw = compose_layers(net);
  out.raw_sum = out.raw.sum();
  out.normalized = Kernel<Scalar>(out.raw / out.raw_sum);
  return out;
}

/// Fixed-kernel stand-in for the learned downsampler: one 13x13 correlation
/// and the same stride, no trainable parameters.
template <typename Scalar>
class FixedKernelDownsampler {
 public:
  struct Tape {
    Tensor<Scalar> input;
  };

  FixedKernelDownsampler(const Kernel<Scalar>& k, int scale)
      : kernel_(pad_kernel(k, kDownsamplerReceptiveField).weights), scale_(scale) {}

  int scale() const { return scale_; }

  Tensor<Scalar> forward(const Tensor<Scalar>& img, Tape* tape = nullptr) const {
    if (tape) tape->input = img;
    return StridedCorrelation<Scalar>::forward(img, kernel_, scale_);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& grad_out, const Tape& tape, bool = true, bool need_input_grad = true) {
    return StridedCorrelation<Scalar>::backward(grad_out, tape.input, kernel_, scale_, nullptr, need_input_grad);
  }

  nn::ParamList<Scalar> params() { return {}; }
  const Matrix<Scalar>& kernel() const { return kernel_; }

 private:
  Matrix<Scalar> kernel_;
  int scale_;
};

/// Mask rising from 0 to 1 over the two outermost rings of a square kernel.
inline Eigen::MatrixXd boundary_mask(Index size) {
  const Index c = size / 2;
  Eigen::MatrixXd m(size, size);
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const double ring = static_cast<double>(std::max(std::abs(y - c), std::abs(x - c)));
      m(y, x) = std::clamp((ring - static_cast<double>(c - 2)) / 2.0, 0.0, 1.0);
    }
  return m;
}

/// Structural penalty on a raw kernel, optionally returning d penalty / d kernel.
///   w_sum * (sum k - 1)^2 + w_boundary * sum |k| * mask + w_centroid * |centroid - center|^2
template <typename Scalar>
Scalar kernel_penalty_raw(const Matrix<Scalar>& k, const PenaltyWeights& w, Matrix<Scalar>* grad = nullptr) {
  const Index n = k.rows();
  const double c = static_cast<double>(n / 2);
  const Eigen::MatrixXd kd = k.template cast<double>();
  const Eigen::MatrixXd mask = boundary_mask(n);
  const double sum = kd.sum();
  double value = w.sum_to_one * (sum - 1.0) * (sum - 1.0) + w.boundary * (kd.cwiseAbs().cwiseProduct(mask)).sum();

  double cy = 0.0, cx = 0.0;
  const bool centroid_defined = std::abs(sum) > 1e-8;
  if (centroid_defined) {
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) {
        cy += kd(y, x) * static_cast<double>(y);
        cx += kd(y, x) * static_cast<double>(x);
      }
    cy = cy / sum - c;
    cx = cx / sum - c;
    value += w.centroid * (cy * cy + cx * cx);
  }

  if (grad) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Constant(n, n, 2.0 * w.sum_to_one * (sum - 1.0));
    g += w.boundary * kd.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }).cwiseProduct(mask);
    if (centroid_defined)
      for (Index y = 0; y < n; ++y)
        for (Index x = 0; x < n; ++x)
          g(y, x) += 2.0 * w.centroid *
                     (cy * (static_cast<double>(y) - c - cy) + cx * (static_cast<double>(x) - c - cx)) / sum;
    *grad = g.cast<Scalar>();
  }
  return static_cast<Scalar>(value);
}

/// Penalty on the extracted kernel; when `accumulate` is set, scaled gradients
/// are added into the layer gradients through the composition adjoint.
template <typename Scalar>
Scalar kernel_penalties(LinearDownsampler<Scalar>& net, const PenaltyWeights& w, bool accumulate = false,
                        Scalar scale = Scalar(1)) {
  const Matrix<Scalar> k = compose_layers(net);
  Matrix<Scalar> gk;
  const Scalar value = kernel_penalty_raw(k, w, accumulate ? &gk : nullptr);
  if (accumulate) {
    gk *= scale;
    for (size_t i = 0; i < net.layers.size(); ++i) {
      Matrix<Scalar> rest = Matrix<Scalar>::Ones(1, 1);
      for (size_t j = 0; j < net.layers.size(); ++j)
        if (j != i) rest = full_convolve(rest, net.layers[j].value);
      net.layers[i].grad += correlate_valid<Scalar>(gk, rest);
    }
  }
  return value;
}

template <typename Scalar>
Scalar kernel_penalties(const LinearDownsampler<Scalar>& net, const PenaltyWeights& w) {
  return kernel_penalty_raw(compose_layers(net), w);
}

}  // namespace rdsr

#endif  // RDSR_DOWNSAMPLER_HPP
