// Blur-kernel synthesis and the HR -> LR degradation model
//   I_LR = subsample_s(I_HR (*) k) + n
// used to build desk-scale experiments.
#ifndef RDSR_DEGRADATION_HPP
#define RDSR_DEGRADATION_HPP

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "rdsr/image.hpp"

namespace rdsr {

/// Normalized 2-D blur kernel with an odd side length.
template <typename Scalar>
struct Kernel {
  Matrix<Scalar> weights;

  Kernel() = default;
  explicit Kernel(Matrix<Scalar> w) : weights(std::move(w)) {}

  Index size() const { return weights.rows(); }
  Index center() const { return weights.rows() / 2; }
  Scalar sum() const { return weights.sum(); }

  static Kernel delta(Index size) {
    Matrix<Scalar> w = Matrix<Scalar>::Zero(size, size);
    w(size / 2, size / 2) = Scalar(1);
    return Kernel(std::move(w));
  }

  template <typename Other>
  Kernel<Other> cast() const {
    return Kernel<Other>(weights.template cast<Other>());
  }
};

template <typename Scalar>
bool is_valid_kernel(const Kernel<Scalar>& k, double tol = 1e-6) {
  return k.weights.rows() == k.weights.cols() && k.weights.rows() % 2 == 1 && k.weights.allFinite() &&
         std::abs(static_cast<double>(k.weights.sum()) - 1.0) <= tol;
}

struct GaussianSpec {
  double sigma_major = 1.0;
  double sigma_minor = 1.0;
  double theta = 0.0;
  int size = 11;
};

/// Rotated bivariate Gaussian sampled at integer offsets from the center tap,
/// normalized to unit sum.
template <typename Scalar = double>
Kernel<Scalar> make_anisotropic_gaussian(const GaussianSpec& spec) {
  if (!(spec.sigma_minor > 0.0) || !(spec.sigma_major > 0.0))
    throw std::invalid_argument("gaussian kernel: sigmas must be positive");
  if (spec.sigma_major < spec.sigma_minor)
    throw std::invalid_argument("gaussian kernel: sigma_major must be >= sigma_minor");
  if (spec.size <= 0 || spec.size % 2 == 0) throw std::invalid_argument("gaussian kernel: size must be odd");

  const double c = std::cos(spec.theta), s = std::sin(spec.theta);
  const double a2 = spec.sigma_major * spec.sigma_major, b2 = spec.sigma_minor * spec.sigma_minor;
  // Inverse covariance of R diag(a2, b2) R^T.
  const double ixx = c * c / a2 + s * s / b2;
  const double iyy = s * s / a2 + c * c / b2;
  const double ixy = c * s * (1.0 / a2 - 1.0 / b2);
  const int r = spec.size / 2;
  Eigen::MatrixXd w(spec.size, spec.size);
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) w(y + r, x + r) = std::exp(-0.5 * (ixx * x * x + 2.0 * ixy * x * y + iyy * y * y));
  w /= w.sum();
  return Kernel<Scalar>(w.cast<Scalar>());
}

/// Valid-region cross-correlation of one plane with a kernel:
///   out(i, j) = sum_{a,b} k(a, b) * in(i*stride + a, j*stride + b).
template <typename Scalar, typename Derived>
Matrix<Scalar> correlate_valid(const Eigen::MatrixBase<Derived>& in, const Matrix<Scalar>& k, Index stride = 1) {
  const Index kh = k.rows(), kw = k.cols();
  if (in.rows() < kh || in.cols() < kw) throw std::invalid_argument("correlate_valid: input smaller than kernel");
  const Index fh = in.rows() - kh + 1, fw = in.cols() - kw + 1;
  Matrix<Scalar> full = Matrix<Scalar>::Zero(fh, fw);
  for (Index a = 0; a < kh; ++a)
    for (Index b = 0; b < kw; ++b)
      if (k(a, b) != Scalar(0)) full.noalias() += k(a, b) * in.block(a, b, fh, fw);
  if (stride == 1) return full;
  const Index oh = (fh - 1) / stride + 1, ow = (fw - 1) / stride + 1;
  Matrix<Scalar> out(oh, ow);
  for (Index i = 0; i < oh; ++i)
    for (Index j = 0; j < ow; ++j) out(i, j) = full(i * stride, j * stride);
  return out;
}

/// Reflect (mirror without edge repeat) index into [0, n).
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

template <typename Scalar, typename Derived>
Matrix<Scalar> reflect_pad(const Eigen::MatrixBase<Derived>& in, Index pad) {
  const Index h = in.rows(), w = in.cols();
  Matrix<Scalar> out(h + 2 * pad, w + 2 * pad);
  for (Index y = 0; y < h + 2 * pad; ++y) {
    const Index sy = reflect_index(y - pad, h);
    for (Index x = 0; x < w + 2 * pad; ++x) out(y, x) = in(sy, reflect_index(x - pad, w));
  }
  return out;
}

/// Same-size filtering with reflect boundary (cross-correlation, kernel center aligned).
template <typename Scalar>
Image<Scalar> filter_reflect(const Image<Scalar>& img, const Kernel<Scalar>& k) {
  Image<Scalar> out(img.channels, img.height, img.width);
  const Index pad = k.center();
  for (Index c = 0; c < img.channels; ++c)
    out.plane(c) = correlate_valid<Scalar>(reflect_pad<Scalar>(img.plane(c), pad), k.weights);
  return out;
}

struct DegradationConfig {
  int scale = 2;
  double noise_sigma = 0.0;
  Kernel<double> kernel = Kernel<double>::delta(1);
};

/// Blur with reflect padding, keep every `scale`-th sample starting at phase 0,
/// add Gaussian noise, clamp to [0,1].
template <typename Scalar, typename Rng>
Image<Scalar> degrade(const Image<Scalar>& hr, const DegradationConfig& cfg, Rng& rng) {
  require_rgb(hr, "degrade");
  const Index s = cfg.scale;
  if (s < 1) throw std::invalid_argument("degrade: scale must be positive");
  if (hr.height % s != 0 || hr.width % s != 0)
    throw std::invalid_argument("degrade: image dimensions not divisible by scale");
  const Kernel<Scalar> k = cfg.kernel.template cast<Scalar>();
  const Image<Scalar> blurred = filter_reflect(hr, k);
  Image<Scalar> lr(3, hr.height / s, hr.width / s);
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < lr.height; ++y)
      for (Index x = 0; x < lr.width; ++x) lr(c, y, x) = blurred(c, y * s, x * s);
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (Index i = 0; i < lr.data.size(); ++i) lr.data.data()[i] += static_cast<Scalar>(noise(rng));
  }
  return clamp01(std::move(lr));
}

/// Full 2-D convolution of two weight matrices.
template <typename Scalar>
Matrix<Scalar> full_convolve(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  Matrix<Scalar> out = Matrix<Scalar>::Zero(a.rows() + b.rows() - 1, a.cols() + b.cols() - 1);
  for (Index y = 0; y < b.rows(); ++y)
    for (Index x = 0; x < b.cols(); ++x) out.block(y, x, a.rows(), a.cols()) += b(y, x) * a;
  return out;
}

template <typename Scalar>
Kernel<Scalar> compose_kernels(const Kernel<Scalar>& a, const Kernel<Scalar>& b) {
  return Kernel<Scalar>(full_convolve(a.weights, b.weights));
}

/// Zero-pads an odd kernel symmetrically to `size` x `size`.
template <typename Scalar>
Kernel<Scalar> pad_kernel(const Kernel<Scalar>& k, Index size) {
  if (size < k.size() || (size - k.size()) % 2 != 0) throw std::invalid_argument("pad_kernel: bad target size");
  const Index off = (size - k.size()) / 2;
  Matrix<Scalar> w = Matrix<Scalar>::Zero(size, size);
  w.block(off, off, k.size(), k.size()) = k.weights;
  return Kernel<Scalar>(std::move(w));
}

// Kernel text format: a header line "size N" followed by N rows of N
// whitespace-separated decimals.
void write_kernel(const Kernel<double>& k, const std::string& path);
Kernel<double> read_kernel(const std::string& path);

/// Parameter ranges sampled when synthesizing a dataset.
struct DegradationRanges {
  int scale = 2;
  double sigma_min = 0.6;
  double sigma_max = 2.5;
  bool isotropic = false;
  double noise_sigma = 0.0;
  int kernel_size = 11;
};

struct ManifestRow {
  std::string path_lr;
  std::string path_hr;
  int scale = 2;
  double sigma_major = 0.0;
  double sigma_minor = 0.0;
  double theta = 0.0;
  std::string kernel_path;
  std::uint64_t seed = 0;
};

using Manifest = std::vector<ManifestRow>;

GaussianSpec sample_gaussian_spec(const DegradationRanges& ranges, std::mt19937_64& rng);

/// Degrades the first `n_images` PNGs (sorted by name) of `hr_dir` and writes
/// lr/, hr/, kernels/ and manifest.csv under `out_dir`.
Manifest synthesize_dataset(const std::filesystem::path& hr_dir, int n_images, const DegradationRanges& ranges,
                            std::uint64_t seed, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
/// Relative paths in the manifest are resolved against the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

}  // namespace rdsr

#endif  // RDSR_DEGRADATION_HPP
