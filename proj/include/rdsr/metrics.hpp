// Full-reference metrics on luma, a Catmull-Rom resizer, and a no-reference
// naturalness score built from MSCN coefficient statistics.
#ifndef RDSR_METRICS_HPP
#define RDSR_METRICS_HPP

#include <cmath>
#include <limits>

#include "rdsr/degradation.hpp"
#include "rdsr/image.hpp"

namespace rdsr {

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

template <typename Scalar>
double psnr_y(const Image<Scalar>& a, const Image<Scalar>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr_y: shape mismatch");
  const Eigen::MatrixXd d = (rgb_to_luma(a).template cast<double>() - rgb_to_luma(b).template cast<double>());
  const double mse = d.squaredNorm() / static_cast<double>(d.size());
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(1.0 / mse);
}

template <typename Scalar>
double psnr_rgb(const Image<Scalar>& a, const Image<Scalar>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr_rgb: shape mismatch");
  const double mse = (a.data.template cast<double>() - b.data.template cast<double>()).squaredNorm() /
                     static_cast<double>(a.data.size());
  return mse == 0.0 ? kPsnrInfinity : 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline Eigen::MatrixXd gaussian_window(int size, double sigma) {
  GaussianSpec spec;
  spec.sigma_major = spec.sigma_minor = sigma;
  spec.size = size;
  return make_anisotropic_gaussian<double>(spec).weights;
}

}  // namespace detail

/// Mean SSIM over all valid 11x11 Gaussian windows of the luma planes.
template <typename Scalar>
double ssim(const Image<Scalar>& a, const Image<Scalar>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.height < 11 || a.width < 11) throw std::invalid_argument("ssim: input smaller than 11x11");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Matrix<double> w = detail::gaussian_window(11, 1.5);
  const Matrix<double> x = rgb_to_luma(a).template cast<double>();
  const Matrix<double> y = rgb_to_luma(b).template cast<double>();
  const Matrix<double> mx = correlate_valid<double>(x, w), my = correlate_valid<double>(y, w);
  const Matrix<double> xx = correlate_valid<double>(Matrix<double>(x.cwiseProduct(x)), w);
  const Matrix<double> yy = correlate_valid<double>(Matrix<double>(y.cwiseProduct(y)), w);
  const Matrix<double> xy = correlate_valid<double>(Matrix<double>(x.cwiseProduct(y)), w);
  const auto vx = (xx.array() - mx.array().square());
  const auto vy = (yy.array() - my.array().square());
  const auto cov = (xy.array() - mx.array() * my.array());
  const Eigen::ArrayXXd num = (2.0 * mx.array() * my.array() + c1) * (2.0 * cov + c2);
  const Eigen::ArrayXXd den = (mx.array().square() + my.array().square() + c1) * (vx + vy + c2);
  return (num / den).mean();
}

/// Catmull-Rom cubic (a = -0.5).
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

/// Row-stochastic (n_out x n_in) interpolation matrix with reflect boundary.
/// Downscaling widens the kernel by 1/factor to anti-alias.
template <typename Scalar = double>
Matrix<Scalar> cubic_resize_matrix(Index n_in, Index n_out) {
  if (n_in <= 0 || n_out <= 0) throw std::invalid_argument("resize: degenerate size");
  const double f = static_cast<double>(n_out) / static_cast<double>(n_in);
  const double support_scale = f < 1.0 ? f : 1.0;
  const double support = 2.0 / support_scale;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_out, n_in);
  for (Index i = 0; i < n_out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) / f - 0.5;
    const Index lo = static_cast<Index>(std::floor(src - support)) + 1;
    const Index hi = static_cast<Index>(std::ceil(src + support)) - 1;
    for (Index j = lo; j <= hi; ++j) {
      const double wgt = support_scale * cubic_weight((src - static_cast<double>(j)) * support_scale);
      if (wgt != 0.0) m(i, reflect_index(j, n_in)) += wgt;
    }
    m.row(i) /= m.row(i).sum();
  }
  return m.cast<Scalar>();
}

/// (n_in * factor x n_in) cubic upsampling matrix whose output pixel u samples
/// input position u / factor, so input pixel i lands on output pixel i * factor.
template <typename Scalar = double>
Matrix<Scalar> aligned_upsample_matrix(Index n_in, Index factor) {
  if (n_in <= 0 || factor <= 0) throw std::invalid_argument("upsample: degenerate size");
  const Index n_out = n_in * factor;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_out, n_in);
  for (Index u = 0; u < n_out; ++u) {
    const double src = static_cast<double>(u) / static_cast<double>(factor);
    const Index base = static_cast<Index>(std::floor(src));
    for (Index j = base - 1; j <= base + 2; ++j) {
      const double wgt = cubic_weight(src - static_cast<double>(j));
      if (wgt != 0.0) m(u, reflect_index(j, n_in)) += wgt;
    }
    m.row(u) /= m.row(u).sum();
  }
  return m.cast<Scalar>();
}

template <typename Scalar>
Tensor<Scalar> resize_with(const Tensor<Scalar>& img, const Matrix<Scalar>& rows, const Matrix<Scalar>& cols) {
  Tensor<Scalar> out(img.channels, rows.rows(), cols.rows());
  for (Index c = 0; c < img.channels; ++c) out.plane(c).noalias() = rows * img.plane(c) * cols.transpose();
  return out;
}

template <typename Scalar>
Image<Scalar> bicubic_resize(const Image<Scalar>& img, Index out_h, Index out_w) {
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("bicubic_resize: degenerate output size");
  return resize_with(img, cubic_resize_matrix<Scalar>(img.height, out_h),
                     cubic_resize_matrix<Scalar>(img.width, out_w));
}

template <typename Scalar>
Image<Scalar> bicubic_resize(const Image<Scalar>& img, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("bicubic_resize: factor must be positive");
  return bicubic_resize(img, static_cast<Index>(std::lround(img.height * factor)),
                        static_cast<Index>(std::lround(img.width * factor)));
}

/// Mean-subtracted contrast-normalized statistics of one luma scale.
struct MscnStats {
  double variance = 0.0;
  double kurtosis = 0.0;
};

MscnStats mscn_stats(const Eigen::MatrixXd& luma);

/// Natural-image reference values for the two scales.
struct NaturalnessAnchors {
  MscnStats fine{0.10, 4.3};
  MscnStats coarse{0.17, 3.3};
};

/// Lower is more natural. Squared log-distance of MSCN variance and kurtosis
/// from the anchors at the full and half resolution.
double nr_quality(const Image<float>& img, const NaturalnessAnchors& anchors = {});

template <typename Scalar>
double nr_quality(const Image<Scalar>& img, const NaturalnessAnchors& anchors = {})
  requires(!std::is_same_v<Scalar, float>)
{
  return nr_quality(img.template cast<float>(), anchors);
}

struct MetricReport {
  double psnr_y = 0.0;
  double ssim = 0.0;
  double nr_score = 0.0;
  double psnr_rgb = 0.0;
};

template <typename Scalar>
MetricReport evaluate_pair(const Image<Scalar>& sr, const Image<Scalar>& gt) {
  MetricReport r;
  r.psnr_y = psnr_y(sr, gt);
  r.ssim = ssim(sr, gt);
  r.nr_score = nr_quality(sr);
  r.psnr_rgb = psnr_rgb(sr, gt);
  return r;
}

}  // namespace rdsr

#endif  // RDSR_METRICS_HPP
