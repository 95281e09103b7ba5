#include "rdsr/metrics.hpp"

namespace rdsr {

MscnStats mscn_stats(const Eigen::MatrixXd& luma) {
  constexpr double c = 1.0 / 255.0;
  const Matrix<double> w = detail::gaussian_window(7, 7.0 / 6.0);
  const Matrix<double> y = luma;
  const Matrix<double> mu = correlate_valid<double>(reflect_pad<double>(y, 3), w);
  const Matrix<double> sq = correlate_valid<double>(reflect_pad<double>(Matrix<double>(y.cwiseAbs2()), 3), w);
  const Eigen::ArrayXXd sigma = (sq.array() - mu.array().square()).abs().sqrt();
  const Eigen::ArrayXXd m = (y.array() - mu.array()) / (sigma + c);
  MscnStats s;
  const double m2 = m.square().mean();
  const double m4 = m.square().square().mean();
  s.variance = m2;
  s.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
  return s;
}

namespace {

double log_distance(const MscnStats& s, const MscnStats& anchor) {
  constexpr double floor = 1e-6;
  const double dv = std::log(std::max(s.variance, floor) / anchor.variance);
  const double dk = std::log(std::max(s.kurtosis, floor) / anchor.kurtosis);
  return dv * dv + dk * dk;
}

}  // namespace

double nr_quality(const Image<float>& img, const NaturalnessAnchors& anchors) {
  if (img.height < 32 || img.width < 32) throw std::invalid_argument("nr_quality: input smaller than 32x32");
  const Eigen::MatrixXd luma = rgb_to_luma(img).cast<double>();
  const Index h2 = luma.rows() / 2, w2 = luma.cols() / 2;
  Eigen::MatrixXd half(h2, w2);
  for (Index y = 0; y < h2; ++y)
    for (Index x = 0; x < w2; ++x)
      half(y, x) =
          0.25 * (luma(2 * y, 2 * x) + luma(2 * y + 1, 2 * x) + luma(2 * y, 2 * x + 1) + luma(2 * y + 1, 2 * x + 1));
  return log_distance(mscn_stats(luma), anchors.fine) + log_distance(mscn_stats(half), anchors.coarse);
}

}  // namespace rdsr
