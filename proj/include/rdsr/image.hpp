// Image and feature-map containers shared by every module.
#ifndef RDSR_IMAGE_HPP
#define RDSR_IMAGE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace rdsr {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using PlaneMap = Eigen::Map<Matrix<Scalar>>;

template <typename Scalar>
using ConstPlaneMap = Eigen::Map<const Matrix<Scalar>>;

/// Error categories surfaced by the toolkit. The CLI maps them to exit codes.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Planar C x H x W raster. `data` holds one row per channel, each row a
/// row-major H x W plane, so a channel can be viewed as a matrix without copying.
template <typename Scalar>
struct Tensor {
  Index channels = 0;
  Index height = 0;
  Index width = 0;
  Matrix<Scalar> data;

  Tensor() = default;
  Tensor(Index c, Index h, Index w) : channels(c), height(h), width(w), data(Matrix<Scalar>::Zero(c, h * w)) {}

  static Tensor constant(Index c, Index h, Index w, Scalar value) {
    Tensor t(c, h, w);
    t.data.setConstant(value);
    return t;
  }

  Index pixels() const { return height * width; }
  Index size() const { return channels * height * width; }
  bool same_shape(const Tensor& o) const { return channels == o.channels && height == o.height && width == o.width; }

  Scalar& operator()(Index c, Index y, Index x) { return data(c, y * width + x); }
  Scalar operator()(Index c, Index y, Index x) const { return data(c, y * width + x); }

  PlaneMap<Scalar> plane(Index c) { return PlaneMap<Scalar>(data.data() + c * pixels(), height, width); }
  ConstPlaneMap<Scalar> plane(Index c) const {
    return ConstPlaneMap<Scalar>(data.data() + c * pixels(), height, width);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out;
    out.channels = channels;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }
};

/// An RGB raster in [0,1]. Same storage as a feature tensor with three channels.
template <typename Scalar>
using Image = Tensor<Scalar>;

/// Single-channel luma plane.
template <typename Scalar>
using LumaPlane = Matrix<Scalar>;

template <typename Scalar>
void require_rgb(const Image<Scalar>& img, const char* what) {
  if (img.channels != 3) throw std::invalid_argument(std::string(what) + ": expected 3 channels");
}

template <typename Scalar>
Image<Scalar> clamp01(Image<Scalar> img) {
  img.data = img.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  return img;
}

/// Full-range BT.601 luma.
template <typename Scalar>
LumaPlane<Scalar> rgb_to_luma(const Image<Scalar>& img) {
  require_rgb(img, "rgb_to_luma");
  LumaPlane<Scalar> y = Scalar(0.299) * img.plane(0) + Scalar(0.587) * img.plane(1) + Scalar(0.114) * img.plane(2);
  return y;
}

template <typename Scalar>
Eigen::Matrix<double, 3, 1> mean_rgb(const Image<Scalar>& img) {
  require_rgb(img, "mean_rgb");
  Eigen::Matrix<double, 3, 1> m;
  for (Index c = 0; c < 3; ++c) m(c) = img.data.row(c).template cast<double>().mean();
  return m;
}

/// Copy of the region [y0, y0+h) x [x0, x0+w).
template <typename Scalar>
Tensor<Scalar> crop(const Tensor<Scalar>& t, Index y0, Index x0, Index h, Index w) {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > t.height || x0 + w > t.width)
    throw std::out_of_range("crop: region outside tensor");
  Tensor<Scalar> out(t.channels, h, w);
  for (Index c = 0; c < t.channels; ++c) out.plane(c) = t.plane(c).block(y0, x0, h, w);
  return out;
}

/// Adjoint of crop: embeds `g` into a zero tensor of the given extent.
template <typename Scalar>
Tensor<Scalar> uncrop(const Tensor<Scalar>& g, Index height, Index width, Index y0, Index x0) {
  Tensor<Scalar> out(g.channels, height, width);
  for (Index c = 0; c < g.channels; ++c) out.plane(c).block(y0, x0, g.height, g.width) = g.plane(c);
  return out;
}

struct PatchOrigin {
  Index y = 0;
  Index x = 0;
};

/// Uniform patch origin in [0, H-size] x [0, W-size].
template <typename Scalar, typename Rng>
PatchOrigin sample_patch_origin(const Tensor<Scalar>& img, Index size, Rng& rng) {
  if (size > img.height || size > img.width || size <= 0)
    throw std::invalid_argument("patch size " + std::to_string(size) + " exceeds image extent");
  std::uniform_int_distribution<Index> ys(0, img.height - size), xs(0, img.width - size);
  PatchOrigin o;
  o.y = ys(rng);
  o.x = xs(rng);
  return o;
}

template <typename Scalar, typename Rng>
std::vector<Image<Scalar>> extract_patches(const Image<Scalar>& img, Index size, int count, Rng& rng) {
  std::vector<Image<Scalar>> patches;
  patches.reserve(static_cast<size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const PatchOrigin o = sample_patch_origin(img, size, rng);
    patches.push_back(crop(img, o.y, o.x, size, size));
  }
  return patches;
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.data.allFinite();
}

// PNG I/O (8-bit RGB). Samples are stored as byte / 255 and quantized to the
// nearest byte on write.
Image<float> load_image(const std::string& path);
void save_image(const Image<float>& img, const std::string& path);

template <typename Scalar>
Image<Scalar> load_image_as(const std::string& path) {
  return load_image(path).template cast<Scalar>();
}

template <typename Scalar>
void save_image(const Image<Scalar>& img, const std::string& path)
  requires(!std::is_same_v<Scalar, float>)
{
  save_image(img.template cast<float>(), path);
}

}  // namespace rdsr

#endif  // RDSR_IMAGE_HPP
