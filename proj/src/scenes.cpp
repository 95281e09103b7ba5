#include "rdsr/scenes.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "rdsr/metrics.hpp"

namespace rdsr {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Eigen::Vector3d random_color(Rng& rng) {
  return {uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95)};
}

/// Sum of bicubically interpolated random grids with 1/f amplitude falloff.
Eigen::MatrixXd fractal_noise(Index h, Index w, Rng& rng) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(h, w);
  std::normal_distribution<double> n01(0.0, 1.0);
  double amp = 1.0;
  for (Index cells = 3; cells <= std::max(h, w) / 2; cells *= 2, amp *= 0.55) {
    Image<double> grid(1, cells, cells);
    for (Index i = 0; i < grid.data.size(); ++i) grid.data.data()[i] = n01(rng);
    const Image<double> up = bicubic_resize(grid, h, w);
    acc += amp * Eigen::MatrixXd(up.plane(0));
  }
  return acc / std::max(acc.cwiseAbs().maxCoeff(), 1e-9);
}

double smoothstep_edge(double signed_dist) {
  // Coverage of a pixel by a half-plane at the given signed distance.
  return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

}  // namespace

Image<float> generate_scene(Index height, Index width, std::uint64_t seed) {
  Rng rng(seed);
  Image<double> img(3, height, width);

  // Background: linear gradient between two colors plus colored fractal texture.
  const Eigen::Vector3d c0 = random_color(rng), c1 = random_color(rng);
  const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(ang), gy = std::sin(ang);
  const Eigen::MatrixXd tex = fractal_noise(height, width, rng);
  const Eigen::Vector3d tint = random_color(rng) - Eigen::Vector3d::Constant(0.5);
  const double tex_amp = uniform(rng, 0.08, 0.25);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) {
      const double t =
          0.5 + 0.5 * ((x - width / 2.0) * gx + (y - height / 2.0) * gy) / (0.5 * std::hypot(height, width));
      for (Index c = 0; c < 3; ++c) img(c, y, x) = (1 - t) * c0(c) + t * c1(c) + tex_amp * tex(y, x) * (0.7 + tint(c));
    }

  // Shapes: ellipses, rotated rectangles and striped discs.
  const int n_shapes = std::uniform_int_distribution<int>(6, 14)(rng);
  for (int s = 0; s < n_shapes; ++s) {
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng);
    const double cx = uniform(rng, 0, width), cy = uniform(rng, 0, height);
    const double ra = uniform(rng, 0.04, 0.25) * width, rb = uniform(rng, 0.04, 0.25) * height;
    const double rot = uniform(rng, 0, std::numbers::pi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    const Eigen::Vector3d col = random_color(rng), col2 = random_color(rng);
    const double period = uniform(rng, 3.0, 9.0);
    const Eigen::MatrixXd shade = fractal_noise(height, width, rng);
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = cr * dx + sr * dy, v = -sr * dx + cr * dy;
        double dist;
        if (kind == 1) {
          dist = std::max(std::abs(u) - ra, std::abs(v) - rb);
        } else {
          const double r = std::hypot(u / ra, v / rb);
          dist = (r - 1.0) * std::min(ra, rb);
        }
        const double cov = smoothstep_edge(dist);
        if (cov <= 0.0) continue;
        Eigen::Vector3d fill = col + 0.08 * shade(y, x) * Eigen::Vector3d::Ones();
        if (kind == 2) {
          const double stripe = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * u / period);
          fill = stripe * col + (1.0 - stripe) * col2;
        }
        for (Index c = 0; c < 3; ++c) img(c, y, x) = (1 - cov) * img(c, y, x) + cov * fill(c);
      }
  }
  return clamp01(img).cast<float>();
}

void write_scenes(const std::filesystem::path& dir, int count, Index height, Index width, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i << ".png";
    save_image(generate_scene(height, width, seed * 1000003ULL + static_cast<std::uint64_t>(i)),
               (dir / name.str()).string());
  }
}

}  // namespace rdsr
