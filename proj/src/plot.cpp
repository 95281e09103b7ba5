#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rdsr/cli.hpp"

namespace rdsr::cli {

namespace fs = std::filesystem;

namespace {

using Rgb = std::array<float, 3>;

void put(Image<float>& img, Index y, Index x, const Rgb& c) {
  if (y < 0 || x < 0 || y >= img.height || x >= img.width) return;
  for (Index ch = 0; ch < 3; ++ch) img(ch, y, x) = c[ch];
}

void line(Image<float>& img, double y0, double x0, double y1, double x1, const Rgb& c) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(y1 - y0), std::abs(x1 - x0)))) + 1;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put(img, std::lround(y0 + t * (y1 - y0)), std::lround(x0 + t * (x1 - x0)), c);
  }
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Image<float> plot_loss_trace(const fs::path& report_csv, int width, int height) {
  std::ifstream in(report_csv);
  if (!in) throw DataError("cannot open report: " + report_csv.string());
  std::string header;
  if (!std::getline(in, header)) throw DataError("empty report: " + report_csv.string());
  const auto cols = split_csv(header);
  const std::vector<std::string> wanted = {"total", "cycle_forward", "cycle_backward", "initial_loss"};
  const std::array<Rgb, 4> colors = {Rgb{0.1f, 0.1f, 0.1f}, Rgb{0.85f, 0.2f, 0.15f}, Rgb{0.15f, 0.35f, 0.85f},
                                     Rgb{0.2f, 0.65f, 0.25f}};
  std::vector<int> idx;
  for (const auto& w : wanted) {
    const auto it = std::find(cols.begin(), cols.end(), w);
    if (it == cols.end()) throw DataError("report lacks column " + w);
    idx.push_back(static_cast<int>(it - cols.begin()));
  }

  std::vector<std::vector<double>> series(wanted.size());
  std::string row;
  while (std::getline(in, row)) {
    const auto cells = split_csv(row);
    for (size_t s = 0; s < wanted.size(); ++s) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (static_cast<size_t>(idx[s]) < cells.size() && !cells[idx[s]].empty()) v = std::stod(cells[idx[s]]);
      series[s].push_back(v);
    }
  }

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (double v : s)
      if (std::isfinite(v) && v > 0) {
        lo = std::min(lo, std::log10(v));
        hi = std::max(hi, std::log10(v));
      }
  if (!std::isfinite(lo)) lo = -1, hi = 0;
  if (hi - lo < 1e-6) hi = lo + 1;

  Image<float> img = Image<float>::constant(3, height, width, 1.0f);
  const double left = 40, right = width - 10, top = 10, bottom = height - 30;
  const Rgb axis{0.0f, 0.0f, 0.0f};
  line(img, bottom, left, bottom, right, axis);
  line(img, top, left, bottom, left, axis);
  const size_t n = series.empty() ? 0 : series[0].size();
  const double xs = n > 1 ? (right - left) / static_cast<double>(n - 1) : 0.0;
  auto ypos = [&](double v) { return bottom - (std::log10(v) - lo) / (hi - lo) * (bottom - top); };
  for (size_t s = 0; s < series.size(); ++s) {
    bool have_prev = false;
    double py = 0, px = 0;
    for (size_t i = 0; i < n; ++i) {
      const double v = series[s][i];
      if (!std::isfinite(v) || v <= 0) {
        have_prev = false;
        continue;
      }
      const double y = ypos(v), x = left + xs * static_cast<double>(i);
      if (have_prev)
        line(img, py, px, y, x, colors[s]);
      else
        put(img, std::lround(y), std::lround(x), colors[s]);
      py = y, px = x, have_prev = true;
    }
    line(img, height - 15.0, left + 80.0 * s, height - 15.0, left + 80.0 * s + 12.0, colors[s]);
  }
  return img;
}

Image<float> plot_kernel(const Kernel<double>& k, int cell) {
  const double m = std::max(k.weights.cwiseAbs().maxCoeff(), 1e-12);
  const Index n = k.size();
  Image<float> img(3, n * cell, n * cell);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const float v = static_cast<float>(k.weights(i, j) / m);
      const Rgb c = v >= 0 ? Rgb{1.0f, 1.0f - v, 1.0f - v} : Rgb{1.0f + v, 1.0f + v, 1.0f};
      for (Index y = 0; y < cell; ++y)
        for (Index x = 0; x < cell; ++x) put(img, i * cell + y, j * cell + x, c);
    }
  return img;
}

int render_report_plots(const fs::path& report_dir, const fs::path& out_dir) {
  const fs::path csv = report_dir / "report.csv";
  if (!fs::exists(csv)) throw DataError("missing report: " + csv.string());
  fs::create_directories(out_dir / "kernels");
  save_image(plot_loss_trace(csv), (out_dir / "loss_trace.png").string());
  int count = 0;
  const fs::path kdir = report_dir / "kernels";
  if (fs::is_directory(kdir)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(kdir))
      if (e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const Kernel<double> k = read_kernel(f.string());
      save_image(plot_kernel(k), (out_dir / "kernels" / (f.stem().string() + ".png")).string());
      ++count;
    }
  }
  return count;
}

}  // namespace rdsr::cli
