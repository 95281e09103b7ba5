#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rdsr/degradation.hpp"

namespace rdsr {

namespace fs = std::filesystem;

void write_kernel(const Kernel<double>& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write kernel: " + path);
  out << "size " << k.size() << '\n' << std::setprecision(17);
  for (Index y = 0; y < k.size(); ++y) {
    for (Index x = 0; x < k.size(); ++x) out << (x ? " " : "") << k.weights(y, x);
    out << '\n';
  }
  if (!out) throw DataError("failed writing kernel: " + path);
}

Kernel<double> read_kernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open kernel: " + path);
  std::string tag;
  Index n = 0;
  if (!(in >> tag >> n) || tag != "size" || n <= 0 || n % 2 == 0) throw DataError("bad kernel header: " + path);
  Matrix<double> w(n, n);
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n; ++x)
      if (!(in >> w(y, x))) throw DataError("truncated kernel file: " + path);
  return Kernel<double>(std::move(w));
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

GaussianSpec sample_gaussian_spec(const DegradationRanges& ranges, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> sig(ranges.sigma_min, ranges.sigma_max);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);
  GaussianSpec spec;
  spec.size = ranges.kernel_size;
  double a = sig(rng), b = sig(rng);
  const double theta = ang(rng);
  if (ranges.isotropic) b = a;
  spec.sigma_major = std::max(a, b);
  spec.sigma_minor = std::min(a, b);
  spec.theta = ranges.isotropic ? 0.0 : theta;
  return spec;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string numbered(int i, const char* ext) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << i << ext;
  return os.str();
}

}  // namespace

Manifest synthesize_dataset(const fs::path& hr_dir, int n_images, const DegradationRanges& ranges, std::uint64_t seed,
                            const fs::path& out_dir) {
  if (n_images < 0) throw UsageError("n_images must be non-negative");
  if (ranges.scale < 1) throw UsageError("scale must be positive");
  const auto files = list_pngs(hr_dir);
  if (static_cast<int>(files.size()) < n_images)
    throw DataError("hr_dir holds " + std::to_string(files.size()) + " PNGs, need " + std::to_string(n_images));

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create output directory: " + out_dir.string());

  Manifest manifest;
  if (n_images > 0) {
    for (const char* sub : {"lr", "hr", "kernels"}) {
      fs::create_directories(out_dir / sub, ec);
      if (ec) throw DataError("cannot create " + (out_dir / sub).string());
    }
  }
  for (int i = 0; i < n_images; ++i) {
    ManifestRow row;
    row.seed = splitmix(seed ^ splitmix(static_cast<std::uint64_t>(i)));
    std::mt19937_64 rng(row.seed);
    const GaussianSpec spec = sample_gaussian_spec(ranges, rng);

    Image<float> hr = load_image(files[i].string());
    const Index s = ranges.scale;
    hr = crop(hr, 0, 0, hr.height - hr.height % s, hr.width - hr.width % s);

    DegradationConfig cfg;
    cfg.scale = ranges.scale;
    cfg.noise_sigma = ranges.noise_sigma;
    cfg.kernel = make_anisotropic_gaussian<double>(spec);
    const Image<float> lr = degrade(hr, cfg, rng);

    row.path_lr = "lr/" + numbered(i, ".png");
    row.path_hr = "hr/" + numbered(i, ".png");
    row.kernel_path = "kernels/" + numbered(i, ".txt");
    row.scale = ranges.scale;
    row.sigma_major = spec.sigma_major;
    row.sigma_minor = spec.sigma_minor;
    row.theta = spec.theta;
    save_image(lr, (out_dir / row.path_lr).string());
    save_image(hr, (out_dir / row.path_hr).string());
    write_kernel(cfg.kernel, (out_dir / row.kernel_path).string());
    manifest.push_back(std::move(row));
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << "path_lr,path_hr,scale,sigma_major,sigma_minor,theta,kernel_path,seed\n" << std::setprecision(17);
  for (const auto& r : m)
    out << r.path_lr << ',' << r.path_hr << ',' << r.scale << ',' << r.sigma_major << ',' << r.sigma_minor << ','
        << r.theta << ',' << r.kernel_path << ',' << r.seed << '\n';
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
  std::string line;
  std::getline(in, line);
  if (line.rfind("path_lr,", 0) != 0) throw DataError("bad manifest header: " + path.string());
  Manifest m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw DataError("bad manifest row: " + line);
    ManifestRow r;
    try {
      r.path_lr = resolve(f[0]);
      r.path_hr = resolve(f[1]);
      r.scale = std::stoi(f[2]);
      r.sigma_major = std::stod(f[3]);
      r.sigma_minor = std::stod(f[4]);
      r.theta = std::stod(f[5]);
      r.kernel_path = resolve(f[6]);
      r.seed = std::stoull(f[7]);
    } catch (const std::logic_error&) {
      throw DataError("bad manifest row: " + line);
    }
    m.push_back(std::move(r));
  }
  return m;
}

}  // namespace rdsr
