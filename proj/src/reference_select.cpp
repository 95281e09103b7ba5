#include "rdsr/reference_select.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "rdsr/degradation.hpp"

namespace rdsr {

namespace fs = std::filesystem;

double mean_distance(const Eigen::Vector3d& target, const Eigen::Vector3d& candidate) {
  const Eigen::Vector3d d = target - candidate;
  return d(0) * d(0) + d(1) * d(1) + d(2) * d(2);
}

void sort_candidates(std::vector<RefCandidate>& c) {
  std::sort(c.begin(), c.end(), [](const RefCandidate& a, const RefCandidate& b) {
    if (a.mse != b.mse) return a.mse < b.mse;
    return a.path < b.path;
  });
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read: " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    EVP_DigestUpdate(ctx.get(), buf, static_cast<size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

struct CacheEntry {
  std::string sha;
  Eigen::Vector3d mean;
};

std::map<std::string, CacheEntry> read_cache(const fs::path& p) {
  std::map<std::string, CacheEntry> cache;
  std::ifstream in(p);
  if (!in) return cache;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string path, sha, r, g, b;
    if (!std::getline(ss, path, ',') || !std::getline(ss, sha, ',') || !std::getline(ss, r, ',') ||
        !std::getline(ss, g, ',') || !std::getline(ss, b, ','))
      continue;
    try {
      cache[path] = CacheEntry{sha, Eigen::Vector3d(std::stod(r), std::stod(g), std::stod(b))};
    } catch (const std::logic_error&) {
    }
  }
  return cache;
}

}  // namespace

std::vector<RefCandidate> collection_means(const fs::path& collection, const std::optional<fs::path>& cache_csv) {
  std::map<std::string, CacheEntry> cache;
  if (cache_csv) cache = read_cache(*cache_csv);
  std::vector<RefCandidate> out;
  std::vector<std::pair<std::string, CacheEntry>> fresh;
  for (const auto& file : list_pngs(collection)) {
    RefCandidate c;
    c.path = file.string();
    std::string sha;
    if (cache_csv) {
      sha = sha256_file(file);
      const auto it = cache.find(c.path);
      if (it != cache.end() && it->second.sha == sha) {
        c.mean_rgb = it->second.mean;
        out.push_back(c);
        fresh.emplace_back(c.path, it->second);
        continue;
      }
    }
    try {
      c.mean_rgb = mean_rgb(load_image(c.path));
    } catch (const DataError& e) {
      std::cerr << "warning: skipping reference " << c.path << ": " << e.what() << '\n';
      continue;
    }
    out.push_back(c);
    if (cache_csv) fresh.emplace_back(c.path, CacheEntry{sha, c.mean_rgb});
  }
  if (cache_csv) {
    std::ofstream cf(*cache_csv);
    cf << "path,sha256,mean_r,mean_g,mean_b\n" << std::setprecision(17);
    for (const auto& [p, e] : fresh)
      cf << p << ',' << e.sha << ',' << e.mean(0) << ',' << e.mean(1) << ',' << e.mean(2) << '\n';
  }
  return out;
}

std::vector<RefCandidate> rank_references(const Eigen::Vector3d& target_mean, std::vector<RefCandidate> candidates) {
  if (candidates.empty()) throw DataError("reference collection is empty");
  for (auto& c : candidates) c.mse = mean_distance(target_mean, c.mean_rgb);
  sort_candidates(candidates);
  return candidates;
}

std::vector<RefCandidate> rank_references(const Image<float>& x_lr, const fs::path& collection,
                                          const std::optional<fs::path>& cache_csv) {
  return rank_references(mean_rgb(x_lr), collection_means(collection, cache_csv));
}

std::vector<std::string> select_references(const std::vector<RefCandidate>& ranking, int n, SelectionPolicy policy,
                                           std::mt19937_64& rng) {
  if (n < 0 || static_cast<size_t>(n) > ranking.size())
    throw UsageError("requested " + std::to_string(n) + " references from a collection of " +
                     std::to_string(ranking.size()));
  std::vector<std::string> paths;
  switch (policy) {
    case SelectionPolicy::Auto:
      for (int i = 0; i < n; ++i) paths.push_back(ranking[i].path);
      break;
    case SelectionPolicy::Reverse:
      for (int i = 0; i < n; ++i) paths.push_back(ranking[ranking.size() - 1 - i].path);
      break;
    case SelectionPolicy::Random: {
      std::vector<std::string> all;
      for (const auto& c : ranking) all.push_back(c.path);
      std::sort(all.begin(), all.end());
      for (int i = 0; i < n; ++i) {
        std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), all.size() - 1);
        std::swap(all[i], all[pick(rng)]);
        paths.push_back(all[i]);
      }
      break;
    }
  }
  return paths;
}

std::vector<std::string> select_references(const Image<float>& x_lr, const fs::path& collection, int n,
                                           SelectionPolicy policy, std::mt19937_64& rng) {
  return select_references(rank_references(x_lr, collection), n, policy, rng);
}

}  // namespace rdsr
