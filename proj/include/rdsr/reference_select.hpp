// Content-irrelevant reference selection: rank an HR collection by the squared
// distance between per-channel RGB means and those of the target LR image.
#ifndef RDSR_REFERENCE_SELECT_HPP
#define RDSR_REFERENCE_SELECT_HPP

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rdsr/config.hpp"
#include "rdsr/image.hpp"

namespace rdsr {

struct RefCandidate {
  std::string path;
  Eigen::Vector3d mean_rgb = Eigen::Vector3d::Zero();
  double mse = 0.0;
};

double mean_distance(const Eigen::Vector3d& target, const Eigen::Vector3d& candidate);

/// Sorts ascending by mse, ties by path.
void sort_candidates(std::vector<RefCandidate>& c);

/// Channel means of every decodable PNG in `collection`. Undecodable files are
/// skipped with a warning on stderr. With `cache_csv`, means are reused for
/// files whose SHA-256 is unchanged and the cache is rewritten afterwards.
std::vector<RefCandidate> collection_means(const std::filesystem::path& collection,
                                           const std::optional<std::filesystem::path>& cache_csv = std::nullopt);

std::vector<RefCandidate> rank_references(const Eigen::Vector3d& target_mean, std::vector<RefCandidate> candidates);

std::vector<RefCandidate> rank_references(const Image<float>& x_lr, const std::filesystem::path& collection,
                                          const std::optional<std::filesystem::path>& cache_csv = std::nullopt);

std::vector<std::string> select_references(const std::vector<RefCandidate>& ranking, int n, SelectionPolicy policy,
                                           std::mt19937_64& rng);

std::vector<std::string> select_references(const Image<float>& x_lr, const std::filesystem::path& collection, int n,
                                           SelectionPolicy policy, std::mt19937_64& rng);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace rdsr

#endif  // RDSR_REFERENCE_SELECT_HPP
