// Procedural HR test scenes: smooth shading, fractal texture and antialiased
// geometric shapes. Used as stand-in content for desk-scale experiments.
#ifndef RDSR_SCENES_HPP
#define RDSR_SCENES_HPP

#include <cstdint>
#include <filesystem>

#include "rdsr/image.hpp"

namespace rdsr {

Image<float> generate_scene(Index height, Index width, std::uint64_t seed);

/// Writes `count` scenes as scene_XXXX.png into `dir`.
void write_scenes(const std::filesystem::path& dir, int count, Index height, Index width, std::uint64_t seed);

}  // namespace rdsr

#endif  // RDSR_SCENES_HPP
