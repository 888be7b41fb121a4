#pragma once

// Small labelled scenes for training tests: blocky class layouts, each
// class painted with its own colour plus noise.

#include <cstdint>
#include <random>
#include <vector>

#include "ikshana/dataio.hpp"

namespace synthetic {

inline std::vector<ikshana::Sample> scenes(int count, int h, int w, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<std::vector<float>> colour(static_cast<std::size_t>(classes));
  for (auto& c : colour) c = {unit(rng) * 4 - 2, unit(rng) * 4 - 2, unit(rng) * 4 - 2};
  std::vector<ikshana::Sample> out;
  for (int s = 0; s < count; ++s) {
    const int block = 8;
    const int bh = (h + block - 1) / block;
    const int bw = (w + block - 1) / block;
    std::vector<int> blocks(static_cast<std::size_t>(bh * bw));
    for (auto& b : blocks) b = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
    ikshana::Sample sample;
    sample.target = ikshana::ClassIndexMap::zeros(1, h, w);
    std::vector<float> pixels(static_cast<std::size_t>(3 * h * w));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int cls = blocks[static_cast<std::size_t>((y / block) * bw + x / block)];
        sample.target.values[static_cast<std::size_t>(y * w + x)] = cls;
        for (int c = 0; c < 3; ++c) {
          pixels[static_cast<std::size_t>((c * h + y) * w + x)] =
              colour[static_cast<std::size_t>(cls)][static_cast<std::size_t>(c)] + 0.2f * (unit(rng) - 0.5f);
        }
      }
    }
    sample.image = ikshana::Tensor::from_data({1, 3, h, w}, std::move(pixels));
    out.push_back(std::move(sample));
  }
  return out;
}

}  // namespace synthetic
