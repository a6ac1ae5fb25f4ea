#pragma once

// Generators for on-disk datasets in the exact MNIST (IDX) and UCI HAR
// layouts, so the loaders can be exercised without the real downloads.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <algorithm>
#include <vector>

#include "polyrnn/data.hpp"
#include "polyrnn/rng.hpp"

namespace fixture {

// train-images-idx3-ubyte, train-labels-idx1-ubyte, t10k-* in `dir`.
// Images are a bright square whose position encodes the label, plus noise.
inline void write_mnist(const std::filesystem::path& dir, std::size_t train, std::size_t test,
                        std::uint64_t seed, std::size_t rows = 28, std::size_t cols = 28) {
  std::filesystem::create_directories(dir);
  polyrnn::Rng rng(seed);
  auto emit = [&](const std::string& stem, std::size_t count) {
    std::vector<std::uint8_t> pixels(count * rows * cols, 0);
    std::vector<std::uint8_t> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto label = static_cast<std::uint8_t>(rng.below(10));
      labels[i] = label;
      std::uint8_t* img = pixels.data() + i * rows * cols;
      const std::size_t r0 = (label / 5) * rows / 2, c0 = (label % 5) * cols / 5;
      for (std::size_t r = r0; r < std::min(rows, r0 + rows / 4); ++r)
        for (std::size_t c = c0; c < std::min(cols, c0 + cols / 6 + 1); ++c) img[r * cols + c] = 255;
      for (std::size_t k = 0; k < rows; ++k) img[rng.below(rows * cols)] = static_cast<std::uint8_t>(rng.below(256));
    }
    polyrnn::write_idx_images(dir / (stem + "-images-idx3-ubyte"), rows, cols, pixels);
    polyrnn::write_idx_labels(dir / (stem + "-labels-idx1-ubyte"), labels);
  };
  emit("train", train);
  emit("t10k", test);
}

// `<dir>/{train,test}/Inertial Signals/<channel>_<split>.txt` and y_<split>.txt.
// Values are short decimals to keep the files small.
inline void write_har(const std::filesystem::path& dir, std::size_t train, std::size_t test,
                      std::uint64_t seed, std::size_t channels = polyrnn::kHarChannels,
                      std::size_t window = polyrnn::kHarWindow) {
  polyrnn::Rng rng(seed);
  auto emit = [&](const std::string& split, std::size_t count) {
    const auto signals = dir / split / "Inertial Signals";
    std::filesystem::create_directories(signals);
    std::vector<int> activity(count);
    std::string labels;
    for (std::size_t w = 0; w < count; ++w) {
      activity[w] = 1 + static_cast<int>(rng.below(6));
      labels += std::to_string(activity[w]) + "\n";
    }
    std::ofstream(dir / split / ("y_" + split + ".txt")) << labels;
    const auto names = polyrnn::har_channel_names();
    for (std::size_t c = 0; c < channels; ++c) {
      std::string text;
      text.reserve(count * window * 7);
      char buf[32];
      for (std::size_t w = 0; w < count; ++w) {
        // dynamic activities oscillate, static ones sit near a channel offset
        const double amp = activity[w] <= 3 ? 1.0 : 0.1;
        for (std::size_t t = 0; t < window; ++t) {
          const double v = 0.2 * static_cast<double>(c) + amp * std::sin(0.3 * static_cast<double>(t + c)) +
                           0.05 * rng.normal();
          std::snprintf(buf, sizeof buf, t ? " %.3f" : "%.3f", v);
          text += buf;
        }
        text += '\n';
      }
      const std::string stem = c < names.size() ? std::string(names[c]) : "extra_" + std::to_string(c);
      std::ofstream(signals / (stem + "_" + split + ".txt")) << text;
    }
  };
  emit("train", train);
  emit("test", test);
}

}  // namespace fixture
