// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/feature_io.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatlift {

/// 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
};

[[nodiscard]] std::vector<std::uint8_t> encode_png(const Image8 &image);
[[nodiscard]] Image8 decode_png(const std::vector<std::uint8_t> &bytes);
void write_png(const std::filesystem::path &path, const Image8 &image);
[[nodiscard]] Image8 read_png(const std::filesystem::path &path);

/// Binary (P5) or ASCII (P2) graymap, maxval <= 255.
void write_pgm(const std::filesystem::path &path, const Image8 &image);
[[nodiscard]] Image8 read_pgm(const std::filesystem::path &path);

/// Loads an 8-bit grayscale PNG or PGM as a single-channel map in [0, 1].
[[nodiscard]] FeatureMap read_mask(const std::filesystem::path &path);
/// Writes a single-channel map, clamped to [0, 1] and scaled to 0..255;
/// the format follows the extension (.png or .pgm).
void write_mask(const std::filesystem::path &path, const FeatureMap &mask);

/// Float image (1 or 3 channels, nominal range [0, 1]) to 8 bits, rounded and clamped.
[[nodiscard]] Image8 to_image8(const FeatureMap &map);
[[nodiscard]] Image8 to_image8(const std::vector<float> &values, int width, int height, int channels);

} // namespace splatlift
