// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace splatlift {

/// Dense H x W x c feature map, channels innermost.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;
    std::string camera_id;
    std::map<std::string, std::string> meta;

    FeatureMap() = default;
    FeatureMap(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill)
    {
    }

    [[nodiscard]] std::size_t pixel_count() const
    {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    }
    [[nodiscard]] float &at(int y, int x, int ch = 0)
    {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    [[nodiscard]] float at(int y, int x, int ch = 0) const
    {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    [[nodiscard]] std::span<const float> pixel(std::size_t p) const
    {
        return {data.data() + p * channels, static_cast<std::size_t>(channels)};
    }
    [[nodiscard]] std::span<float> pixel(std::size_t p)
    {
        return {data.data() + p * channels, static_cast<std::size_t>(channels)};
    }
};

// ---------------------------------------------------------------------------
// SPLF container: magic "SPLF" | version u32 | rank u32 | dims u64[rank] |
// dtype u8 (0 = f32) | payload, all little-endian, row-major.

inline constexpr std::uint32_t kSplfVersion = 1;

struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<float> data;
};

/// JSON sidecar next to a container: same stem, ".json" extension.
[[nodiscard]] std::filesystem::path sidecar_path(const std::filesystem::path &path);

[[nodiscard]] std::size_t splf_header_size(std::size_t rank);
void write_tensor(const std::filesystem::path &path, const Tensor &tensor);
[[nodiscard]] Tensor read_tensor(const std::filesystem::path &path);

/// Writes a rank-3 container plus a JSON sidecar (same stem, ".json")
/// holding camera_id and meta.
void write_feature_map(const std::filesystem::path &path, const FeatureMap &map);
/// Reads a rank-3 (H x W x c) or rank-2 (H x W, c = 1) container. camera_id
/// comes from the sidecar when present, otherwise from the file stem.
[[nodiscard]] FeatureMap read_feature_map(const std::filesystem::path &path);

void write_gaussian_features(const std::filesystem::path &path, const GaussianFeatures &features);
[[nodiscard]] GaussianFeatures read_gaussian_features(const std::filesystem::path &path);

/// Reads every *.splf feature map in a directory, sorted by file name.
[[nodiscard]] std::vector<FeatureMap> read_feature_dir(const std::filesystem::path &dir);

/// Bilinear resampling with half-pixel centers and edge clamping.
[[nodiscard]] FeatureMap resize_bilinear(const FeatureMap &map, int height, int width);

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
    Eigen::VectorXd mean;
    /// c x out_dim, orthonormal columns sorted by decreasing variance.
    Eigen::MatrixXd projection;
    /// N x out_dim projected (centered) samples.
    Eigen::MatrixXd projected;
    Eigen::VectorXd explained_variance;
};

struct PcaOptions {
    /// Fit on a uniform random subsample when there are more samples.
    std::size_t max_fit_samples = 2'000'000;
    std::uint64_t seed = 0;
};

/// Principal components of the rows of `samples` (N x c). Each projection
/// column is sign-fixed so that its largest-magnitude entry is positive.
[[nodiscard]] PcaResult pca_reduce(const Eigen::MatrixXd &samples, int out_dim, const PcaOptions &opts = {});

/// First three principal components of the rows, each min-max scaled to
/// [0, 1] for display. Missing components (fewer than 3 channels) are zero.
[[nodiscard]] Eigen::MatrixXd pca_rgb(const Eigen::MatrixXd &features, const PcaOptions &opts = {});

/// Projects every pixel of `map` with a fitted PCA.
[[nodiscard]] FeatureMap pca_apply(const FeatureMap &map, const PcaResult &pca);

// ---------------------------------------------------------------------------
// Patch grids

struct PixelRect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
};

/// Patch embeddings of one crop: rows x cols patches of patch_size pixels.
struct PatchGrid {
    int rows = 0;
    int cols = 0;
    int channels = 0;
    std::vector<float> patches;
    PixelRect crop;
    int patch_size = 0;
    std::string camera_id;

    void validate() const;
};

/// Patch grid as SPLF (rows x cols x c) with a sidecar
/// {camera_id, crop_rect: [x, y, w, h], patch_size}.
void write_patch_grid(const std::filesystem::path &path, const PatchGrid &grid);
[[nodiscard]] PatchGrid read_patch_grid(const std::filesystem::path &path);

struct AggregateResult {
    FeatureMap map;
    /// Number of crops covering each pixel.
    std::vector<std::uint16_t> coverage;
    std::size_t uncovered = 0;
};

/// Upsamples each grid bilinearly onto its crop and averages overlapping
/// crops uniformly. Uncovered pixels are zero and counted in `uncovered`.
[[nodiscard]] AggregateResult sliding_window_aggregate(std::span<const PatchGrid> grids, int height, int width);

} // namespace splatlift
