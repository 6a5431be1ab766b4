// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/scene.hpp"
#include "splatlift/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace splatlift {

/// Numeric conventions of the reference 3DGS rasterizer. They fix the
/// fragment sets and blending weights used by rendering and uplifting alike.
struct RasterConfig {
    double alpha_max = 0.99;
    double alpha_min = 1.0 / 255.0;
    double transmittance_min = 1e-4;
    /// Added to the diagonal of every projected covariance (pixels^2).
    double cov2d_blur = 0.3;
    double near_plane = 0.2;
    /// Support radius in standard deviations; fragments outside the
    /// corresponding Mahalanobis ellipse are never blended.
    double extent_sigmas = 3.0;
    int tile_size = 16;
};

struct ProjectedGaussian {
    std::uint32_t gaussian_id = 0;
    Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    /// Inverse of cov2d.
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();
    double depth = 0.0;
    double opacity = 0.0;
    /// Screen-space bounding box of the support ellipse, inclusive pixel range.
    int x_min = 0, x_max = -1, y_min = 0, y_max = -1;
};

struct ProjectionStats {
    std::size_t culled_near = 0;
    std::size_t culled_frame = 0;
    std::size_t singular = 0;
};

/// Projects active Gaussians into `cam` (EWA affine approximation). Pixel
/// (x, y) is sampled at its center (x + 0.5, y + 0.5).
[[nodiscard]] std::vector<ProjectedGaussian> project(const GaussianScene &scene, const Camera &cam,
                                                     const RasterConfig &cfg = {}, ProjectionStats *stats = nullptr);

struct Fragment {
    std::uint32_t gaussian_id = 0;
    float alpha = 0.0f;
    double weight = 0.0;
};

/// Per-pixel front-to-back fragment lists in compressed row form:
/// the fragments of pixel p are fragments[offsets[p] .. offsets[p + 1]).
struct WeightFragmentBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint64_t> offsets;
    std::vector<Fragment> fragments;
    ProjectionStats stats;

    [[nodiscard]] std::size_t pixel_count() const
    {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    }
    [[nodiscard]] std::span<const Fragment> pixel(std::size_t p) const
    {
        return {fragments.data() + offsets[p], fragments.data() + offsets[p + 1]};
    }
};

[[nodiscard]] WeightFragmentBuffer rasterize_weights(const GaussianScene &scene, const Camera &cam,
                                                     const RasterConfig &cfg = {});

/// H x W x c image stored row-major with channels innermost.
struct RenderOutput {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> values;
    /// Accumulated opacity (sum of weights) per pixel.
    std::vector<float> alpha;
};

/// Applies the rendering operator W to per-Gaussian features
/// (n x c, rows indexed like scene.gaussians).
[[nodiscard]] RenderOutput render(const WeightFragmentBuffer &buffer, const FeatureMatrix &features);
[[nodiscard]] RenderOutput render(const GaussianScene &scene, const Camera &cam, const FeatureMatrix &features,
                                  const RasterConfig &cfg = {});

/// Renders SH colors for the camera's view directions, composited over `background`.
[[nodiscard]] RenderOutput render_rgb(const GaussianScene &scene, const Camera &cam,
                                      const Eigen::Vector3d &background = Eigen::Vector3d::Zero(),
                                      const RasterConfig &cfg = {});

/// Per-Gaussian SH colors evaluated for one camera (n x 3).
[[nodiscard]] FeatureMatrix view_colors(const GaussianScene &scene, const Camera &cam);

} // namespace splatlift
