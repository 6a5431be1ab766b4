// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/feature_io.hpp"
#include "splatlift/rasterizer.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/types.hpp"

#include <span>
#include <vector>

namespace splatlift {

/// A training view paired with its 2D feature map. Maps whose dims differ
/// from the camera are bilinearly resized before accumulation.
struct ViewFeatures {
    const Camera *camera = nullptr;
    const FeatureMap *features = nullptr;
};

struct UpliftOptions {
    RasterConfig raster;
};

/// Unnormalized transpose-rendering sums: numerator = W^T F, beta = W^T 1,
/// count = number of (view, pixel) pairs in which each Gaussian is blended.
struct UpliftAccumulator {
    FeatureMatrix numerator;
    std::vector<double> beta;
    std::vector<double> count;
};

[[nodiscard]] UpliftAccumulator accumulate_transpose(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                                     const UpliftOptions &opts = {});

struct UpliftResult {
    GaussianFeatures features;
    /// Summed blending weight per Gaussian (importance).
    std::vector<double> beta;
    /// Gaussians never blended in any view; their features are zero.
    std::vector<std::uint32_t> unseen;
};

/// f_i = sum_{d,p} w_i(d,p) F_{d,p} / beta_i.
[[nodiscard]] UpliftResult uplift(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                  const UpliftOptions &opts = {});

/// Same numerator, normalized by fragment counts instead of summed weights.
[[nodiscard]] GaussianFeatures uplift_count_normalized(const GaussianScene &scene,
                                                       std::span<const ViewFeatures> frames,
                                                       const UpliftOptions &opts = {});

/// Keeps the ceil(keep_fraction * n_active) active Gaussians with the largest
/// beta (ties by index ascending).
[[nodiscard]] GaussianScene prune_by_importance(const GaussianScene &scene, std::span<const double> beta,
                                                double keep_fraction = 0.5);

/// 0.5 * sum over frames and pixels of |F - W f|^2.
[[nodiscard]] double reconstruction_loss(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                         const FeatureMatrix &f, const UpliftOptions &opts = {});

struct RefineResult {
    GaussianFeatures features;
    /// loss[0] at f0, loss[t] after step t.
    std::vector<double> loss;
};

/// Preconditioned gradient descent f <- f - step_size * D^-1 W^T (W f - F).
/// Rows with beta = 0 are left untouched.
[[nodiscard]] RefineResult refine_by_gradient(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                              const FeatureMatrix &f0, int steps, double step_size,
                                              const UpliftOptions &opts = {});

/// Uplifts a single-channel mask from one view and renders it into another.
[[nodiscard]] FeatureMap reproject_mask(const GaussianScene &scene, const Camera &ref_cam, const FeatureMap &ref_mask,
                                        const Camera &target_cam, const UpliftOptions &opts = {});

/// RenderOutput -> FeatureMap with the given camera id.
[[nodiscard]] FeatureMap to_feature_map(const RenderOutput &out, const std::string &camera_id = {});

} // namespace splatlift
