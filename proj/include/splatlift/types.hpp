// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace splatlift {

/// Row-major n x c matrix; row i holds the feature of Gaussian i.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-Gaussian features. Rows are indexed by the scene's Gaussian index;
/// inactive Gaussians carry zero rows.
struct GaussianFeatures {
    FeatureMatrix values;
    std::vector<std::string> channel_names;

    [[nodiscard]] Eigen::Index count() const { return values.rows(); }
    [[nodiscard]] Eigen::Index channels() const { return values.cols(); }
};

struct PixelCoord {
    int x = 0;
    int y = 0;

    friend bool operator==(const PixelCoord &, const PixelCoord &) = default;
};

} // namespace splatlift
