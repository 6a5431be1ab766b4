// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/feature_io.hpp"
#include "splatlift/rasterizer.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/uplift.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splatlift {

/// Two Gaussian clusters separated along the world x axis, viewed by
/// cameras on a ring in the y-z plane (so neither cluster occludes the other).
struct SyntheticSpec {
    int gaussians_per_cluster = 500;
    double cluster_radius = 0.6;
    /// Distance between the two cluster centers.
    double cluster_separation = 2.0;
    double scale_min = 0.05;
    double scale_max = 0.12;
    double opacity_min = 0.5;
    double opacity_max = 0.9;
    int feature_dim = 8;
    /// Standard deviation of per-pixel, per-channel feature noise.
    double noise = 0.1;
    int views = 12;
    int width = 64;
    int height = 64;
    double ring_radius = 4.0;
    double focal = 48.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SyntheticScene {
    GaussianScene scene;
    /// 1 for Gaussians of cluster A (the first cluster).
    std::vector<std::uint8_t> labels;
    Eigen::VectorXd feature_a;
    Eigen::VectorXd feature_b;
    Eigen::VectorXd feature_background;
    /// Per-camera 2D features: the cluster vector of single-cluster pixels,
    /// the dominant cluster on mixed pixels, the background elsewhere, plus noise.
    std::vector<FeatureMap> features;
    /// Per-camera ground truth for cluster A: summed A weight > 0.5.
    std::vector<FeatureMap> gt_masks;
};

[[nodiscard]] SyntheticScene make_two_cluster_scene(const SyntheticSpec &spec);

/// Pairs scene cameras with feature maps for uplifting.
[[nodiscard]] std::vector<ViewFeatures> view_features(const GaussianScene &scene, const std::vector<FeatureMap> &maps);

/// Cross-shaped scribble through the centroid of a binary mask, restricted
/// to pixels at least `margin` pixels inside it.
[[nodiscard]] FeatureMap scribble_from_mask(const FeatureMap &mask, int margin = 2);

/// Three Gaussians, two 4x4 cameras and a 2-channel feature map per camera.
struct OracleFixture {
    GaussianScene scene;
    std::vector<FeatureMap> features;
};
[[nodiscard]] OracleFixture make_oracle_3g();

/// Small random scene for oracle comparisons: up to `max_gaussians`
/// Gaussians, up to `max_views` cameras of at most max_size x max_size
/// pixels, and random `channels`-channel features.
[[nodiscard]] OracleFixture make_random_oracle_scene(std::uint64_t seed, int max_gaussians = 10, int max_size = 8,
                                                     int max_views = 3, int channels = 3);

/// Explicit rendering matrix: row (view d, pixel p) in camera order then
/// row-major pixel order, column i holds w_i(d, p). d is the column sum.
struct DenseOracle {
    Eigen::MatrixXd W;
    Eigen::VectorXd d;
};

/// Builds W with straight per-pixel loops over globally depth-sorted
/// Gaussians; shares no projection or blending code with the rasterizer.
/// Requires n * total pixels <= 10^6.
[[nodiscard]] DenseOracle dense_oracle(const GaussianScene &scene, const std::vector<Camera> &cameras,
                                       const RasterConfig &cfg = {});

/// Stacks feature maps (camera order, row-major pixels) into a matrix.
[[nodiscard]] Eigen::MatrixXd stack_features(const std::vector<FeatureMap> &maps);

struct BenchmarkReport {
    int views = 0;
    int width = 0;
    int height = 0;
    int channels = 0;
    int gaussians = 0;
    int threads = 0;
    int repeats = 0;
    std::vector<double> seconds;
    double median_seconds = 0.0;
    double ms_per_view_per_channel = 0.0;

    [[nodiscard]] std::string to_json() const;
};

/// Times uplift after `warmup` untimed runs; reports the median of `repeats`.
[[nodiscard]] BenchmarkReport benchmark_uplift(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                               int repeats, int warmup = 1, const UpliftOptions &opts = {});

struct ChannelSweepReport {
    std::vector<BenchmarkReport> points;
    /// Least-squares fit median_seconds = intercept + slope * channels.
    double intercept = 0.0;
    double slope = 0.0;
    double r_squared = 0.0;

    [[nodiscard]] std::string to_json() const;
};

/// Benchmarks uplift of random feature maps with each channel count.
[[nodiscard]] ChannelSweepReport benchmark_channel_sweep(const GaussianScene &scene, std::span<const int> channels,
                                                         int repeats, int warmup = 1, std::uint64_t seed = 0,
                                                         const UpliftOptions &opts = {});

/// Per-Gaussian features for the open-vocabulary pipeline on a two-cluster
/// scene: CLIP-like rows point near `query` on cluster A and near a
/// canonical phrase on cluster B; DINO-like rows are the uplifted 2D features.
struct OpenVocabFixture {
    GaussianFeatures clip;
    GaussianFeatures dino;
    Eigen::VectorXd query;
    std::array<Eigen::VectorXd, 4> canonical;
};

[[nodiscard]] OpenVocabFixture make_openvocab_fixture(const SyntheticScene &syn, int dim = 16, double noise = 0.3,
                                                      std::uint64_t seed = 7);

} // namespace splatlift
