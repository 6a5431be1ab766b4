// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <splatlift/rasterizer.hpp>
#include <splatlift/rng.hpp>
#include <splatlift/synthetic.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace splatlift {

namespace {

GaussianScene single_gaussian_scene(double opacity, const Eigen::Vector3d &mean = Eigen::Vector3d::Zero())
{
    GaussianScene scene;
    Gaussian g;
    g.mean = mean;
    g.scale = {0.2, 0.2, 0.2};
    g.opacity = opacity;
    scene.gaussians.push_back(g);
    scene.active.assign(1, 1);
    scene.cameras.push_back(look_at_camera("front", 9, 9, 10.0, {0.0, 0.0, -3.0}, Eigen::Vector3d::Zero(),
                                           Eigen::Vector3d(0.0, -1.0, 0.0)));
    return scene;
}

} // namespace

using oracle::random_features;

TEST(Rasterizer, CenterPixelWeightMatchesClosedForm)
{
    const GaussianScene scene = single_gaussian_scene(0.5);
    const Camera &cam = scene.cameras[0];
    const auto proj = project(scene, cam);
    ASSERT_EQ(proj.size(), 1u);
    // isotropic world covariance 0.04 at depth 3 seen with focal 10
    const double var = 0.04 * (10.0 / 3.0) * (10.0 / 3.0) + 0.3;
    EXPECT_NEAR(proj[0].cov2d(0, 0), var, 1e-12);
    EXPECT_NEAR(proj[0].mean2d.x(), 4.5, 1e-12);
    EXPECT_NEAR(proj[0].mean2d.y(), 4.5, 1e-12);

    const WeightFragmentBuffer buf = rasterize_weights(scene, cam);
    const auto center = buf.pixel(4 * 9 + 4);
    ASSERT_EQ(center.size(), 1u);
    EXPECT_DOUBLE_EQ(center[0].weight, 0.5);
    const auto off = buf.pixel(4 * 9 + 5);
    ASSERT_EQ(off.size(), 1u);
    EXPECT_NEAR(off[0].weight, 0.5 * std::exp(-0.5 / var), 1e-12);
}

TEST(Rasterizer, OpaqueGaussianIsClampedToAlphaMax)
{
    const GaussianScene scene = single_gaussian_scene(1.0);
    const WeightFragmentBuffer buf = rasterize_weights(scene, scene.cameras[0]);
    EXPECT_DOUBLE_EQ(buf.pixel(4 * 9 + 4)[0].weight, 0.99);
}

TEST(Rasterizer, GaussianBehindCameraIsCulled)
{
    const GaussianScene scene = single_gaussian_scene(0.8, {0.0, 0.0, -5.0});
    const WeightFragmentBuffer buf = rasterize_weights(scene, scene.cameras[0]);
    EXPECT_TRUE(buf.fragments.empty());
    EXPECT_EQ(buf.stats.culled_near, 1u);
}

TEST(Rasterizer, StopsBeforeTransmittanceDropsBelowMinimum)
{
    GaussianScene scene = single_gaussian_scene(0.99);
    for (int k = 1; k < 6; ++k) {
        Gaussian g = scene.gaussians[0];
        g.mean.z() = 0.1 * k;
        scene.gaussians.push_back(g);
    }
    scene.active.assign(scene.gaussians.size(), 1);
    const WeightFragmentBuffer buf = rasterize_weights(scene, scene.cameras[0]);
    const auto center = buf.pixel(4 * 9 + 4);
    // 0.01^2 = 1e-4 is not below the limit, a third layer would be
    ASSERT_EQ(center.size(), 2u);
    EXPECT_EQ(center[0].gaussian_id, 0u);
    EXPECT_EQ(center[1].gaussian_id, 1u);
    EXPECT_NEAR(center[1].weight, 0.99 * 0.01, 1e-15);
}

TEST(Rasterizer, InactiveGaussiansAreSkipped)
{
    GaussianScene scene = single_gaussian_scene(0.7);
    scene.active[0] = 0;
    const WeightFragmentBuffer buf = rasterize_weights(scene, scene.cameras[0]);
    EXPECT_TRUE(buf.fragments.empty());
}

TEST(Rasterizer, MatchesDenseOracleOnRandomScenes)
{
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const DenseOracle oracle = dense_oracle(fx.scene, fx.scene.cameras);
        std::size_t row0 = 0;
        for (const Camera &cam : fx.scene.cameras) {
            const WeightFragmentBuffer buf = rasterize_weights(fx.scene, cam);
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cam.pixel_count()),
                                                      static_cast<Eigen::Index>(fx.scene.size()));
            for (std::size_t p = 0; p < buf.pixel_count(); ++p) {
                for (const Fragment &f : buf.pixel(p)) {
                    w(static_cast<Eigen::Index>(p), f.gaussian_id) += f.weight;
                }
            }
            const Eigen::MatrixXd ref = oracle.W.middleRows(static_cast<Eigen::Index>(row0), w.rows());
            EXPECT_LT((w - ref).cwiseAbs().maxCoeff(), 1e-12) << "seed " << seed << " camera " << cam.id;
            row0 += cam.pixel_count();
        }
    }
}

TEST(Rasterizer, WeightsFormSubSimplex)
{
    SyntheticSpec spec;
    spec.gaussians_per_cluster = 100;
    spec.views = 3;
    const SyntheticScene syn = make_two_cluster_scene(spec);
    for (const Camera &cam : syn.scene.cameras) {
        const WeightFragmentBuffer buf = rasterize_weights(syn.scene, cam);
        for (std::size_t p = 0; p < buf.pixel_count(); ++p) {
            double sum = 0.0;
            for (const Fragment &f : buf.pixel(p)) {
                EXPECT_GE(f.weight, 0.0);
                sum += f.weight;
            }
            EXPECT_LE(sum, 1.0 + 1e-12);
        }
    }
}

TEST(Rasterizer, TileSizeDoesNotChangeFragments)
{
    const OracleFixture fx = make_random_oracle_scene(7, 10, 40, 1);
    RasterConfig small;
    small.tile_size = 3;
    const WeightFragmentBuffer a = rasterize_weights(fx.scene, fx.scene.cameras[0]);
    const WeightFragmentBuffer b = rasterize_weights(fx.scene, fx.scene.cameras[0], small);
    ASSERT_EQ(a.offsets, b.offsets);
    for (std::size_t k = 0; k < a.fragments.size(); ++k) {
        EXPECT_EQ(a.fragments[k].gaussian_id, b.fragments[k].gaussian_id);
        EXPECT_EQ(a.fragments[k].weight, b.fragments[k].weight);
    }
}

TEST(Rasterizer, RenderIsLinearInFeatures)
{
    const OracleFixture fx = make_random_oracle_scene(11);
    const Camera &cam = fx.scene.cameras[0];
    const FeatureMatrix f = random_features(fx.scene.size(), 4, 1);
    const FeatureMatrix g = random_features(fx.scene.size(), 4, 2);
    const RenderOutput rf = render(fx.scene, cam, f);
    const RenderOutput rg = render(fx.scene, cam, g);
    const RenderOutput mix = render(fx.scene, cam, FeatureMatrix(2.5 * f - 0.75 * g));
    for (std::size_t k = 0; k < mix.values.size(); ++k) {
        EXPECT_NEAR(mix.values[k], 2.5 * rf.values[k] - 0.75 * rg.values[k], 1e-5);
    }
}

TEST(Rasterizer, RenderIsInvariantToGaussianOrder)
{
    const OracleFixture fx = make_random_oracle_scene(5);
    const FeatureMatrix f = random_features(fx.scene.size(), 3, 9);
    std::vector<std::size_t> perm(fx.scene.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    GaussianScene shuffled = fx.scene;
    FeatureMatrix fs(f.rows(), f.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.gaussians[i] = fx.scene.gaussians[perm[i]];
        fs.row(static_cast<Eigen::Index>(i)) = f.row(static_cast<Eigen::Index>(perm[i]));
    }
    for (const Camera &cam : fx.scene.cameras) {
        const RenderOutput a = render(fx.scene, cam, f);
        const RenderOutput b = render(shuffled, cam, fs);
        for (std::size_t k = 0; k < a.values.size(); ++k) {
            EXPECT_NEAR(a.values[k], b.values[k], 1e-6);
        }
    }
}

TEST(Rasterizer, RgbOverBackgroundUsesRemainingTransmittance)
{
    GaussianScene scene = single_gaussian_scene(0.5);
    set_base_color(scene.gaussians[0], {1.0, 0.0, 0.0});
    const RenderOutput out = render_rgb(scene, scene.cameras[0], {0.0, 0.0, 1.0});
    const std::size_t p = 4 * 9 + 4;
    EXPECT_NEAR(out.values[p * 3 + 0], 0.5, 1e-6);
    EXPECT_NEAR(out.values[p * 3 + 2], 0.5, 1e-6);
    EXPECT_NEAR(out.alpha[p], 0.5, 1e-6);
}

} // namespace splatlift
