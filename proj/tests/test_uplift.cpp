// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <splatlift/error.hpp>
#include <splatlift/synthetic.hpp>
#include <splatlift/uplift.hpp>

#include <gtest/gtest.h>

#include <omp.h>

namespace splatlift {

using oracle::max_relative_error;

namespace {

Eigen::MatrixXd oracle_uplift(const OracleFixture &fx)
{
    return oracle::dense_uplift(fx);
}

} // namespace

TEST(Uplift, MatchesDenseNormalEquations)
{
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const auto frames = view_features(fx.scene, fx.features);
        const UpliftResult res = uplift(fx.scene, frames);
        EXPECT_LT(max_relative_error(res.features.values, oracle_uplift(fx)), 1e-9) << "seed " << seed;
    }
}

TEST(Uplift, ConstantFeaturesUpliftToTheConstant)
{
    OracleFixture fx = make_random_oracle_scene(3);
    for (auto &m : fx.features) {
        std::fill(m.data.begin(), m.data.end(), 0.25f);
    }
    const auto frames = view_features(fx.scene, fx.features);
    const UpliftResult res = uplift(fx.scene, frames);
    for (Eigen::Index i = 0; i < res.features.count(); ++i) {
        if (res.beta[static_cast<std::size_t>(i)] > 0.0) {
            EXPECT_NEAR(res.features.values(i, 0), 0.25, 1e-7);
        }
    }
}

TEST(Uplift, UnseenGaussiansGetZeroFeatures)
{
    OracleFixture fx = make_oracle_3g();
    Gaussian hidden = fx.scene.gaussians[0];
    hidden.mean = {50.0, 50.0, 50.0};
    fx.scene.gaussians.push_back(hidden);
    fx.scene.active.push_back(1);
    const auto frames = view_features(fx.scene, fx.features);
    const UpliftResult res = uplift(fx.scene, frames);
    ASSERT_EQ(res.unseen, std::vector<std::uint32_t>{3});
    EXPECT_EQ(res.features.values.row(3).norm(), 0.0);
    EXPECT_EQ(res.beta[3], 0.0);
}

TEST(Uplift, IndependentOfThreadCount)
{
    SyntheticSpec spec;
    spec.gaussians_per_cluster = 150;
    spec.views = 5;
    const SyntheticScene syn = make_two_cluster_scene(spec);
    const auto frames = view_features(syn.scene, syn.features);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const UpliftResult one = uplift(syn.scene, frames);
    omp_set_num_threads(4);
    const UpliftResult four = uplift(syn.scene, frames);
    omp_set_num_threads(saved);
    EXPECT_TRUE(one.features.values == four.features.values);
    EXPECT_EQ(one.beta, four.beta);
}

TEST(Uplift, ResizesMismatchedFeatureMaps)
{
    const OracleFixture fx = make_oracle_3g();
    std::vector<FeatureMap> big;
    for (const auto &m : fx.features) {
        FeatureMap b(8, 8, m.channels, 0.5f);
        big.push_back(b);
    }
    const UpliftResult res = uplift(fx.scene, view_features(fx.scene, big));
    for (Eigen::Index i = 0; i < 3; ++i) {
        EXPECT_NEAR(res.features.values(i, 0), 0.5, 1e-7);
    }
}

TEST(Uplift, ChannelMismatchIsRejected)
{
    OracleFixture fx = make_oracle_3g();
    fx.features[1] = FeatureMap(4, 4, 3);
    EXPECT_THROW((void)uplift(fx.scene, view_features(fx.scene, fx.features)), ValidationError);
}

TEST(Uplift, SinglePreconditionedStepFromZeroEqualsUplift)
{
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const auto frames = view_features(fx.scene, fx.features);
        const UpliftResult up = uplift(fx.scene, frames);
        const FeatureMatrix f0 = FeatureMatrix::Zero(up.features.count(), up.features.channels());
        const RefineResult ref = refine_by_gradient(fx.scene, frames, f0, 1, 1.0);
        EXPECT_LT((ref.features.values - up.features.values).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Uplift, UnitStepRefinementNeverIncreasesLoss)
{
    for (std::uint64_t seed = 300; seed < 310; ++seed) {
        const OracleFixture fx = make_random_oracle_scene(seed);
        const auto frames = view_features(fx.scene, fx.features);
        const UpliftResult up = uplift(fx.scene, frames);
        const RefineResult ref = refine_by_gradient(fx.scene, frames, up.features.values, 8, 1.0);
        ASSERT_EQ(ref.loss.size(), 9u);
        EXPECT_NEAR(ref.loss[0], reconstruction_loss(fx.scene, frames, up.features.values), 1e-9);
        for (std::size_t t = 1; t < ref.loss.size(); ++t) {
            EXPECT_LE(ref.loss[t], ref.loss[t - 1] * (1.0 + 1e-12)) << "seed " << seed << " step " << t;
        }
    }
}

TEST(Uplift, CountNormalizationAveragesFragments)
{
    const OracleFixture fx = make_random_oracle_scene(17);
    const auto frames = view_features(fx.scene, fx.features);
    const GaussianFeatures counted = uplift_count_normalized(fx.scene, frames);
    const UpliftAccumulator acc = accumulate_transpose(fx.scene, frames);
    for (Eigen::Index i = 0; i < counted.count(); ++i) {
        if (acc.count[static_cast<std::size_t>(i)] > 0.0) {
            EXPECT_NEAR(counted.values(i, 0), acc.numerator(i, 0) / acc.count[static_cast<std::size_t>(i)], 1e-12);
        }
    }
}

TEST(Uplift, PruneKeepsLargestBetaWithIndexTies)
{
    OracleFixture fx = make_oracle_3g();
    for (int k = 0; k < 2; ++k) {
        fx.scene.gaussians.push_back(fx.scene.gaussians[0]);
    }
    fx.scene.active.assign(5, 1);
    const std::vector<double> beta = {0.1, 0.5, 0.5, 0.2, 0.5};
    const GaussianScene pruned = prune_by_importance(fx.scene, beta, 0.5);
    EXPECT_EQ(pruned.active, (std::vector<std::uint8_t>{0, 1, 1, 0, 1}));
    const GaussianScene two = prune_by_importance(fx.scene, beta, 0.4);
    EXPECT_EQ(two.active, (std::vector<std::uint8_t>{0, 1, 1, 0, 0}));
    EXPECT_THROW((void)prune_by_importance(fx.scene, beta, 0.0), ValidationError);
}

TEST(Uplift, ReprojectedMaskOfSameViewIsBounded)
{
    const OracleFixture fx = make_oracle_3g();
    FeatureMap mask(4, 4, 1, 1.0f);
    const FeatureMap out = reproject_mask(fx.scene, fx.scene.cameras[0], mask, fx.scene.cameras[1]);
    for (float v : out.data) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f + 1e-6f);
    }
}

} // namespace splatlift
