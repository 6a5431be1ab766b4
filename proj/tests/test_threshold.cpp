// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include <splatlift/error.hpp>
#include <splatlift/rng.hpp>
#include <splatlift/threshold.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

namespace splatlift {

using oracle::brute_li;
using oracle::brute_otsu;
using oracle::random_histogram;

TEST(Threshold, LiMatchesExhaustiveScan)
{
    SplitMix64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const Histogram h = random_histogram(rng);
        EXPECT_EQ(threshold_li_levels(h), brute_li(h)) << "trial " << trial;
    }
}

TEST(Threshold, OtsuMatchesExhaustiveScan)
{
    SplitMix64 rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const Histogram h = random_histogram(rng);
        EXPECT_EQ(threshold_otsu_levels(h), brute_otsu(h)) << "trial " << trial;
    }
}

TEST(Threshold, TwoLevelHistogramSplitsBetweenThem)
{
    Histogram h{};
    h[10] = 5;
    h[200] = 7;
    EXPECT_EQ(threshold_otsu_levels(h), 10.5);
    EXPECT_EQ(threshold_li_levels(h), 10.5);
}

TEST(Threshold, LiLeeIterationReachesAFixedPoint)
{
    SplitMix64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Histogram h = random_histogram(rng);
        const double t = li_lee_iterate(h, 127.5);
        // one more step moves the threshold by less than half a level
        EXPECT_LT(std::abs(li_lee_iterate(h, t, 1) - t), 0.5 + 1e-9) << "trial " << trial;
    }
}

TEST(Threshold, DegenerateInputsAreRejected)
{
    Histogram h{};
    h[42] = 10;
    EXPECT_THROW((void)threshold_li_levels(h), ValidationError);
    EXPECT_THROW((void)threshold_otsu_levels(h), ValidationError);
    const std::vector<float> flat(16, 0.3f);
    EXPECT_THROW((void)threshold_otsu(flat), ValidationError);
    EXPECT_THROW((void)threshold_li(std::vector<float>{}), ValidationError);
}

TEST(Threshold, ValueSpaceMapsLevelsBack)
{
    std::vector<float> v;
    for (int i = 0; i < 100; ++i) {
        v.push_back(2.0f);
        v.push_back(4.0f);
    }
    // levels 0 and 255, the cut sits half a level above the lower one
    EXPECT_NEAR(threshold_otsu(v), 2.0 + 0.5 * 2.0 / 255.0, 1e-12);
    LevelMapping m;
    const Histogram h = histogram256(v, &m);
    EXPECT_EQ(h[0], 100.0);
    EXPECT_EQ(h[255], 100.0);
    EXPECT_EQ(m.level_of(3.0), 128);
}

} // namespace splatlift
