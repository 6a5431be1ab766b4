// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>

namespace splatlift {

/// Counts per 8-bit level.
using Histogram = std::array<double, 256>;

/// Maps values linearly onto levels 0..255 (min -> 0, max -> 255, rounded).
struct LevelMapping {
    double min = 0.0;
    double max = 1.0;

    [[nodiscard]] int level_of(double v) const;
    /// Value corresponding to a (fractional) level.
    [[nodiscard]] double value_of(double level) const;
};

[[nodiscard]] Histogram histogram256(std::span<const float> values, LevelMapping *mapping = nullptr);

// Level thresholds below are reported as t - 0.5 for the cut whose upper
// class is {g >= t}; cuts leave both classes non-empty and ties resolve to
// the lowest t.

/// Minimum cross-entropy threshold (Li) over all cuts, with levels used as
/// intensities and 0 log 0 = 0.
[[nodiscard]] double threshold_li_levels(const Histogram &hist);

/// Li–Lee fixed-point iteration t <- (mu_b - mu_a) / (ln mu_b - ln mu_a)
/// starting from `initial` (a level), stopped once |dt| < 0.5. Can settle
/// in a local minimum of the cross-entropy.
[[nodiscard]] double li_lee_iterate(const Histogram &hist, double initial, int max_iterations = 256);

/// Otsu threshold maximizing the between-class variance.
[[nodiscard]] double threshold_otsu_levels(const Histogram &hist);

/// Value-space thresholds on min-max normalized data; binarize with v > t.
[[nodiscard]] double threshold_li(std::span<const float> values);
[[nodiscard]] double threshold_otsu(std::span<const float> values);

} // namespace splatlift
