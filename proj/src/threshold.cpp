// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/threshold.hpp"

#include "splatlift/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatlift {

namespace {

struct Range {
    int lo = 0;
    int hi = -1;
};

Range occupied(const Histogram &hist)
{
    Range r{256, -1};
    for (int g = 0; g < 256; ++g) {
        const double h = hist[static_cast<std::size_t>(g)];
        if (!(h >= 0.0) || !std::isfinite(h)) {
            throw ValidationError("threshold: histogram counts must be finite and non-negative");
        }
        if (h > 0.0) {
            r.lo = std::min(r.lo, g);
            r.hi = std::max(r.hi, g);
        }
    }
    if (r.hi <= r.lo) {
        throw ValidationError("threshold: need at least two distinct levels");
    }
    return r;
}

/// -m1 log(m1 / m0) with 0 log 0 = 0.
double li_term(double m0, double m1)
{
    if (m1 <= 0.0) {
        return 0.0;
    }
    return -m1 * std::log(m1 / m0);
}

} // namespace

int LevelMapping::level_of(double v) const
{
    if (max <= min) {
        return 0;
    }
    const double s = std::round((v - min) / (max - min) * 255.0);
    return static_cast<int>(std::clamp(s, 0.0, 255.0));
}

double LevelMapping::value_of(double level) const { return min + level * (max - min) / 255.0; }

Histogram histogram256(std::span<const float> values, LevelMapping *mapping)
{
    if (values.empty()) {
        throw ValidationError("threshold: empty input");
    }
    LevelMapping m{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw ValidationError("threshold: non-finite input value");
        }
        m.min = std::min(m.min, static_cast<double>(v));
        m.max = std::max(m.max, static_cast<double>(v));
    }
    if (!(m.max > m.min)) {
        throw ValidationError("threshold: constant input (all values equal " + std::to_string(m.min) + ")");
    }
    Histogram hist{};
    for (float v : values) {
        hist[static_cast<std::size_t>(m.level_of(v))] += 1.0;
    }
    if (mapping) {
        *mapping = m;
    }
    return hist;
}

double threshold_li_levels(const Histogram &hist)
{
    const Range r = occupied(hist);
    double tot0 = 0.0, tot1 = 0.0;
    for (int g = r.lo; g <= r.hi; ++g) {
        tot0 += hist[static_cast<std::size_t>(g)];
        tot1 += g * hist[static_cast<std::size_t>(g)];
    }
    double a0 = 0.0, a1 = 0.0;
    double best = std::numeric_limits<double>::infinity();
    int best_t = r.lo + 1;
    for (int t = r.lo + 1; t <= r.hi; ++t) {
        a0 += hist[static_cast<std::size_t>(t - 1)];
        a1 += (t - 1) * hist[static_cast<std::size_t>(t - 1)];
        if (hist[static_cast<std::size_t>(t - 1)] == 0.0 && t > r.lo + 1) {
            // same partition as the previous cut
            continue;
        }
        const double eta = li_term(a0, a1) + li_term(tot0 - a0, tot1 - a1);
        if (eta < best) {
            best = eta;
            best_t = t;
        }
    }
    return best_t - 0.5;
}

double li_lee_iterate(const Histogram &hist, double initial, int max_iterations)
{
    const Range r = occupied(hist);
    double t = std::clamp(initial, r.lo + 0.5, r.hi - 0.5);
    for (int it = 0; it < max_iterations; ++it) {
        double a0 = 0.0, a1 = 0.0, b0 = 0.0, b1 = 0.0;
        for (int g = r.lo; g <= r.hi; ++g) {
            const double h = hist[static_cast<std::size_t>(g)];
            if (g > t) {
                b0 += h;
                b1 += g * h;
            } else {
                a0 += h;
                a1 += g * h;
            }
        }
        if (a0 == 0.0 || b0 == 0.0) {
            break;
        }
        // level 0 has zero intensity; nudge it so the logarithm stays finite
        const double mu_a = std::max(a1 / a0, 1e-12);
        const double mu_b = b1 / b0;
        const double next = (mu_b - mu_a) / (std::log(mu_b) - std::log(mu_a));
        const bool done = std::abs(next - t) < 0.5;
        t = next;
        if (done) {
            break;
        }
    }
    return t;
}

double threshold_otsu_levels(const Histogram &hist)
{
    const Range r = occupied(hist);
    double tot0 = 0.0, tot1 = 0.0;
    for (int g = r.lo; g <= r.hi; ++g) {
        tot0 += hist[static_cast<std::size_t>(g)];
        tot1 += g * hist[static_cast<std::size_t>(g)];
    }
    double a0 = 0.0, a1 = 0.0;
    double best = -1.0;
    int best_t = r.lo + 1;
    for (int t = r.lo + 1; t <= r.hi; ++t) {
        a0 += hist[static_cast<std::size_t>(t - 1)];
        a1 += (t - 1) * hist[static_cast<std::size_t>(t - 1)];
        if (hist[static_cast<std::size_t>(t - 1)] == 0.0 && t > r.lo + 1) {
            continue;
        }
        const double b0 = tot0 - a0;
        const double diff = a1 / a0 - (tot1 - a1) / b0;
        const double score = a0 * b0 * diff * diff;
        if (score > best) {
            best = score;
            best_t = t;
        }
    }
    return best_t - 0.5;
}

double threshold_li(std::span<const float> values)
{
    LevelMapping m;
    const Histogram h = histogram256(values, &m);
    return m.value_of(threshold_li_levels(h));
}

double threshold_otsu(std::span<const float> values)
{
    LevelMapping m;
    const Histogram h = histogram256(values, &m);
    return m.value_of(threshold_otsu_levels(h));
}

} // namespace splatlift
