// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace splatlift {

struct LogisticOptions {
    /// L2 penalty on the weights (the bias is not penalized).
    double l2 = 1e-4;
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    /// Weight each class by n / (2 n_class). With balanced weights a
    /// featureless input yields 0.5 instead of the positive prior.
    bool balanced = true;
};

/// Binary logistic regression p(x) = sigmoid(w . x + b).
struct LogisticModel {
    Eigen::VectorXd weights;
    double bias = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;

    [[nodiscard]] double predict(const Eigen::Ref<const Eigen::VectorXd> &x) const;
    [[nodiscard]] double predict(std::span<const float> x) const;
};

/// Fits by damped Newton iterations on the weighted mean cross-entropy
/// plus (l2 / 2) |w|^2, stopping when the gradient norm drops below the
/// tolerance. `positive` flags each row.
[[nodiscard]] LogisticModel fit_logistic(const FeatureMatrix &features, std::span<const std::uint8_t> positive,
                                         const LogisticOptions &opts = {});

/// Objective minimized by fit_logistic, exposed for diagnostics and tests.
[[nodiscard]] double logistic_objective(const FeatureMatrix &features, std::span<const std::uint8_t> positive,
                                        const Eigen::VectorXd &weights, double bias, const LogisticOptions &opts);

} // namespace splatlift
