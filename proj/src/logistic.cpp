// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/logistic.hpp"

#include "splatlift/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace splatlift {

namespace {

double sigmoid(double z)
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct ClassWeights {
    double pos = 1.0;
    double neg = 1.0;
};

ClassWeights class_weights(std::span<const std::uint8_t> positive, const LogisticOptions &opts)
{
    std::size_t n_pos = 0;
    for (auto p : positive) {
        n_pos += p ? 1 : 0;
    }
    const std::size_t n = positive.size();
    if (n_pos == 0 || n_pos == n) {
        throw ValidationError("fit_logistic: need both positive and negative samples (got " + std::to_string(n_pos) +
                              " positives of " + std::to_string(n) + ")");
    }
    if (!opts.balanced) {
        return {};
    }
    return {static_cast<double>(n) / (2.0 * static_cast<double>(n_pos)),
            static_cast<double>(n) / (2.0 * static_cast<double>(n - n_pos))};
}

} // namespace

double LogisticModel::predict(const Eigen::Ref<const Eigen::VectorXd> &x) const
{
    return sigmoid(weights.dot(x) + bias);
}

double LogisticModel::predict(std::span<const float> x) const
{
    double z = bias;
    for (std::size_t k = 0; k < x.size(); ++k) {
        z += weights[static_cast<Eigen::Index>(k)] * x[k];
    }
    return sigmoid(z);
}

double logistic_objective(const FeatureMatrix &features, std::span<const std::uint8_t> positive,
                          const Eigen::VectorXd &weights, double bias, const LogisticOptions &opts)
{
    const ClassWeights cw = class_weights(positive, opts);
    const Eigen::VectorXd z = (features * weights).array() + bias;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const bool y = positive[static_cast<std::size_t>(i)] != 0;
        // -log p = softplus(-z), -log(1-p) = softplus(z)
        loss += y ? cw.pos * softplus(-z[i]) : cw.neg * softplus(z[i]);
    }
    return loss / static_cast<double>(z.size()) + 0.5 * opts.l2 * weights.squaredNorm();
}

LogisticModel fit_logistic(const FeatureMatrix &features, std::span<const std::uint8_t> positive,
                           const LogisticOptions &opts)
{
    if (static_cast<std::size_t>(features.rows()) != positive.size()) {
        throw ValidationError("fit_logistic: label count does not match feature rows");
    }
    const ClassWeights cw = class_weights(positive, opts);
    const Eigen::Index n = features.rows();
    const Eigen::Index c = features.cols();
    const double inv_n = 1.0 / static_cast<double>(n);

    // augmented design [x, 1]; parameters theta = [w, b]
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(c + 1);
    Eigen::VectorXd sample_w(n);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool pos = positive[static_cast<std::size_t>(i)] != 0;
        sample_w[i] = pos ? cw.pos : cw.neg;
        y[i] = pos ? 1.0 : 0.0;
    }

    auto objective = [&](const Eigen::VectorXd &t) {
        return logistic_objective(features, positive, t.head(c), t[c], opts);
    };

    LogisticModel model;
    double current = objective(theta);
    for (int it = 0; it < opts.max_iterations; ++it) {
        const Eigen::VectorXd z = (features * theta.head(c)).array() + theta[c];
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(c + 1);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(c + 1, c + 1);
        Eigen::VectorXd xi(c + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = sigmoid(z[i]);
            xi.head(c) = features.row(i).transpose();
            xi[c] = 1.0;
            grad += (sample_w[i] * (p - y[i]) * inv_n) * xi;
            hess.selfadjointView<Eigen::Lower>().rankUpdate(xi, sample_w[i] * p * (1.0 - p) * inv_n);
        }
        grad.head(c) += opts.l2 * theta.head(c);
        hess.diagonal().head(c).array() += opts.l2;
        model.gradient_norm = grad.norm();
        model.iterations = it;
        if (model.gradient_norm < opts.gradient_tolerance) {
            break;
        }
        // tiny ridge on the bias keeps the system solvable when all samples saturate
        hess(c, c) += 1e-12;
        const Eigen::VectorXd step = hess.selfadjointView<Eigen::Lower>().ldlt().solve(grad);
        double t = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Eigen::VectorXd cand = theta - t * step;
            const double val = objective(cand);
            if (std::isfinite(val) && val <= current - 1e-4 * t * grad.dot(step)) {
                theta = cand;
                current = val;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) {
            break;
        }
        model.iterations = it + 1;
    }
    if (!theta.allFinite()) {
        throw NumericError("fit_logistic: non-finite parameters");
    }
    model.weights = theta.head(c);
    model.bias = theta[c];
    return model;
}

} // namespace splatlift
