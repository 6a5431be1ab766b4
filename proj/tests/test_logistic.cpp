// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include <splatlift/error.hpp>
#include <splatlift/logistic.hpp>
#include <splatlift/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>

namespace splatlift {

namespace {

struct Problem {
    FeatureMatrix x;
    std::vector<std::uint8_t> y;
};

// Overlapping classes so the optimum is finite even with a tiny penalty.
Problem make_problem(std::uint64_t seed, int n, int c, double shift)
{
    SplitMix64 rng(seed);
    Problem p;
    p.x.resize(n, c);
    for (int i = 0; i < n; ++i) {
        const bool pos = rng.uniform() < 0.3;
        p.y.push_back(pos ? 1 : 0);
        for (int k = 0; k < c; ++k) {
            p.x(i, k) = rng.normal() + (pos && k == 0 ? shift : 0.0);
        }
    }
    return p;
}

// Weighted mean cross-entropy written out directly: class weights n / (2 n_class).
double reference_objective(const Problem &p, const Eigen::VectorXd &w, double b, double l2)
{
    const auto n = static_cast<double>(p.y.size());
    double n_pos = 0.0;
    for (auto v : p.y) {
        n_pos += v;
    }
    const double wp = n / (2.0 * n_pos);
    const double wn = n / (2.0 * (n - n_pos));
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
        const double prob = 1.0 / (1.0 + std::exp(-(p.x.row(i).dot(w) + b)));
        loss += p.y[static_cast<std::size_t>(i)] ? -wp * std::log(prob) : -wn * std::log(1.0 - prob);
    }
    return loss / n + 0.5 * l2 * w.squaredNorm();
}

// Plain gradient descent with a fixed small step, run to convergence.
std::pair<Eigen::VectorXd, double> gradient_descent(const Problem &p, double l2)
{
    const auto n = static_cast<double>(p.y.size());
    double n_pos = 0.0;
    for (auto v : p.y) {
        n_pos += v;
    }
    const double wp = n / (2.0 * n_pos);
    const double wn = n / (2.0 * (n - n_pos));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p.x.cols());
    double b = 0.0;
    for (int it = 0; it < 200000; ++it) {
        Eigen::VectorXd gw = l2 * w;
        double gb = 0.0;
        for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
            const double prob = 1.0 / (1.0 + std::exp(-(p.x.row(i).dot(w) + b)));
            const bool y = p.y[static_cast<std::size_t>(i)] != 0;
            const double r = (y ? wp : wn) * (prob - (y ? 1.0 : 0.0)) / n;
            gw += r * p.x.row(i).transpose();
            gb += r;
        }
        w -= 0.5 * gw;
        b -= 0.5 * gb;
        if (std::sqrt(gw.squaredNorm() + gb * gb) < 1e-10) {
            break;
        }
    }
    return {w, b};
}

} // namespace

TEST(Logistic, ObjectiveMatchesDirectFormula)
{
    const Problem p = make_problem(3, 80, 4, 1.5);
    LogisticOptions opts;
    opts.l2 = 0.01;
    const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(4, -0.5, 0.7);
    EXPECT_NEAR(logistic_objective(p.x, p.y, w, 0.2, opts), reference_objective(p, w, 0.2, 0.01), 1e-12);
}

TEST(Logistic, NewtonAgreesWithGradientDescent)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Problem p = make_problem(seed, 60, 3, 1.0);
        LogisticOptions opts;
        opts.l2 = 0.05;
        opts.gradient_tolerance = 1e-12;
        const LogisticModel m = fit_logistic(p.x, p.y, opts);
        const auto [w, b] = gradient_descent(p, opts.l2);
        EXPECT_LT((m.weights - w).cwiseAbs().maxCoeff(), 1e-6) << "seed " << seed;
        EXPECT_NEAR(m.bias, b, 1e-6) << "seed " << seed;
        EXPECT_LE(logistic_objective(p.x, p.y, m.weights, m.bias, opts),
                  reference_objective(p, w, b, opts.l2) + 1e-12);
    }
}

TEST(Logistic, SeparatesShiftedClasses)
{
    const Problem p = make_problem(9, 400, 2, 4.0);
    const LogisticModel m = fit_logistic(p.x, p.y);
    int correct = 0;
    for (Eigen::Index i = 0; i < p.x.rows(); ++i) {
        const bool pred = m.predict(Eigen::VectorXd(p.x.row(i).transpose())) > 0.5;
        correct += pred == (p.y[static_cast<std::size_t>(i)] != 0);
    }
    EXPECT_GT(correct, 370);
    EXPECT_LT(m.gradient_norm, 1e-6);
}

TEST(Logistic, BalancedWeightsGiveOneHalfWithoutSignal)
{
    FeatureMatrix x = FeatureMatrix::Zero(10, 2);
    std::vector<std::uint8_t> y = {1, 1, 0, 0, 0, 0, 0, 0, 0, 0};
    const LogisticModel m = fit_logistic(x, y);
    EXPECT_NEAR(m.predict(Eigen::VectorXd::Zero(2)), 0.5, 1e-9);
    LogisticOptions plain;
    plain.balanced = false;
    EXPECT_NEAR(fit_logistic(x, y, plain).predict(Eigen::VectorXd::Zero(2)), 0.2, 1e-6);
}

TEST(Logistic, SingleClassIsRejected)
{
    FeatureMatrix x = FeatureMatrix::Ones(4, 2);
    EXPECT_THROW((void)fit_logistic(x, std::vector<std::uint8_t>(4, 1)), ValidationError);
}

} // namespace splatlift
