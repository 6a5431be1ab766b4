// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/feature_graph.hpp"

#include "splatlift/error.hpp"
#include "splatlift/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <queue>
#include <tuple>

namespace splatlift {

namespace {

/// Lower bound for unary values; keeps P strictly positive after underflow.
constexpr double kMinUnary = 1e-300;

class KdTree {
public:
    explicit KdTree(const Centers &pts) : pts_(pts), order_(static_cast<std::size_t>(pts.rows()))
    {
        std::iota(order_.begin(), order_.end(), 0u);
        if (!order_.empty()) {
            nodes_.reserve(2 * order_.size() / kLeafSize + 2);
            build(0, order_.size());
        }
    }

    /// k nearest to point `self`, excluding it, ordered by (d2, index).
    void query(std::uint32_t self, int k, std::uint32_t *out) const
    {
        Heap heap;
        search(0, self, static_cast<std::size_t>(k), heap);
        for (int slot = k - 1; slot >= 0; --slot) {
            out[slot] = heap.top().second;
            heap.pop();
        }
    }

private:
    static constexpr std::size_t kLeafSize = 8;
    using Entry = std::pair<double, std::uint32_t>;
    // max-heap on (d2, index): top is the current worst candidate
    using Heap = std::priority_queue<Entry>;

    struct Node {
        std::size_t begin = 0, end = 0;
        int axis = -1; // -1 for leaves
        double split = 0.0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end)
    {
        const std::size_t id = nodes_.size();
        nodes_.push_back({begin, end});
        if (end - begin <= kLeafSize) {
            return id;
        }
        Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
        Eigen::Vector3d hi = -lo;
        for (std::size_t i = begin; i < end; ++i) {
            const Eigen::Vector3d p = pts_.row(order_[i]).transpose();
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::uint32_t a, std::uint32_t b) { return pts_(a, axis) < pts_(b, axis); });
        const double split = pts_(order_[mid], axis);
        const std::size_t left = build(begin, mid);
        const std::size_t right = build(mid, end);
        nodes_[id].axis = axis;
        nodes_[id].split = split;
        nodes_[id].left = left;
        nodes_[id].right = right;
        return id;
    }

    void search(std::size_t node_id, std::uint32_t self, std::size_t k, Heap &heap) const
    {
        const Node &node = nodes_[node_id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::uint32_t j = order_[i];
                if (j == self) {
                    continue;
                }
                const double dx = pts_(self, 0) - pts_(j, 0);
                const double dy = pts_(self, 1) - pts_(j, 1);
                const double dz = pts_(self, 2) - pts_(j, 2);
                const Entry e{dx * dx + dy * dy + dz * dz, j};
                if (heap.size() < k) {
                    heap.push(e);
                } else if (e < heap.top()) {
                    heap.pop();
                    heap.push(e);
                }
            }
            return;
        }
        // left holds coordinates <= split, right holds >= split
        const double diff = pts_(self, node.axis) - node.split;
        const std::size_t near = diff <= 0.0 ? node.left : node.right;
        const std::size_t far = diff <= 0.0 ? node.right : node.left;
        search(near, self, k, heap);
        // ties at equal distance may still improve the index order
        if (heap.size() < k || diff * diff <= heap.top().first) {
            search(far, self, k, heap);
        }
    }

    const Centers &pts_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

double squared_distance(const FeatureMatrix &f, Eigen::Index i, Eigen::Index j)
{
    return (f.row(i) - f.row(j)).squaredNorm();
}

} // namespace

UnaryMode parse_unary_mode(const std::string &name)
{
    if (name == "none") return UnaryMode::none;
    if (name == "cosine_to_mean" || name == "cosine") return UnaryMode::cosine_to_mean;
    if (name == "logistic") return UnaryMode::logistic;
    throw ValidationError("unknown unary mode '" + name + "' (expected none, cosine_to_mean or logistic)");
}

std::string to_string(UnaryMode mode)
{
    switch (mode) {
    case UnaryMode::none:
        return "none";
    case UnaryMode::cosine_to_mean:
        return "cosine_to_mean";
    case UnaryMode::logistic:
        return "logistic";
    }
    return "none";
}

void GraphParams::validate() const
{
    if (k < 1) {
        throw ValidationError("graph: k must be >= 1");
    }
    if (!(bandwidth_edge > 0.0) || !(bandwidth_unary > 0.0)) {
        throw ValidationError("graph: bandwidths must be positive");
    }
    if (median_sample_size == 0) {
        throw ValidationError("graph: median_sample_size must be positive");
    }
}

NeighborLists knn_graph(const Centers &centers, int k)
{
    const auto n = static_cast<std::size_t>(centers.rows());
    if (k < 1) {
        throw ValidationError("knn_graph: k must be >= 1");
    }
    if (n <= static_cast<std::size_t>(k)) {
        throw ValidationError("knn_graph: need more than k = " + std::to_string(k) + " points, got " +
                              std::to_string(n));
    }
    NeighborLists out;
    out.k = k;
    out.indices.resize(n * static_cast<std::size_t>(k));
    const KdTree tree(centers);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        tree.query(static_cast<std::uint32_t>(i), k, out.indices.data() + static_cast<std::size_t>(i) * k);
    }
    return out;
}

double rbf_similarity(const Eigen::Ref<const Eigen::RowVectorXd> &fi, const Eigen::Ref<const Eigen::RowVectorXd> &fj,
                      double s_f, double bandwidth)
{
    if (!(s_f > 0.0)) {
        throw ValidationError("rbf_similarity: s_f must be positive");
    }
    if (!(bandwidth > 0.0)) {
        throw ValidationError("rbf_similarity: bandwidth must be positive");
    }
    return std::exp(-(fi - fj).squaredNorm() / (bandwidth * s_f * s_f));
}

FeatureMatrix l2_normalize_rows(const FeatureMatrix &features)
{
    FeatureMatrix out = features;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double norm = out.row(i).norm();
        if (norm > 0.0) {
            out.row(i) /= norm;
        }
    }
    return out;
}

double median_pairwise_distance(const FeatureMatrix &features, std::size_t sample_size, std::uint64_t seed)
{
    const auto n = static_cast<std::uint64_t>(features.rows());
    if (n < 2) {
        throw ValidationError("median_pairwise_distance: need at least two rows");
    }
    std::vector<double> d;
    const std::uint64_t total = n * (n - 1) / 2;
    if (total <= sample_size) {
        d.reserve(total);
        for (Eigen::Index i = 0; i < features.rows(); ++i) {
            for (Eigen::Index j = i + 1; j < features.rows(); ++j) {
                d.push_back(std::sqrt(squared_distance(features, i, j)));
            }
        }
    } else {
        SplitMix64 rng(seed);
        d.reserve(sample_size);
        for (std::size_t s = 0; s < sample_size; ++s) {
            const auto i = rng.bounded(n);
            auto j = rng.bounded(n - 1);
            if (j >= i) {
                ++j;
            }
            d.push_back(std::sqrt(
                squared_distance(features, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        }
    }
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    const double upper = d[mid];
    if (d.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

Eigen::VectorXd CsrMatrix::multiply(const Eigen::VectorXd &x) const
{
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        double acc = 0.0;
        for (auto e = offsets[static_cast<std::size_t>(i)]; e < offsets[static_cast<std::size_t>(i) + 1]; ++e) {
            acc += values[e] * x[indices[e]];
        }
        y[i] = acc;
    }
    return y;
}

FeatureMatrix CsrMatrix::multiply(const FeatureMatrix &x) const
{
    FeatureMatrix y = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), x.cols());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        for (auto e = offsets[static_cast<std::size_t>(i)]; e < offsets[static_cast<std::size_t>(i) + 1]; ++e) {
            y.row(i) += values[e] * x.row(indices[e]);
        }
    }
    return y;
}

Eigen::MatrixXd CsrMatrix::to_dense() const
{
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (auto e = offsets[i]; e < offsets[i + 1]; ++e) {
            d(static_cast<Eigen::Index>(i), indices[e]) += values[e];
        }
    }
    return d;
}

GraphBasis prepare_graph(const Centers &centers, const FeatureMatrix &features, const GraphParams &params)
{
    params.validate();
    if (centers.rows() != features.rows()) {
        throw ValidationError("build_graph: " + std::to_string(centers.rows()) + " centers but " +
                              std::to_string(features.rows()) + " feature rows");
    }
    GraphBasis basis;
    basis.neighbors = knn_graph(centers, params.k);
    basis.normalized = l2_normalize_rows(features);
    double s = median_pairwise_distance(basis.normalized, params.median_sample_size, params.seed);
    if (!(s > 0.0)) {
        // more than half of the pairs coincide; fall back to the mean distance
        double sum = 0.0;
        std::size_t cnt = 0;
        for (Eigen::Index i = 0; i + 1 < basis.normalized.rows() && cnt < params.median_sample_size; ++i) {
            sum += std::sqrt(squared_distance(basis.normalized, i, i + 1));
            ++cnt;
        }
        s = sum > 0.0 ? sum / static_cast<double>(cnt) : 1.0;
    }
    basis.s_f = s;
    return basis;
}

Eigen::VectorXd unary_term(const GraphBasis &basis, const GraphParams &params, std::span<const std::uint32_t> anchors)
{
    const Eigen::Index n = basis.normalized.rows();
    Eigen::VectorXd unary = Eigen::VectorXd::Ones(n);
    if (params.unary_mode == UnaryMode::none) {
        return unary;
    }
    if (anchors.empty()) {
        throw ValidationError("build_graph: unary mode '" + to_string(params.unary_mode) + "' requires anchor nodes");
    }
    for (auto a : anchors) {
        if (a >= n) {
            throw ValidationError("build_graph: anchor index " + std::to_string(a) + " out of range");
        }
    }
    if (params.unary_mode == UnaryMode::cosine_to_mean) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(basis.normalized.cols());
        for (auto a : anchors) {
            mean += basis.normalized.row(a);
        }
        mean /= static_cast<double>(anchors.size());
        const double norm = mean.norm();
        if (norm > 0.0) {
            mean /= norm;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            unary[i] = std::max(kMinUnary, rbf_similarity(basis.normalized.row(i), mean, basis.s_f,
                                                          params.bandwidth_unary));
        }
    } else {
        std::vector<std::uint8_t> positive(static_cast<std::size_t>(n), 0);
        for (auto a : anchors) {
            positive[a] = 1;
        }
        const LogisticModel model = fit_logistic(basis.normalized, positive, params.logistic);
        const double exponent = 1.0 / params.bandwidth_unary;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = model.predict(Eigen::VectorXd(basis.normalized.row(i).transpose()));
            unary[i] = std::max(kMinUnary, std::pow(p, exponent));
        }
    }
    return unary;
}

FeatureGraph build_graph(const GraphBasis &basis, const GraphParams &params, std::span<const std::uint32_t> anchors,
                         std::span<const std::uint32_t> suppressed)
{
    params.validate();
    if (basis.neighbors.k != params.k) {
        throw ValidationError("build_graph: basis was prepared with a different k");
    }
    const auto n = static_cast<std::size_t>(basis.normalized.rows());
    FeatureGraph graph;
    graph.k = params.k;
    graph.s_f = basis.s_f;
    graph.unary = unary_term(basis, params, anchors);
    for (auto s : suppressed) {
        if (s >= n) {
            throw ValidationError("build_graph: suppressed index " + std::to_string(s) + " out of range");
        }
        graph.unary[s] = kMinUnary;
    }
    const Eigen::VectorXd sqrt_unary = graph.unary.cwiseSqrt();

    CsrMatrix &a = graph.adjacency;
    a.n = n;
    a.offsets.resize(n + 1);
    const auto k = static_cast<std::size_t>(params.k);
    for (std::size_t i = 0; i <= n; ++i) {
        a.offsets[i] = i * k;
    }
    a.indices = basis.neighbors.indices;
    a.values.resize(n * k);
    const double denom = params.bandwidth_edge * basis.s_f * basis.s_f;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        for (std::size_t e = static_cast<std::size_t>(i) * k; e < (static_cast<std::size_t>(i) + 1) * k; ++e) {
            const std::uint32_t j = a.indices[e];
            const double sim = std::exp(-squared_distance(basis.normalized, i, j) / denom);
            a.values[e] = sim * sqrt_unary[i] * sqrt_unary[j];
        }
    }

    if (params.symmetrize) {
        std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> entries;
        entries.reserve(2 * a.values.size());
        for (std::size_t i = 0; i < n; ++i) {
            for (auto e = a.offsets[i]; e < a.offsets[i + 1]; ++e) {
                entries.emplace_back(static_cast<std::uint32_t>(i), a.indices[e], a.values[e]);
                entries.emplace_back(a.indices[e], static_cast<std::uint32_t>(i), a.values[e]);
            }
        }
        std::sort(entries.begin(), entries.end());
        CsrMatrix sym;
        sym.n = n;
        sym.offsets.assign(n + 1, 0);
        for (std::size_t e = 0; e < entries.size(); ++e) {
            const auto [r, c, v] = entries[e];
            if (e > 0 && std::get<0>(entries[e - 1]) == r && std::get<1>(entries[e - 1]) == c) {
                sym.values.back() = std::max(sym.values.back(), v);
                continue;
            }
            sym.indices.push_back(c);
            sym.values.push_back(v);
            ++sym.offsets[r + 1];
        }
        std::partial_sum(sym.offsets.begin(), sym.offsets.end(), sym.offsets.begin());
        graph.adjacency = std::move(sym);
    }
    return graph;
}

FeatureGraph build_graph(const Centers &centers, const FeatureMatrix &features, const GraphParams &params,
                         std::span<const std::uint32_t> anchors, std::span<const std::uint32_t> suppressed)
{
    return build_graph(prepare_graph(centers, features, params), params, anchors, suppressed);
}

FeatureMatrix ActiveNodes::gather(const FeatureMatrix &per_gaussian) const
{
    FeatureMatrix out(static_cast<Eigen::Index>(index.size()), per_gaussian.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= per_gaussian.rows()) {
            throw ValidationError("feature rows do not cover every active Gaussian");
        }
        out.row(static_cast<Eigen::Index>(k)) = per_gaussian.row(index[k]);
    }
    return out;
}

FeatureMatrix ActiveNodes::scatter(const FeatureMatrix &per_node, std::size_t gaussian_count) const
{
    FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(gaussian_count), per_node.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
        out.row(index[k]) = per_node.row(static_cast<Eigen::Index>(k));
    }
    return out;
}

Eigen::VectorXd ActiveNodes::scatter(const Eigen::VectorXd &per_node, std::size_t gaussian_count) const
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(gaussian_count));
    for (std::size_t k = 0; k < index.size(); ++k) {
        out[index[k]] = per_node[static_cast<Eigen::Index>(k)];
    }
    return out;
}

ActiveNodes active_nodes(const GaussianScene &scene)
{
    ActiveNodes nodes;
    nodes.index = scene.active_indices();
    nodes.centers.resize(static_cast<Eigen::Index>(nodes.index.size()), 3);
    for (std::size_t k = 0; k < nodes.index.size(); ++k) {
        nodes.centers.row(static_cast<Eigen::Index>(k)) = scene.gaussians[nodes.index[k]].mean.transpose();
    }
    return nodes;
}

DiffusionState diffuse(const FeatureGraph &graph, const Eigen::VectorXd &g0, int steps,
                       std::vector<std::uint32_t> anchors)
{
    if (steps < 0) {
        throw ValidationError("diffuse: steps must be >= 0");
    }
    if (static_cast<std::size_t>(g0.size()) != graph.adjacency.n) {
        throw ValidationError("diffuse: g0 has " + std::to_string(g0.size()) + " entries, graph has " +
                              std::to_string(graph.adjacency.n) + " nodes");
    }
    if (!g0.allFinite()) {
        throw ValidationError("diffuse: g0 contains non-finite values");
    }
    DiffusionState state;
    state.g = g0;
    state.anchors = std::move(anchors);
    for (int t = 0; t < steps; ++t) {
        const double norm = state.g.norm();
        if (!(norm > 0.0)) {
            if (t == 0) {
                std::cerr << "warning: diffuse called with an all-zero vector; diffusion is undefined\n";
            }
            state.g.setZero();
            state.degenerate = true;
            state.step = t;
            return state;
        }
        state.g = graph.adjacency.multiply(Eigen::VectorXd(state.g / norm));
        state.step = t + 1;
    }
    return state;
}

FeatureMatrix diffuse_matrix(const FeatureGraph &graph, const FeatureMatrix &g0, int steps, MatrixNorm norm)
{
    if (steps < 0) {
        throw ValidationError("diffuse_matrix: steps must be >= 0");
    }
    if (static_cast<std::size_t>(g0.rows()) != graph.adjacency.n) {
        throw ValidationError("diffuse_matrix: row count does not match graph size");
    }
    FeatureMatrix g = g0;
    for (int t = 0; t < steps; ++t) {
        if (norm == MatrixNorm::frobenius) {
            const double fn = g.norm();
            if (!(fn > 0.0)) {
                std::cerr << "warning: diffuse_matrix called with an all-zero matrix\n";
                return FeatureMatrix::Zero(g.rows(), g.cols());
            }
            g /= fn;
        } else {
            for (Eigen::Index c = 0; c < g.cols(); ++c) {
                const double cn = g.col(c).norm();
                if (cn > 0.0) {
                    g.col(c) /= cn;
                }
            }
        }
        g = graph.adjacency.multiply(g);
    }
    return g;
}

} // namespace splatlift
