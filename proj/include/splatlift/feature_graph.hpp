// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/logistic.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splatlift {

using Centers = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

enum class UnaryMode { none, cosine_to_mean, logistic };

[[nodiscard]] UnaryMode parse_unary_mode(const std::string &name);
[[nodiscard]] std::string to_string(UnaryMode mode);

struct GraphParams {
    int k = 16;
    /// Bandwidth b of the edge kernel exp(-|fi - fj|^2 / (b s_f^2)).
    double bandwidth_edge = 1.0;
    /// Bandwidth of the unary term (kernel bandwidth or logistic exponent 1/b).
    double bandwidth_unary = 1.0;
    UnaryMode unary_mode = UnaryMode::none;
    /// Number of random pairs used to estimate the median feature distance.
    std::size_t median_sample_size = 1'000'000;
    std::uint64_t seed = 0;
    /// Replace A by max(A, A^T).
    bool symmetrize = false;
    LogisticOptions logistic;

    void validate() const;
};

/// k nearest neighbors per node, row-major n x k, ordered by (distance, index).
struct NeighborLists {
    int k = 0;
    std::vector<std::uint32_t> indices;

    [[nodiscard]] std::size_t size() const { return k > 0 ? indices.size() / static_cast<std::size_t>(k) : 0; }
    [[nodiscard]] std::span<const std::uint32_t> of(std::size_t i) const
    {
        return {indices.data() + i * static_cast<std::size_t>(k), static_cast<std::size_t>(k)};
    }
};

/// Exact kNN over Euclidean distance using a kd-tree; node i never lists
/// itself, equal distances resolve to the lower index.
[[nodiscard]] NeighborLists knn_graph(const Centers &centers, int k);

[[nodiscard]] double rbf_similarity(const Eigen::Ref<const Eigen::RowVectorXd> &fi,
                                    const Eigen::Ref<const Eigen::RowVectorXd> &fj, double s_f, double bandwidth);

/// Rows scaled to unit l2 norm; zero rows stay zero.
[[nodiscard]] FeatureMatrix l2_normalize_rows(const FeatureMatrix &features);

/// Median of pairwise l2 row distances: exact over all pairs when there are
/// at most `sample_size` of them, otherwise over `sample_size` uniformly
/// drawn pairs (i != j).
[[nodiscard]] double median_pairwise_distance(const FeatureMatrix &features, std::size_t sample_size,
                                              std::uint64_t seed);

/// Square sparse matrix in compressed row form.
struct CsrMatrix {
    std::size_t n = 0;
    std::vector<std::uint64_t> offsets;
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    [[nodiscard]] Eigen::VectorXd multiply(const Eigen::VectorXd &x) const;
    [[nodiscard]] FeatureMatrix multiply(const FeatureMatrix &x) const;
    [[nodiscard]] Eigen::MatrixXd to_dense() const;
};

/// Geometry and feature statistics shared by graphs that differ only in
/// bandwidths or unary terms.
struct GraphBasis {
    NeighborLists neighbors;
    FeatureMatrix normalized;
    double s_f = 1.0;
};

[[nodiscard]] GraphBasis prepare_graph(const Centers &centers, const FeatureMatrix &features, const GraphParams &params);

struct FeatureGraph {
    CsrMatrix adjacency;
    /// P(f_i) in (0, 1]; all ones when unary_mode is none.
    Eigen::VectorXd unary;
    double s_f = 1.0;
    int k = 0;
};

/// A_ij = 1[j in N(i)] S_f(f_i, f_j) sqrt(P(f_i)) sqrt(P(f_j)). `anchors`
/// supply the foreground for the unary term; `suppressed` nodes get the
/// smallest admissible unary value.
[[nodiscard]] FeatureGraph build_graph(const GraphBasis &basis, const GraphParams &params,
                                       std::span<const std::uint32_t> anchors = {},
                                       std::span<const std::uint32_t> suppressed = {});
[[nodiscard]] FeatureGraph build_graph(const Centers &centers, const FeatureMatrix &features,
                                       const GraphParams &params, std::span<const std::uint32_t> anchors = {},
                                       std::span<const std::uint32_t> suppressed = {});

/// Unary term alone, as used by build_graph.
[[nodiscard]] Eigen::VectorXd unary_term(const GraphBasis &basis, const GraphParams &params,
                                         std::span<const std::uint32_t> anchors);

struct DiffusionState {
    Eigen::VectorXd g;
    int step = 0;
    std::vector<std::uint32_t> anchors;
    /// Set when the input was identically zero and diffusion was skipped.
    bool degenerate = false;
};

/// T steps of g <- A (g / |g|_2). The final vector is not renormalized.
[[nodiscard]] DiffusionState diffuse(const FeatureGraph &graph, const Eigen::VectorXd &g0, int steps,
                                     std::vector<std::uint32_t> anchors = {});

/// Active Gaussians of a scene as graph nodes: node k is Gaussian index[k].
struct ActiveNodes {
    std::vector<std::uint32_t> index;
    Centers centers;

    [[nodiscard]] FeatureMatrix gather(const FeatureMatrix &per_gaussian) const;
    /// Node values back to per-Gaussian rows (zero for inactive Gaussians).
    [[nodiscard]] FeatureMatrix scatter(const FeatureMatrix &per_node, std::size_t gaussian_count) const;
    [[nodiscard]] Eigen::VectorXd scatter(const Eigen::VectorXd &per_node, std::size_t gaussian_count) const;
};

[[nodiscard]] ActiveNodes active_nodes(const GaussianScene &scene);

enum class MatrixNorm { frobenius, per_column };

/// Multi-channel diffusion; renormalizes by the Frobenius norm (or each
/// column's norm) before every multiply.
[[nodiscard]] FeatureMatrix diffuse_matrix(const FeatureGraph &graph, const FeatureMatrix &g0, int steps,
                                           MatrixNorm norm = MatrixNorm::frobenius);

} // namespace splatlift
