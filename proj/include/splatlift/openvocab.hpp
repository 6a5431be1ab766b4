// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/feature_graph.hpp"
#include "splatlift/feature_io.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/segmentation.hpp"
#include "splatlift/types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace splatlift {

struct QueryEmbedding {
    std::string text;
    /// Unit length.
    Eigen::VectorXd vector;
};

inline constexpr std::array<const char *, 4> kCanonicalPhrases = {"object", "things", "stuff", "texture"};

struct CanonicalSet {
    std::array<QueryEmbedding, 4> entries;

    [[nodiscard]] int dim() const { return static_cast<int>(entries[0].vector.size()); }
    void validate() const;
};

/// Rank-1 SPLF vector with a sidecar {"text": ...}. Vectors are rescaled to
/// unit length on read; a zero vector is rejected.
void write_embedding(const std::filesystem::path &path, const QueryEmbedding &emb);
[[nodiscard]] QueryEmbedding read_embedding(const std::filesystem::path &path);

/// Rank-2 SPLF (4 x c) with a sidecar {"texts": [...]}.
void write_canonical_set(const std::filesystem::path &path, const CanonicalSet &set);
[[nodiscard]] CanonicalSet read_canonical_set(const std::filesystem::path &path);

/// Deterministic unit vector seeded by the FNV-1a hash of `text`.
[[nodiscard]] QueryEmbedding mock_embedding(const std::string &text, int dim);
[[nodiscard]] CanonicalSet mock_canonical_set(int dim);

/// Aggregates each scale with sliding_window_aggregate and averages the
/// scales that cover a pixel.
[[nodiscard]] FeatureMap pool_multiscale(std::span<const std::vector<PatchGrid>> scales, int height, int width);

/// min_i exp(T a) / (exp(T a) + exp(T c_i)) with a = feat.q and c_i =
/// feat.canon_i, evaluated as a logistic of the logit difference.
[[nodiscard]] double relevancy(const Eigen::Ref<const Eigen::VectorXd> &feat, const QueryEmbedding &q,
                               const CanonicalSet &canon, double temperature = 10.0);

struct RelevancyMap {
    FeatureMap scores;
    std::string query;
    double bandwidth = 0.0;
};

/// K x K mean filter with edge-clamped padding.
[[nodiscard]] FeatureMap box_filter(const FeatureMap &map, int kernel);

/// Relevancy of every l2-normalized pixel feature, then box-filtered.
[[nodiscard]] RelevancyMap relevancy_map(const FeatureMap &rendered, const QueryEmbedding &q,
                                         const CanonicalSet &canon, double temperature = 10.0, int kernel = 11);

struct BandwidthSelection {
    std::string camera_id;
    RelevancyMap best;
    std::size_t best_index = 0;
    /// Peak relevancy per candidate bandwidth.
    std::vector<double> peaks;
};

struct OpenVocabOptions {
    std::vector<double> bandwidths = {0.0004, 0.002, 0.01, 0.05};
    int k = 16;
    int steps = 10;
    double temperature = 10.0;
    int kernel = 11;
    std::size_t median_sample_size = 1'000'000;
    std::uint64_t seed = 0;
    RasterConfig raster;

    void validate() const;
};

/// Per camera, diffuses the CLIP features on the graph built from the DINO
/// features (no unary term) for every bandwidth, renders, and keeps the map
/// with the largest peak relevancy; ties go to the earlier bandwidth.
[[nodiscard]] std::vector<BandwidthSelection> select_bandwidth(const GaussianScene &scene,
                                                               const GaussianFeatures &clip,
                                                               const GaussianFeatures &dino,
                                                               const QueryEmbedding &q, const CanonicalSet &canon,
                                                               std::span<const Camera> cameras,
                                                               const OpenVocabOptions &opts = {});

/// Highest-scoring pixel; the first in row-major order on ties.
[[nodiscard]] PixelCoord localize(const RelevancyMap &map);

struct TopQPrompts {
    double q = 0.0;
    std::vector<PixelCoord> candidates;
    std::vector<PromptSet> prompts;
};

/// Candidates are the ceil(q H W) best pixels with q = 0.4 * mean score
/// (row-major order on ties); prompts are drawn as in sample_prompts.
[[nodiscard]] TopQPrompts top_q_prompts(const RelevancyMap &map, std::uint64_t seed, int n_prompts = 3,
                                        int n_repeats = 10);

} // namespace splatlift
