// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "splatlift/feature_graph.hpp"
#include "splatlift/feature_io.hpp"
#include "splatlift/logistic.hpp"
#include "splatlift/scene.hpp"
#include "splatlift/types.hpp"
#include "splatlift/uplift.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace splatlift {

enum class ForegroundKind { scribbles, reference_mask };

[[nodiscard]] ForegroundKind parse_foreground_kind(const std::string &name);
[[nodiscard]] std::string to_string(ForegroundKind kind);

/// A foreground mask drawn on one reference view; any positive value marks
/// foreground and values act as weights.
struct ForegroundSpec {
    std::string camera_id;
    FeatureMap mask;
    ForegroundKind kind = ForegroundKind::scribbles;

    void validate() const;
};

enum class ThresholdMode { fixed, li, otsu, tuned };

struct ThresholdSpec {
    ThresholdMode mode = ThresholdMode::otsu;
    /// Threshold for `fixed`; ignored otherwise.
    double value = 0.5;
};

[[nodiscard]] ThresholdSpec parse_threshold(const std::string &text);
[[nodiscard]] std::string to_string(const ThresholdSpec &spec);

struct SegmentationConfig {
    /// Prompt threshold on mean-normalized reprojected masks.
    double tau = 0.4;
    int n_prompts = 3;
    int n_repeats = 10;
    ThresholdSpec threshold;
    /// Unary term of the diffusion graph; derived from the foreground kind
    /// when unset (scribbles: cosine_to_mean, reference mask: logistic).
    std::optional<UnaryMode> scorer;
    GraphParams graph;
    int T = 100;
    double g0_threshold = 0.5;
    std::uint64_t seed = 0;
    UpliftOptions uplift;

    void validate() const;
    [[nodiscard]] UnaryMode unary_for(ForegroundKind kind) const;
};

/// Parses the flat JSON form used by the CLI and the service; missing keys
/// keep the values of `base`. "unary_mode" is accepted as an alias of "scorer".
[[nodiscard]] SegmentationConfig parse_segmentation_config(const std::string &json_text,
                                                           const SegmentationConfig &base = {});

// ---------------------------------------------------------------------------
// Masks

/// Intersection over union of two masks (pixels > 0.5 count as set);
/// 1 when both are empty.
[[nodiscard]] double iou(const FeatureMap &pred, const FeatureMap &gt);

/// Binarizes a single-channel map with the given rule (tuned is rejected).
[[nodiscard]] FeatureMap binarize(const FeatureMap &map, const ThresholdSpec &spec, double *chosen = nullptr);

/// Divides a single-channel map by its mean; all-zero maps stay zero.
[[nodiscard]] FeatureMap normalize_by_mean(const FeatureMap &map);

// ---------------------------------------------------------------------------
// Initialization and diffusion

struct InitialWeights {
    /// One entry per scene Gaussian; zero for inactive Gaussians.
    Eigen::VectorXd g0;
    /// Scene indices with g0 > 0, ascending.
    std::vector<std::uint32_t> anchors;
};

/// Uplifts the foreground masks (jointly over their views), divides by the
/// mean over active Gaussians and zeroes entries below g0_threshold.
[[nodiscard]] InitialWeights init_g0(const GaussianScene &scene, std::span<const ForegroundSpec> fg,
                                     double g0_threshold, const UpliftOptions &opts = {});
[[nodiscard]] InitialWeights init_g0(const GaussianScene &scene, const ForegroundSpec &fg, double g0_threshold,
                                     const UpliftOptions &opts = {});

struct ForegroundDiffusion {
    /// Final diffusion vector per scene Gaussian (zero for inactive ones).
    Eigen::VectorXd g;
    std::vector<std::uint32_t> anchors;
    UnaryMode unary = UnaryMode::none;
    /// Graph over the active Gaussians, in the node order of `nodes`.
    FeatureGraph graph;
    ActiveNodes nodes;
    bool degenerate = false;
};

/// init_g0 -> graph over active Gaussians -> T diffusion steps. `suppressed`
/// lists scene indices whose unary term is forced to its minimum.
[[nodiscard]] ForegroundDiffusion diffuse_foreground(const GaussianScene &scene, const GaussianFeatures &features,
                                                     std::span<const ForegroundSpec> fg,
                                                     const SegmentationConfig &cfg,
                                                     std::span<const std::uint32_t> suppressed = {});

struct ViewSegmentation {
    std::string camera_id;
    /// Mean-normalized soft score.
    FeatureMap score;
    FeatureMap mask;
    double threshold = 0.0;
    std::optional<double> iou;
};

struct SegmentationResult {
    std::vector<ViewSegmentation> views;
    /// Final diffusion vector per scene Gaussian (zero for inactive ones).
    Eigen::VectorXd g;
    std::vector<std::uint32_t> anchors;
    UnaryMode unary = UnaryMode::none;
    /// Normalized-score threshold picked in tuned mode.
    std::optional<double> tuned_threshold;
};

/// Ground truth per camera id, used to fill ViewSegmentation::iou.
using GroundTruth = std::map<std::string, FeatureMap>;

/// diffuse_foreground, then render g_T per target view, divide by the mean
/// and threshold.
[[nodiscard]] SegmentationResult segment_by_diffusion(const GaussianScene &scene, const GaussianFeatures &features,
                                                      std::span<const ForegroundSpec> fg,
                                                      const SegmentationConfig &cfg,
                                                      std::span<const Camera> targets,
                                                      const GroundTruth *gt = nullptr,
                                                      std::span<const std::uint32_t> suppressed = {});
[[nodiscard]] SegmentationResult segment_by_diffusion(const GaussianScene &scene, const GaussianFeatures &features,
                                                      const ForegroundSpec &fg, const SegmentationConfig &cfg,
                                                      std::span<const Camera> targets,
                                                      const GroundTruth *gt = nullptr);

/// Baseline without features: the foreground mask uplifted from its view
/// and rendered into each target, mean-normalized and thresholded.
[[nodiscard]] SegmentationResult segment_geometry_only(const GaussianScene &scene, const ForegroundSpec &fg,
                                                       const SegmentationConfig &cfg,
                                                       std::span<const Camera> targets,
                                                       const GroundTruth *gt = nullptr);

// ---------------------------------------------------------------------------
// 2D foreground scoring on rendered features

/// exp(-|n(F) - n(mean(n(ref)))|^2 / (bandwidth * scale^2)) per pixel, where
/// n() scales to unit length; zero-norm pixels score 0.
[[nodiscard]] FeatureMap score_foreground_cosine(const FeatureMap &rendered, const FeatureMatrix &ref_features,
                                                 double bandwidth, double scale = 1.0);

/// Logistic model trained on the l2-normalized reference pixels (positives
/// where fg_mask > 0), evaluated on the target frame.
[[nodiscard]] FeatureMap score_foreground_logistic(const FeatureMap &rendered_ref, const FeatureMap &fg_mask,
                                                   const FeatureMap &rendered_target,
                                                   const LogisticOptions &opts = {});

/// Renders uplifted features into the reference and target views and
/// thresholds the foreground score (logistic for reference masks, cosine
/// for scribbles with the given bandwidth).
[[nodiscard]] SegmentationResult segment_by_scoring(const GaussianScene &scene, const GaussianFeatures &features,
                                                    const ForegroundSpec &fg, const SegmentationConfig &cfg,
                                                    std::span<const Camera> targets, double bandwidth = 1.0,
                                                    const GroundTruth *gt = nullptr);

// ---------------------------------------------------------------------------
// External mask predictor prompting

struct PromptSet {
    std::string camera_id;
    int repeat_index = 0;
    std::vector<PixelCoord> points;
};

/// Reprojects the foreground into `target`, divides by the mean and draws
/// n_repeats sets of n_prompts distinct pixels from those above tau. Draws
/// use SplitMix64(seed) with a partial Fisher-Yates shuffle over the
/// row-major candidate list.
[[nodiscard]] std::vector<PromptSet> generate_prompts(const GaussianScene &scene, const ForegroundSpec &fg,
                                                      const Camera &target, double tau, int n_prompts,
                                                      int n_repeats, std::uint64_t seed,
                                                      const UpliftOptions &opts = {});

/// Draws n_repeats sets of n_prompts distinct entries of `candidates`.
[[nodiscard]] std::vector<PromptSet> sample_prompts(const std::vector<PixelCoord> &candidates,
                                                    const std::string &camera_id, int n_prompts, int n_repeats,
                                                    std::uint64_t seed);

[[nodiscard]] std::string prompt_to_json(const PromptSet &prompt);
[[nodiscard]] PromptSet prompt_from_json(const std::string &text);

class MaskPredictor {
public:
    virtual ~MaskPredictor() = default;
    [[nodiscard]] virtual FeatureMap predict(const Camera &camera, const PromptSet &prompt) = 0;
};

/// Stand-in for a promptable segmenter: returns the ground-truth mask of
/// the prompted camera dilated by `dilation` pixels, with every pixel flipped
/// independently with probability `flip_probability`. Prompts that all miss
/// the mask yield an empty mask.
class MockMaskPredictor final : public MaskPredictor {
public:
    MockMaskPredictor(GroundTruth gt, int dilation = 1, double flip_probability = 0.0, std::uint64_t seed = 0);
    [[nodiscard]] FeatureMap predict(const Camera &camera, const PromptSet &prompt) override;

private:
    GroundTruth gt_;
    int dilation_;
    double flip_probability_;
    std::uint64_t seed_;
};

/// File exchange with an external predictor: writes
/// <dir>/prompts/<camera>_<repeat>.json, optionally runs `command` with the
/// exchange directory appended, then reads <dir>/masks/<camera>_<repeat>.png.
class DirectoryMaskPredictor final : public MaskPredictor {
public:
    DirectoryMaskPredictor(std::filesystem::path dir, std::string command = {});
    [[nodiscard]] FeatureMap predict(const Camera &camera, const PromptSet &prompt) override;

private:
    std::filesystem::path dir_;
    std::string command_;
};

/// Pixel-wise mean of equally sized single-channel masks, optionally binarized.
[[nodiscard]] FeatureMap average_external_masks(std::span<const FeatureMap> masks,
                                                const std::optional<ThresholdSpec> &threshold = std::nullopt);

/// Prompts the predictor for each set and averages the returned masks.
[[nodiscard]] FeatureMap predict_and_average(MaskPredictor &predictor, const Camera &camera,
                                             std::span<const PromptSet> prompts,
                                             const std::optional<ThresholdSpec> &threshold);

// ---------------------------------------------------------------------------
// Hyperparameter selection

struct TuneResult {
    std::size_t best_index = 0;
    SegmentationConfig best;
    std::vector<double> ious;
};

/// Evaluates every candidate and returns the one whose mask has the highest
/// IoU with `objective` (first one on ties).
[[nodiscard]] TuneResult tune_hyperparameters(std::span<const SegmentationConfig> candidates,
                                              const FeatureMap &objective,
                                              const std::function<FeatureMap(const SegmentationConfig &)> &pipeline);

} // namespace splatlift
