// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/segmentation.hpp"

#include "splatlift/error.hpp"
#include "splatlift/image_io.hpp"
#include "splatlift/rng.hpp"
#include "splatlift/threshold.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace splatlift {

namespace {

FeatureMap render_scalar(const GaussianScene &scene, const Camera &cam, const Eigen::VectorXd &g,
                         const RasterConfig &cfg)
{
    FeatureMatrix col(g.size(), 1);
    col.col(0) = g;
    return to_feature_map(render(scene, cam, col, cfg), cam.id);
}

void check_single_channel(const FeatureMap &m, const char *what)
{
    if (m.channels != 1) {
        throw ValidationError(std::string(what) + ": expected a single-channel map, got " +
                              std::to_string(m.channels) + " channels");
    }
}

void check_same_dims(const FeatureMap &a, const FeatureMap &b, const char *what)
{
    if (a.width != b.width || a.height != b.height) {
        throw ValidationError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                              std::to_string(b.height) + ")");
    }
}

// Cuts midway between the 256 levels spanning [lo, hi].
std::vector<double> tuning_grid(double lo, double hi)
{
    std::vector<double> grid;
    for (int k = 0; k < 255; ++k) {
        grid.push_back(lo + (hi - lo) * (k + 0.5) / 255.0);
    }
    return grid;
}

void attach_iou(ViewSegmentation &view, const GroundTruth *gt)
{
    if (!gt) {
        return;
    }
    const auto it = gt->find(view.camera_id);
    if (it != gt->end()) {
        view.iou = iou(view.mask, it->second);
    }
}

FeatureMap binary_from(const FeatureMap &score, double threshold)
{
    FeatureMap mask(score.height, score.width, 1);
    mask.camera_id = score.camera_id;
    for (std::size_t p = 0; p < score.data.size(); ++p) {
        mask.data[p] = score.data[p] > threshold ? 1.0f : 0.0f;
    }
    return mask;
}

/// Picks the normalized-score threshold that best reproduces the reference mask.
double tune_threshold(const FeatureMap &ref_score, const FeatureMap &ref_mask)
{
    FeatureMap objective = ref_mask;
    for (float &v : objective.data) {
        v = v > 0.0f ? 1.0f : 0.0f;
    }
    const auto [lo, hi] = std::minmax_element(ref_score.data.begin(), ref_score.data.end());
    double best_t = 0.0;
    double best = -1.0;
    for (double t : tuning_grid(*lo, *hi)) {
        const double score = iou(binary_from(ref_score, t), objective);
        if (score > best) {
            best = score;
            best_t = t;
        }
    }
    return best_t;
}

/// Shared tail of the segmentation pipelines: normalize, threshold, score.
SegmentationResult finish_views(std::vector<FeatureMap> scores, const SegmentationConfig &cfg,
                                const ForegroundSpec &fg, const std::function<FeatureMap()> &ref_score,
                                const GroundTruth *gt)
{
    SegmentationResult res;
    std::optional<double> fixed;
    if (cfg.threshold.mode == ThresholdMode::tuned) {
        if (fg.kind != ForegroundKind::reference_mask) {
            throw ValidationError("threshold mode 'tuned' needs a reference mask, not scribbles");
        }
        fixed = tune_threshold(normalize_by_mean(ref_score()), fg.mask);
        res.tuned_threshold = fixed;
    }
    for (FeatureMap &raw : scores) {
        ViewSegmentation view;
        view.camera_id = raw.camera_id;
        view.score = normalize_by_mean(raw);
        if (fixed) {
            view.threshold = *fixed;
            view.mask = binary_from(view.score, *fixed);
        } else {
            view.mask = binarize(view.score, cfg.threshold, &view.threshold);
        }
        attach_iou(view, gt);
        res.views.push_back(std::move(view));
    }
    return res;
}

} // namespace

ForegroundKind parse_foreground_kind(const std::string &name)
{
    if (name == "scribbles") return ForegroundKind::scribbles;
    if (name == "reference_mask" || name == "mask") return ForegroundKind::reference_mask;
    throw ValidationError("unknown foreground kind '" + name + "' (expected scribbles or reference_mask)");
}

std::string to_string(ForegroundKind kind)
{
    return kind == ForegroundKind::scribbles ? "scribbles" : "reference_mask";
}

void ForegroundSpec::validate() const
{
    check_single_channel(mask, "foreground mask");
    bool any = false;
    for (float v : mask.data) {
        if (!std::isfinite(v) || v < 0.0f) {
            throw ValidationError("foreground mask values must be finite and non-negative");
        }
        any = any || v > 0.0f;
    }
    if (!any) {
        throw ValidationError("foreground mask for camera '" + camera_id + "' has no positive pixel");
    }
}

ThresholdSpec parse_threshold(const std::string &text)
{
    if (text == "li") return {ThresholdMode::li, 0.0};
    if (text == "otsu") return {ThresholdMode::otsu, 0.0};
    if (text == "tuned") return {ThresholdMode::tuned, 0.0};
    std::string num = text;
    if (num.rfind("fixed:", 0) == 0) {
        num = num.substr(6);
    }
    try {
        std::size_t used = 0;
        const double v = std::stod(num, &used);
        if (used == num.size() && std::isfinite(v)) {
            return {ThresholdMode::fixed, v};
        }
    } catch (const std::exception &) {
    }
    throw ValidationError("invalid threshold '" + text + "' (expected li, otsu, tuned, a number or fixed:<v>)");
}

std::string to_string(const ThresholdSpec &spec)
{
    switch (spec.mode) {
    case ThresholdMode::li:
        return "li";
    case ThresholdMode::otsu:
        return "otsu";
    case ThresholdMode::tuned:
        return "tuned";
    case ThresholdMode::fixed:
        break;
    }
    return "fixed:" + std::to_string(spec.value);
}

void SegmentationConfig::validate() const
{
    if (n_prompts < 1 || n_repeats < 1) {
        throw ValidationError("segmentation: n_prompts and n_repeats must be >= 1");
    }
    if (!(tau > 0.0)) {
        throw ValidationError("segmentation: tau must be positive");
    }
    if (T < 0) {
        throw ValidationError("segmentation: T must be >= 0");
    }
    if (!(g0_threshold >= 0.0)) {
        throw ValidationError("segmentation: g0_threshold must be non-negative");
    }
    graph.validate();
}

UnaryMode SegmentationConfig::unary_for(ForegroundKind kind) const
{
    if (scorer) {
        return *scorer;
    }
    return kind == ForegroundKind::scribbles ? UnaryMode::cosine_to_mean : UnaryMode::logistic;
}

SegmentationConfig parse_segmentation_config(const std::string &json_text, const SegmentationConfig &base)
{
    SegmentationConfig cfg = base;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string("segmentation config: ") + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("segmentation config must be a JSON object");
    }
    try {
        for (const auto &[key, val] : j.items()) {
            if (key == "tau") cfg.tau = val.get<double>();
            else if (key == "n_prompts") cfg.n_prompts = val.get<int>();
            else if (key == "n_repeats") cfg.n_repeats = val.get<int>();
            else if (key == "threshold") cfg.threshold = val.is_number() ? ThresholdSpec{ThresholdMode::fixed, val.get<double>()}
                                                                          : parse_threshold(val.get<std::string>());
            else if (key == "scorer" || key == "unary_mode") {
                const auto name = val.get<std::string>();
                cfg.scorer = name == "cosine" ? UnaryMode::cosine_to_mean : parse_unary_mode(name);
            }
            else if (key == "T") cfg.T = val.get<int>();
            else if (key == "g0_threshold") cfg.g0_threshold = val.get<double>();
            else if (key == "seed") cfg.seed = val.get<std::uint64_t>();
            else if (key == "k") cfg.graph.k = val.get<int>();
            else if (key == "bandwidth_edge") cfg.graph.bandwidth_edge = val.get<double>();
            else if (key == "bandwidth_unary") cfg.graph.bandwidth_unary = val.get<double>();
            else if (key == "symmetrize") cfg.graph.symmetrize = val.get<bool>();
            else if (key == "median_sample_size") cfg.graph.median_sample_size = val.get<std::size_t>();
            else throw ValidationError("segmentation config: unknown key '" + key + "'");
        }
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(std::string("segmentation config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

double iou(const FeatureMap &pred, const FeatureMap &gt)
{
    check_single_channel(pred, "iou");
    check_single_channel(gt, "iou");
    check_same_dims(pred, gt, "iou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < pred.data.size(); ++p) {
        const bool a = pred.data[p] > 0.5f;
        const bool b = gt.data[p] > 0.5f;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

FeatureMap normalize_by_mean(const FeatureMap &map)
{
    check_single_channel(map, "normalize_by_mean");
    double sum = 0.0;
    for (float v : map.data) {
        sum += v;
    }
    FeatureMap out = map;
    const double mean = map.data.empty() ? 0.0 : sum / static_cast<double>(map.data.size());
    if (mean > 0.0) {
        for (float &v : out.data) {
            v = static_cast<float>(v / mean);
        }
    }
    return out;
}

FeatureMap binarize(const FeatureMap &map, const ThresholdSpec &spec, double *chosen)
{
    check_single_channel(map, "binarize");
    double t = spec.value;
    switch (spec.mode) {
    case ThresholdMode::fixed:
        break;
    case ThresholdMode::li:
    case ThresholdMode::otsu: {
        const auto [lo, hi] = std::minmax_element(map.data.begin(), map.data.end());
        if (map.data.empty() || *lo == *hi) {
            // nothing to separate
            t = map.data.empty() ? 0.0 : *hi;
        } else {
            t = spec.mode == ThresholdMode::li ? threshold_li(map.data) : threshold_otsu(map.data);
        }
        break;
    }
    case ThresholdMode::tuned:
        throw ValidationError("binarize: tuned thresholds need a reference mask");
    }
    if (chosen) {
        *chosen = t;
    }
    return binary_from(map, t);
}

InitialWeights init_g0(const GaussianScene &scene, std::span<const ForegroundSpec> fg, double g0_threshold,
                       const UpliftOptions &opts)
{
    if (fg.empty()) {
        throw ValidationError("init_g0: no foreground masks");
    }
    std::vector<ViewFeatures> frames;
    for (const auto &spec : fg) {
        spec.validate();
        frames.push_back({&scene.camera(spec.camera_id), &spec.mask});
    }
    const UpliftResult up = uplift(scene, frames, opts);
    InitialWeights out;
    out.g0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(scene.size()));
    const std::vector<std::uint32_t> active = scene.active_indices();
    double sum = 0.0;
    for (auto i : active) {
        sum += up.features.values(i, 0);
    }
    const double mean = active.empty() ? 0.0 : sum / static_cast<double>(active.size());
    if (!(mean > 0.0)) {
        throw ValidationError("init_g0: the foreground mask does not reach any Gaussian");
    }
    for (auto i : active) {
        const double v = up.features.values(i, 0) / mean;
        if (v >= g0_threshold && v > 0.0) {
            out.g0[i] = v;
            out.anchors.push_back(i);
        }
    }
    if (out.anchors.empty()) {
        throw ValidationError("init_g0: no anchor Gaussian reaches g0_threshold " + std::to_string(g0_threshold) +
                              "; try a lower threshold");
    }
    return out;
}

InitialWeights init_g0(const GaussianScene &scene, const ForegroundSpec &fg, double g0_threshold,
                       const UpliftOptions &opts)
{
    return init_g0(scene, std::span(&fg, 1), g0_threshold, opts);
}

ForegroundDiffusion diffuse_foreground(const GaussianScene &scene, const GaussianFeatures &features,
                                       std::span<const ForegroundSpec> fg, const SegmentationConfig &cfg,
                                       std::span<const std::uint32_t> suppressed)
{
    cfg.validate();
    if (fg.empty()) {
        throw ValidationError("segment: no foreground given");
    }
    if (static_cast<std::size_t>(features.count()) != scene.size()) {
        throw ValidationError("segment: " + std::to_string(features.count()) + " feature rows for " +
                              std::to_string(scene.size()) + " Gaussians");
    }
    const InitialWeights init = init_g0(scene, fg, cfg.g0_threshold, cfg.uplift);

    ForegroundDiffusion out;
    out.nodes = active_nodes(scene);
    const std::vector<std::uint32_t> &active = out.nodes.index;
    std::vector<std::int64_t> compact(scene.size(), -1);
    for (std::size_t k = 0; k < active.size(); ++k) {
        compact[active[k]] = static_cast<std::int64_t>(k);
    }
    auto to_compact = [&](std::span<const std::uint32_t> ids) {
        std::vector<std::uint32_t> ix;
        for (auto i : ids) {
            if (i >= scene.size()) {
                throw ValidationError("segment: node index out of range");
            }
            if (compact[i] >= 0) {
                ix.push_back(static_cast<std::uint32_t>(compact[i]));
            }
        }
        return ix;
    };
    const std::vector<std::uint32_t> anchors = to_compact(init.anchors);
    const std::vector<std::uint32_t> muted = to_compact(suppressed);

    GraphParams params = cfg.graph;
    params.unary_mode = cfg.unary_for(fg.front().kind);
    out.graph = build_graph(out.nodes.centers, out.nodes.gather(features.values), params, anchors, muted);
    Eigen::VectorXd g0c(static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
        g0c[static_cast<Eigen::Index>(k)] = init.g0[active[k]];
    }
    const DiffusionState state = diffuse(out.graph, g0c, cfg.T, anchors);
    out.g = out.nodes.scatter(state.g, scene.size());
    out.anchors = init.anchors;
    out.unary = params.unary_mode;
    out.degenerate = state.degenerate;
    return out;
}

SegmentationResult segment_by_diffusion(const GaussianScene &scene, const GaussianFeatures &features,
                                        std::span<const ForegroundSpec> fg, const SegmentationConfig &cfg,
                                        std::span<const Camera> targets, const GroundTruth *gt,
                                        std::span<const std::uint32_t> suppressed)
{
    ForegroundDiffusion run = diffuse_foreground(scene, features, fg, cfg, suppressed);
    std::vector<FeatureMap> scores;
    for (const Camera &cam : targets) {
        scores.push_back(render_scalar(scene, cam, run.g, cfg.uplift.raster));
    }
    SegmentationResult res = finish_views(
        std::move(scores), cfg, fg.front(),
        [&] { return render_scalar(scene, scene.camera(fg.front().camera_id), run.g, cfg.uplift.raster); }, gt);
    res.g = std::move(run.g);
    res.anchors = std::move(run.anchors);
    res.unary = run.unary;
    return res;
}

SegmentationResult segment_by_diffusion(const GaussianScene &scene, const GaussianFeatures &features,
                                        const ForegroundSpec &fg, const SegmentationConfig &cfg,
                                        std::span<const Camera> targets, const GroundTruth *gt)
{
    return segment_by_diffusion(scene, features, std::span(&fg, 1), cfg, targets, gt);
}

SegmentationResult segment_geometry_only(const GaussianScene &scene, const ForegroundSpec &fg,
                                         const SegmentationConfig &cfg, std::span<const Camera> targets,
                                         const GroundTruth *gt)
{
    fg.validate();
    const Camera &ref = scene.camera(fg.camera_id);
    std::vector<FeatureMap> scores;
    for (const Camera &cam : targets) {
        scores.push_back(reproject_mask(scene, ref, fg.mask, cam, cfg.uplift));
    }
    return finish_views(
        std::move(scores), cfg, fg, [&] { return reproject_mask(scene, ref, fg.mask, ref, cfg.uplift); }, gt);
}

FeatureMap score_foreground_cosine(const FeatureMap &rendered, const FeatureMatrix &ref_features, double bandwidth,
                                   double scale)
{
    if (ref_features.rows() == 0) {
        throw ValidationError("score_foreground_cosine: no reference features");
    }
    if (ref_features.cols() != rendered.channels) {
        throw ValidationError("score_foreground_cosine: channel mismatch");
    }
    if (!(bandwidth > 0.0) || !(scale > 0.0)) {
        throw ValidationError("score_foreground_cosine: bandwidth and scale must be positive");
    }
    const FeatureMatrix ref = l2_normalize_rows(ref_features);
    Eigen::RowVectorXd mean = ref.colwise().mean();
    if (mean.norm() > 0.0) {
        mean.normalize();
    }
    FeatureMap out(rendered.height, rendered.width, 1);
    out.camera_id = rendered.camera_id;
    const double denom = bandwidth * scale * scale;
    Eigen::RowVectorXd f(rendered.channels);
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        const auto px = rendered.pixel(p);
        for (int k = 0; k < rendered.channels; ++k) {
            f[k] = px[static_cast<std::size_t>(k)];
        }
        const double norm = f.norm();
        if (!(norm > 0.0)) {
            out.data[p] = 0.0f;
            continue;
        }
        out.data[p] = static_cast<float>(std::exp(-(f / norm - mean).squaredNorm() / denom));
    }
    return out;
}

FeatureMap score_foreground_logistic(const FeatureMap &rendered_ref, const FeatureMap &fg_mask,
                                     const FeatureMap &rendered_target, const LogisticOptions &opts)
{
    check_single_channel(fg_mask, "score_foreground_logistic");
    check_same_dims(rendered_ref, fg_mask, "score_foreground_logistic");
    if (rendered_ref.channels != rendered_target.channels) {
        throw ValidationError("score_foreground_logistic: channel mismatch between reference and target");
    }
    const int c = rendered_ref.channels;
    auto normalized_rows = [c](const FeatureMap &m) {
        FeatureMatrix x(static_cast<Eigen::Index>(m.pixel_count()), c);
        for (std::size_t p = 0; p < m.pixel_count(); ++p) {
            for (int k = 0; k < c; ++k) {
                x(static_cast<Eigen::Index>(p), k) = m.pixel(p)[static_cast<std::size_t>(k)];
            }
        }
        return l2_normalize_rows(x);
    };
    std::vector<std::uint8_t> positive(fg_mask.pixel_count());
    for (std::size_t p = 0; p < positive.size(); ++p) {
        positive[p] = fg_mask.data[p] > 0.0f ? 1 : 0;
    }
    const LogisticModel model = fit_logistic(normalized_rows(rendered_ref), positive, opts);
    const FeatureMatrix target = normalized_rows(rendered_target);
    FeatureMap out(rendered_target.height, rendered_target.width, 1);
    out.camera_id = rendered_target.camera_id;
    for (Eigen::Index p = 0; p < target.rows(); ++p) {
        out.data[static_cast<std::size_t>(p)] = static_cast<float>(model.predict(Eigen::VectorXd(target.row(p).transpose())));
    }
    return out;
}

SegmentationResult segment_by_scoring(const GaussianScene &scene, const GaussianFeatures &features,
                                      const ForegroundSpec &fg, const SegmentationConfig &cfg,
                                      std::span<const Camera> targets, double bandwidth, const GroundTruth *gt)
{
    fg.validate();
    const Camera &ref_cam = scene.camera(fg.camera_id);
    const FeatureMap ref = to_feature_map(render(scene, ref_cam, features.values, cfg.uplift.raster), ref_cam.id);
    const FeatureMap mask = ref_cam.height == fg.mask.height && ref_cam.width == fg.mask.width
                                ? fg.mask
                                : resize_bilinear(fg.mask, ref_cam.height, ref_cam.width);
    const bool logistic = fg.kind == ForegroundKind::reference_mask;
    FeatureMatrix ref_rows;
    if (!logistic) {
        std::vector<std::size_t> picked;
        for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
            if (mask.data[p] > 0.0f) {
                picked.push_back(p);
            }
        }
        ref_rows.resize(static_cast<Eigen::Index>(picked.size()), ref.channels);
        for (std::size_t r = 0; r < picked.size(); ++r) {
            for (int k = 0; k < ref.channels; ++k) {
                ref_rows(static_cast<Eigen::Index>(r), k) = ref.pixel(picked[r])[static_cast<std::size_t>(k)];
            }
        }
    }
    auto score = [&](const Camera &cam) {
        const FeatureMap rendered = to_feature_map(render(scene, cam, features.values, cfg.uplift.raster), cam.id);
        return logistic ? score_foreground_logistic(ref, mask, rendered, cfg.graph.logistic)
                        : score_foreground_cosine(rendered, ref_rows, bandwidth);
    };
    std::vector<FeatureMap> scores;
    for (const Camera &cam : targets) {
        scores.push_back(score(cam));
    }
    return finish_views(std::move(scores), cfg, fg, [&] { return score(ref_cam); }, gt);
}

std::vector<PromptSet> sample_prompts(const std::vector<PixelCoord> &candidates, const std::string &camera_id,
                                      int n_prompts, int n_repeats, std::uint64_t seed)
{
    if (n_prompts < 1 || n_repeats < 1) {
        throw ValidationError("sample_prompts: n_prompts and n_repeats must be >= 1");
    }
    if (candidates.empty()) {
        throw ValidationError("sample_prompts: empty candidate set");
    }
    SplitMix64 rng(seed);
    std::vector<PixelCoord> pool = candidates;
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(n_prompts));
    std::vector<PromptSet> sets;
    for (int r = 0; r < n_repeats; ++r) {
        // each repeat shuffles the candidates afresh from row-major order
        pool = candidates;
        PromptSet set;
        set.camera_id = camera_id;
        set.repeat_index = r;
        for (std::size_t k = 0; k < take; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.bounded(pool.size() - k));
            std::swap(pool[k], pool[j]);
            set.points.push_back(pool[k]);
        }
        sets.push_back(std::move(set));
    }
    return sets;
}

std::vector<PromptSet> generate_prompts(const GaussianScene &scene, const ForegroundSpec &fg, const Camera &target,
                                        double tau, int n_prompts, int n_repeats, std::uint64_t seed,
                                        const UpliftOptions &opts)
{
    fg.validate();
    if (!(tau > 0.0)) {
        throw ValidationError("generate_prompts: tau must be positive");
    }
    const FeatureMap reproj = normalize_by_mean(reproject_mask(scene, scene.camera(fg.camera_id), fg.mask, target, opts));
    std::vector<PixelCoord> candidates;
    float peak = 0.0f;
    for (int y = 0; y < reproj.height; ++y) {
        for (int x = 0; x < reproj.width; ++x) {
            const float v = reproj.at(y, x);
            peak = std::max(peak, v);
            if (v > tau) {
                candidates.push_back({x, y});
            }
        }
    }
    if (candidates.empty()) {
        throw ValidationError("generate_prompts: no pixel of camera '" + target.id + "' exceeds tau = " +
                              std::to_string(tau) + " (max normalized value " + std::to_string(peak) + ")");
    }
    return sample_prompts(candidates, target.id, n_prompts, n_repeats, seed);
}

std::string prompt_to_json(const PromptSet &prompt)
{
    nlohmann::json j;
    j["camera_id"] = prompt.camera_id;
    j["repeat_index"] = prompt.repeat_index;
    j["points"] = nlohmann::json::array();
    for (const auto &p : prompt.points) {
        j["points"].push_back({p.x, p.y});
    }
    return j.dump();
}

PromptSet prompt_from_json(const std::string &text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        PromptSet p;
        p.camera_id = j.at("camera_id").get<std::string>();
        p.repeat_index = j.value("repeat_index", 0);
        for (const auto &pt : j.at("points")) {
            if (!pt.is_array() || pt.size() != 2) {
                throw ValidationError("prompt points must be [x, y] pairs");
            }
            p.points.push_back({pt[0].get<int>(), pt[1].get<int>()});
        }
        return p;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("prompt JSON: ") + e.what());
    }
}

MockMaskPredictor::MockMaskPredictor(GroundTruth gt, int dilation, double flip_probability, std::uint64_t seed)
    : gt_(std::move(gt)), dilation_(dilation), flip_probability_(flip_probability), seed_(seed)
{
    if (dilation_ < 0 || !(flip_probability_ >= 0.0 && flip_probability_ <= 1.0)) {
        throw ValidationError("MockMaskPredictor: invalid dilation or flip probability");
    }
}

FeatureMap MockMaskPredictor::predict(const Camera &camera, const PromptSet &prompt)
{
    const auto it = gt_.find(camera.id);
    if (it == gt_.end()) {
        throw ValidationError("MockMaskPredictor: no ground truth for camera '" + camera.id + "'");
    }
    const FeatureMap &gt = it->second;
    FeatureMap out(gt.height, gt.width, 1);
    out.camera_id = camera.id;
    const bool hit = std::any_of(prompt.points.begin(), prompt.points.end(), [&](const PixelCoord &p) {
        return p.x >= 0 && p.y >= 0 && p.x < gt.width && p.y < gt.height && gt.at(p.y, p.x) > 0.5f;
    });
    if (hit) {
        for (int y = 0; y < gt.height; ++y) {
            for (int x = 0; x < gt.width; ++x) {
                bool on = false;
                for (int dy = -dilation_; dy <= dilation_ && !on; ++dy) {
                    for (int dx = -dilation_; dx <= dilation_ && !on; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        on = yy >= 0 && xx >= 0 && yy < gt.height && xx < gt.width && gt.at(yy, xx) > 0.5f;
                    }
                }
                out.at(y, x) = on ? 1.0f : 0.0f;
            }
        }
    }
    if (flip_probability_ > 0.0) {
        SplitMix64 rng(seed_ ^ fnv1a64(camera.id) ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(prompt.repeat_index + 1)));
        for (float &v : out.data) {
            if (rng.uniform() < flip_probability_) {
                v = 1.0f - v;
            }
        }
    }
    return out;
}

DirectoryMaskPredictor::DirectoryMaskPredictor(std::filesystem::path dir, std::string command)
    : dir_(std::move(dir)), command_(std::move(command))
{
}

FeatureMap DirectoryMaskPredictor::predict(const Camera &camera, const PromptSet &prompt)
{
    const std::string stem = camera.id + "_" + std::to_string(prompt.repeat_index);
    std::filesystem::create_directories(dir_ / "prompts");
    std::filesystem::create_directories(dir_ / "masks");
    {
        std::ofstream out(dir_ / "prompts" / (stem + ".json"));
        if (!out) {
            throw IoError("cannot write prompt file in '" + dir_.string() + "'");
        }
        out << prompt_to_json(prompt) << '\n';
    }
    if (!command_.empty()) {
        const std::string cmd = command_ + " '" + dir_.string() + "'";
        if (std::system(cmd.c_str()) != 0) {
            throw IoError("mask predictor command failed: " + cmd);
        }
    }
    const auto mask_path = dir_ / "masks" / (stem + ".png");
    if (!std::filesystem::exists(mask_path)) {
        throw IoError("mask predictor did not produce '" + mask_path.string() + "'");
    }
    FeatureMap mask = read_mask(mask_path);
    mask.camera_id = camera.id;
    return mask;
}

FeatureMap average_external_masks(std::span<const FeatureMap> masks, const std::optional<ThresholdSpec> &threshold)
{
    if (masks.empty()) {
        throw ValidationError("average_external_masks: no masks");
    }
    FeatureMap mean(masks.front().height, masks.front().width, 1);
    mean.camera_id = masks.front().camera_id;
    std::vector<double> acc(mean.data.size(), 0.0);
    for (const auto &m : masks) {
        check_single_channel(m, "average_external_masks");
        check_same_dims(m, masks.front(), "average_external_masks");
        for (std::size_t p = 0; p < acc.size(); ++p) {
            acc[p] += m.data[p];
        }
    }
    for (std::size_t p = 0; p < acc.size(); ++p) {
        mean.data[p] = static_cast<float>(acc[p] / static_cast<double>(masks.size()));
    }
    if (!threshold) {
        return mean;
    }
    return binarize(mean, *threshold);
}

FeatureMap predict_and_average(MaskPredictor &predictor, const Camera &camera, std::span<const PromptSet> prompts,
                               const std::optional<ThresholdSpec> &threshold)
{
    std::vector<FeatureMap> masks;
    for (const auto &p : prompts) {
        FeatureMap m = predictor.predict(camera, p);
        if (m.height != camera.height || m.width != camera.width) {
            m = resize_bilinear(m, camera.height, camera.width);
        }
        masks.push_back(std::move(m));
    }
    return average_external_masks(masks, threshold);
}

TuneResult tune_hyperparameters(std::span<const SegmentationConfig> candidates, const FeatureMap &objective,
                                const std::function<FeatureMap(const SegmentationConfig &)> &pipeline)
{
    if (candidates.empty()) {
        throw ValidationError("tune_hyperparameters: empty candidate grid");
    }
    TuneResult res;
    double best = -1.0;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const double score = iou(pipeline(candidates[k]), objective);
        res.ious.push_back(score);
        if (score > best) {
            best = score;
            res.best_index = k;
        }
    }
    res.best = candidates[res.best_index];
    return res;
}

} // namespace splatlift
