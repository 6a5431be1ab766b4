// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/uplift.hpp"

#include "splatlift/error.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace splatlift {

namespace {

int check_frames(const GaussianScene &scene, std::span<const ViewFeatures> frames)
{
    if (frames.empty()) {
        throw ValidationError("uplift: empty frame list");
    }
    if (scene.active.size() != scene.size()) {
        throw ValidationError("uplift: scene active mask length mismatch");
    }
    const int c = frames.front().features->channels;
    for (const auto &fr : frames) {
        if (!fr.camera || !fr.features) {
            throw ValidationError("uplift: frame without camera or features");
        }
        if (fr.features->channels != c) {
            throw ValidationError("uplift: channel mismatch across frames (" + std::to_string(c) + " vs " +
                                  std::to_string(fr.features->channels) + " for camera '" + fr.camera->id + "')");
        }
        if (fr.features->channels < 1) {
            throw ValidationError("uplift: feature maps need at least one channel");
        }
    }
    return c;
}

/// Feature map matching the camera resolution; resized only when needed.
const FeatureMap &matched(const ViewFeatures &fr, std::optional<FeatureMap> &storage)
{
    if (fr.features->height == fr.camera->height && fr.features->width == fr.camera->width) {
        return *fr.features;
    }
    storage = resize_bilinear(*fr.features, fr.camera->height, fr.camera->width);
    return *storage;
}

void accumulate_view(const WeightFragmentBuffer &buf, const FeatureMap &map, UpliftAccumulator &acc)
{
    const auto c = static_cast<std::size_t>(map.channels);
    double *num = acc.numerator.data();
    const std::size_t pixels = buf.pixel_count();
    for (std::size_t p = 0; p < pixels; ++p) {
        const float *fp = map.data.data() + p * c;
        for (const Fragment &f : buf.pixel(p)) {
            double *row = num + static_cast<std::size_t>(f.gaussian_id) * c;
            for (std::size_t k = 0; k < c; ++k) {
                row[k] += f.weight * fp[k];
            }
            acc.beta[f.gaussian_id] += f.weight;
            acc.count[f.gaussian_id] += 1.0;
        }
    }
}

UpliftAccumulator make_accumulator(std::size_t n, int c)
{
    UpliftAccumulator acc;
    acc.numerator = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), c);
    acc.beta.assign(n, 0.0);
    acc.count.assign(n, 0.0);
    return acc;
}

void add_into(UpliftAccumulator &dst, const UpliftAccumulator &src)
{
    dst.numerator += src.numerator;
    for (std::size_t i = 0; i < dst.beta.size(); ++i) {
        dst.beta[i] += src.beta[i];
        dst.count[i] += src.count[i];
    }
}

/// W f for one view, double precision, pixels x c.
std::vector<double> apply_forward(const WeightFragmentBuffer &buf, const FeatureMatrix &f)
{
    const auto c = static_cast<std::size_t>(f.cols());
    std::vector<double> out(buf.pixel_count() * c, 0.0);
    for (std::size_t p = 0; p < buf.pixel_count(); ++p) {
        double *dst = out.data() + p * c;
        for (const Fragment &fr : buf.pixel(p)) {
            const double *row = f.data() + static_cast<std::size_t>(fr.gaussian_id) * c;
            for (std::size_t k = 0; k < c; ++k) {
                dst[k] += fr.weight * row[k];
            }
        }
    }
    return out;
}

} // namespace

UpliftAccumulator accumulate_transpose(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                       const UpliftOptions &opts)
{
    const int c = check_frames(scene, frames);
    const std::size_t n = scene.size();
    UpliftAccumulator total = make_accumulator(n, c);

    // Views are processed in batches of per-view partial sums that are then
    // added in view order, so results do not depend on the worker count.
    const auto workers = static_cast<std::size_t>(std::max(1, omp_get_max_threads()));
    for (std::size_t start = 0; start < frames.size(); start += workers) {
        const std::size_t batch = std::min(workers, frames.size() - start);
        std::vector<UpliftAccumulator> partial(batch);
#pragma omp parallel for schedule(dynamic) if (batch > 1)
        for (std::int64_t b = 0; b < static_cast<std::int64_t>(batch); ++b) {
            const ViewFeatures &fr = frames[start + static_cast<std::size_t>(b)];
            std::optional<FeatureMap> resized;
            const FeatureMap &map = matched(fr, resized);
            const WeightFragmentBuffer buf = rasterize_weights(scene, *fr.camera, opts.raster);
            partial[static_cast<std::size_t>(b)] = make_accumulator(n, c);
            accumulate_view(buf, map, partial[static_cast<std::size_t>(b)]);
        }
        for (const auto &p : partial) {
            add_into(total, p);
        }
    }
    return total;
}

UpliftResult uplift(const GaussianScene &scene, std::span<const ViewFeatures> frames, const UpliftOptions &opts)
{
    UpliftAccumulator acc = accumulate_transpose(scene, frames, opts);
    UpliftResult res;
    res.features.values = std::move(acc.numerator);
    for (std::size_t i = 0; i < acc.beta.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (acc.beta[i] > 0.0) {
            res.features.values.row(row) /= acc.beta[i];
        } else {
            res.features.values.row(row).setZero();
            res.unseen.push_back(static_cast<std::uint32_t>(i));
        }
    }
    res.beta = std::move(acc.beta);
    return res;
}

GaussianFeatures uplift_count_normalized(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                         const UpliftOptions &opts)
{
    UpliftAccumulator acc = accumulate_transpose(scene, frames, opts);
    GaussianFeatures out;
    out.values = std::move(acc.numerator);
    for (std::size_t i = 0; i < acc.count.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (acc.count[i] > 0.0) {
            out.values.row(row) /= acc.count[i];
        } else {
            out.values.row(row).setZero();
        }
    }
    return out;
}

GaussianScene prune_by_importance(const GaussianScene &scene, std::span<const double> beta, double keep_fraction)
{
    if (beta.size() != scene.size()) {
        throw ValidationError("prune_by_importance: beta length " + std::to_string(beta.size()) +
                              " != Gaussian count " + std::to_string(scene.size()));
    }
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw ValidationError("prune_by_importance: keep_fraction must be in (0, 1]");
    }
    std::vector<std::uint32_t> order = scene.active_indices();
    const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(order.size())));
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return beta[a] > beta[b]; });
    GaussianScene out = scene;
    std::fill(out.active.begin(), out.active.end(), 0);
    for (std::size_t k = 0; k < std::min(keep, order.size()); ++k) {
        out.active[order[k]] = 1;
    }
    return out;
}

double reconstruction_loss(const GaussianScene &scene, std::span<const ViewFeatures> frames, const FeatureMatrix &f,
                           const UpliftOptions &opts)
{
    const int c = check_frames(scene, frames);
    if (f.cols() != c || static_cast<std::size_t>(f.rows()) != scene.size()) {
        throw ValidationError("reconstruction_loss: feature shape does not match scene and frames");
    }
    double loss = 0.0;
    for (const auto &fr : frames) {
        std::optional<FeatureMap> resized;
        const FeatureMap &map = matched(fr, resized);
        const WeightFragmentBuffer buf = rasterize_weights(scene, *fr.camera, opts.raster);
        const std::vector<double> pred = apply_forward(buf, f);
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double r = map.data[k] - pred[k];
            loss += 0.5 * r * r;
        }
    }
    return loss;
}

RefineResult refine_by_gradient(const GaussianScene &scene, std::span<const ViewFeatures> frames,
                                const FeatureMatrix &f0, int steps, double step_size, const UpliftOptions &opts)
{
    const int c = check_frames(scene, frames);
    if (steps < 0) {
        throw ValidationError("refine_by_gradient: steps must be >= 0");
    }
    if (f0.cols() != c || static_cast<std::size_t>(f0.rows()) != scene.size()) {
        throw ValidationError("refine_by_gradient: f0 must be " + std::to_string(scene.size()) + " x " +
                              std::to_string(c));
    }
    const std::size_t n = scene.size();
    const auto cc = static_cast<std::size_t>(c);

    std::vector<WeightFragmentBuffer> buffers(frames.size());
    std::vector<FeatureMap> maps(frames.size());
#pragma omp parallel for schedule(dynamic) if (frames.size() > 1)
    for (std::int64_t v = 0; v < static_cast<std::int64_t>(frames.size()); ++v) {
        const auto &fr = frames[static_cast<std::size_t>(v)];
        std::optional<FeatureMap> resized;
        maps[static_cast<std::size_t>(v)] = matched(fr, resized);
        buffers[static_cast<std::size_t>(v)] = rasterize_weights(scene, *fr.camera, opts.raster);
    }
    std::vector<double> beta(n, 0.0);
    for (const auto &buf : buffers) {
        for (const Fragment &f : buf.fragments) {
            beta[f.gaussian_id] += f.weight;
        }
    }

    RefineResult res;
    FeatureMatrix f = f0;
    FeatureMatrix grad(static_cast<Eigen::Index>(n), c);
    for (int step = 0; step <= steps; ++step) {
        grad.setZero();
        double loss = 0.0;
        for (std::size_t v = 0; v < buffers.size(); ++v) {
            const auto &buf = buffers[v];
            std::vector<double> resid = apply_forward(buf, f);
            for (std::size_t k = 0; k < resid.size(); ++k) {
                resid[k] -= maps[v].data[k];
                loss += 0.5 * resid[k] * resid[k];
            }
            for (std::size_t p = 0; p < buf.pixel_count(); ++p) {
                const double *rp = resid.data() + p * cc;
                for (const Fragment &fr : buf.pixel(p)) {
                    double *row = grad.data() + static_cast<std::size_t>(fr.gaussian_id) * cc;
                    for (std::size_t k = 0; k < cc; ++k) {
                        row[k] += fr.weight * rp[k];
                    }
                }
            }
        }
        if (!std::isfinite(loss)) {
            throw NumericError("refine_by_gradient: non-finite loss at step " + std::to_string(step));
        }
        res.loss.push_back(loss);
        if (step == steps) {
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (beta[i] > 0.0) {
                const auto row = static_cast<Eigen::Index>(i);
                f.row(row) -= (step_size / beta[i]) * grad.row(row);
            }
        }
        if (!f.allFinite()) {
            throw NumericError("refine_by_gradient: non-finite features after step " + std::to_string(step + 1));
        }
    }
    res.features.values = std::move(f);
    return res;
}

FeatureMap to_feature_map(const RenderOutput &out, const std::string &camera_id)
{
    FeatureMap map;
    map.height = out.height;
    map.width = out.width;
    map.channels = out.channels;
    map.data = out.values;
    map.camera_id = camera_id;
    return map;
}

FeatureMap reproject_mask(const GaussianScene &scene, const Camera &ref_cam, const FeatureMap &ref_mask,
                          const Camera &target_cam, const UpliftOptions &opts)
{
    if (ref_mask.channels != 1) {
        throw ValidationError("reproject_mask: mask must have a single channel");
    }
    const ViewFeatures frame{&ref_cam, &ref_mask};
    const UpliftResult up = uplift(scene, std::span(&frame, 1), opts);
    return to_feature_map(render(scene, target_cam, up.features.values, opts.raster), target_cam.id);
}

} // namespace splatlift
