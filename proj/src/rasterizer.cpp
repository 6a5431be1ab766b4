// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/rasterizer.hpp"

#include "splatlift/error.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splatlift {

std::vector<ProjectedGaussian> project(const GaussianScene &scene, const Camera &cam, const RasterConfig &cfg,
                                       ProjectionStats *stats)
{
    ProjectionStats local;
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());

    const Eigen::Matrix3d rot = cam.rotation();
    const Eigen::Vector3d trans = cam.translation();
    const double s2 = cfg.extent_sigmas * cfg.extent_sigmas;

    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!scene.is_active(i)) {
            continue;
        }
        const Gaussian &g = scene.gaussians[i];
        const Eigen::Vector3d pc = rot * g.mean + trans;
        const double z = pc.z();
        if (!(z > cfg.near_plane)) {
            ++local.culled_near;
            continue;
        }
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z), //
            0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
        const Eigen::Matrix<double, 2, 3> t = jac * rot;
        Eigen::Matrix2d cov2d = t * covariance_of(g) * t.transpose();
        cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
        cov2d(0, 0) += cfg.cov2d_blur;
        cov2d(1, 1) += cfg.cov2d_blur;
        const double det = cov2d.determinant();
        if (!(det > 0.0) || !std::isfinite(det)) {
            ++local.singular;
            continue;
        }

        ProjectedGaussian pg;
        pg.gaussian_id = static_cast<std::uint32_t>(i);
        pg.mean2d = {cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy};
        pg.cov2d = cov2d;
        pg.conic << cov2d(1, 1) / det, -cov2d(0, 1) / det, -cov2d(1, 0) / det, cov2d(0, 0) / det;
        pg.depth = z;
        pg.opacity = g.opacity;

        const double ex = std::sqrt(s2 * cov2d(0, 0));
        const double ey = std::sqrt(s2 * cov2d(1, 1));
        const double fx0 = std::ceil(pg.mean2d.x() - ex - 0.5);
        const double fx1 = std::floor(pg.mean2d.x() + ex - 0.5);
        const double fy0 = std::ceil(pg.mean2d.y() - ey - 0.5);
        const double fy1 = std::floor(pg.mean2d.y() + ey - 0.5);
        if (fx1 < 0.0 || fy1 < 0.0 || fx0 > cam.width - 1 || fy0 > cam.height - 1 || fx0 > fx1 || fy0 > fy1) {
            ++local.culled_frame;
            continue;
        }
        pg.x_min = static_cast<int>(std::max(fx0, 0.0));
        pg.x_max = static_cast<int>(std::min(fx1, static_cast<double>(cam.width - 1)));
        pg.y_min = static_cast<int>(std::max(fy0, 0.0));
        pg.y_max = static_cast<int>(std::min(fy1, static_cast<double>(cam.height - 1)));
        out.push_back(pg);
    }
    if (stats) {
        *stats = local;
    }
    return out;
}

WeightFragmentBuffer rasterize_weights(const GaussianScene &scene, const Camera &cam, const RasterConfig &cfg)
{
    cam.validate();
    if (cfg.tile_size <= 0) {
        throw ValidationError("tile_size must be positive");
    }
    WeightFragmentBuffer buf;
    buf.width = cam.width;
    buf.height = cam.height;
    buf.offsets.assign(buf.pixel_count() + 1, 0);

    std::vector<ProjectedGaussian> proj = project(scene, cam, cfg, &buf.stats);
    if (proj.empty()) {
        return buf;
    }
    std::sort(proj.begin(), proj.end(), [](const ProjectedGaussian &a, const ProjectedGaussian &b) {
        return a.depth < b.depth || (a.depth == b.depth && a.gaussian_id < b.gaussian_id);
    });

    const int ts = cfg.tile_size;
    const int tiles_x = (cam.width + ts - 1) / ts;
    const int tiles_y = (cam.height + ts - 1) / ts;
    const int tile_count = tiles_x * tiles_y;

    // depth-ordered candidate lists per tile
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tile_count));
    for (std::size_t k = 0; k < proj.size(); ++k) {
        const auto &pg = proj[k];
        for (int ty = pg.y_min / ts; ty <= pg.y_max / ts; ++ty) {
            for (int tx = pg.x_min / ts; tx <= pg.x_max / ts; ++tx) {
                bins[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(static_cast<std::uint32_t>(k));
            }
        }
    }

    struct TileResult {
        std::vector<Fragment> fragments;
        std::vector<std::uint32_t> counts;
    };
    std::vector<TileResult> tiles(static_cast<std::size_t>(tile_count));
    const double s2 = cfg.extent_sigmas * cfg.extent_sigmas;

#pragma omp parallel for schedule(dynamic)
    for (int tile = 0; tile < tile_count; ++tile) {
        const int x0 = (tile % tiles_x) * ts;
        const int y0 = (tile / tiles_x) * ts;
        const int x1 = std::min(x0 + ts, cam.width);
        const int y1 = std::min(y0 + ts, cam.height);
        TileResult &res = tiles[static_cast<std::size_t>(tile)];
        res.counts.reserve(static_cast<std::size_t>((x1 - x0) * (y1 - y0)));
        const auto &bin = bins[static_cast<std::size_t>(tile)];

        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                double transmittance = 1.0;
                std::uint32_t count = 0;
                for (std::uint32_t k : bin) {
                    const ProjectedGaussian &pg = proj[k];
                    if (x < pg.x_min || x > pg.x_max || y < pg.y_min || y > pg.y_max) {
                        continue;
                    }
                    const double dx = px - pg.mean2d.x();
                    const double dy = py - pg.mean2d.y();
                    const double maha =
                        pg.conic(0, 0) * dx * dx + 2.0 * pg.conic(0, 1) * dx * dy + pg.conic(1, 1) * dy * dy;
                    if (maha > s2) {
                        continue;
                    }
                    const double alpha = std::min(cfg.alpha_max, pg.opacity * std::exp(-0.5 * maha));
                    if (alpha < cfg.alpha_min) {
                        continue;
                    }
                    const double next = transmittance * (1.0 - alpha);
                    if (next < cfg.transmittance_min) {
                        break;
                    }
                    res.fragments.push_back({pg.gaussian_id, static_cast<float>(alpha), alpha * transmittance});
                    transmittance = next;
                    ++count;
                }
                res.counts.push_back(count);
            }
        }
    }

    // stitch tiles into row-major pixel order
    for (int tile = 0; tile < tile_count; ++tile) {
        const int x0 = (tile % tiles_x) * ts;
        const int y0 = (tile / tiles_x) * ts;
        const int x1 = std::min(x0 + ts, cam.width);
        const int y1 = std::min(y0 + ts, cam.height);
        const auto &counts = tiles[static_cast<std::size_t>(tile)].counts;
        std::size_t local = 0;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                buf.offsets[static_cast<std::size_t>(y) * cam.width + x + 1] = counts[local++];
            }
        }
    }
    std::partial_sum(buf.offsets.begin(), buf.offsets.end(), buf.offsets.begin());
    buf.fragments.resize(buf.offsets.back());

#pragma omp parallel for schedule(dynamic)
    for (int tile = 0; tile < tile_count; ++tile) {
        const int x0 = (tile % tiles_x) * ts;
        const int y0 = (tile / tiles_x) * ts;
        const int x1 = std::min(x0 + ts, cam.width);
        const int y1 = std::min(y0 + ts, cam.height);
        const TileResult &res = tiles[static_cast<std::size_t>(tile)];
        std::size_t src = 0;
        std::size_t local = 0;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
                const std::uint32_t n = res.counts[local++];
                std::copy_n(res.fragments.begin() + static_cast<std::ptrdiff_t>(src), n,
                            buf.fragments.begin() + static_cast<std::ptrdiff_t>(buf.offsets[p]));
                src += n;
            }
        }
    }
    return buf;
}

RenderOutput render(const WeightFragmentBuffer &buffer, const FeatureMatrix &features)
{
    if (features.cols() < 1) {
        throw ValidationError("render: feature channel count must be >= 1");
    }
    RenderOutput out;
    out.width = buffer.width;
    out.height = buffer.height;
    out.channels = static_cast<int>(features.cols());
    const std::size_t pixels = buffer.pixel_count();
    const auto c = static_cast<std::size_t>(out.channels);
    out.values.assign(pixels * c, 0.0f);
    out.alpha.assign(pixels, 0.0f);

    for (const Fragment &f : buffer.fragments) {
        if (f.gaussian_id >= features.rows()) {
            throw ValidationError("render: feature rows (" + std::to_string(features.rows()) +
                                  ") do not cover Gaussian " + std::to_string(f.gaussian_id));
        }
    }

#pragma omp parallel
    {
        std::vector<double> acc(c);
#pragma omp for schedule(static)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(pixels); ++p) {
            std::fill(acc.begin(), acc.end(), 0.0);
            double wsum = 0.0;
            for (const Fragment &f : buffer.pixel(static_cast<std::size_t>(p))) {
                const double *row = features.data() + static_cast<std::size_t>(f.gaussian_id) * c;
                for (std::size_t k = 0; k < c; ++k) {
                    acc[k] += f.weight * row[k];
                }
                wsum += f.weight;
            }
            float *dst = out.values.data() + static_cast<std::size_t>(p) * c;
            for (std::size_t k = 0; k < c; ++k) {
                dst[k] = static_cast<float>(acc[k]);
            }
            out.alpha[static_cast<std::size_t>(p)] = static_cast<float>(wsum);
        }
    }
    return out;
}

RenderOutput render(const GaussianScene &scene, const Camera &cam, const FeatureMatrix &features,
                    const RasterConfig &cfg)
{
    if (static_cast<std::size_t>(features.rows()) != scene.size()) {
        throw ValidationError("render: feature rows " + std::to_string(features.rows()) + " != Gaussian count " +
                              std::to_string(scene.size()));
    }
    return render(rasterize_weights(scene, cam, cfg), features);
}

FeatureMatrix view_colors(const GaussianScene &scene, const Camera &cam)
{
    FeatureMatrix colors(static_cast<Eigen::Index>(scene.size()), 3);
    const Eigen::Vector3d center = cam.center();
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Gaussian &g = scene.gaussians[i];
        colors.row(static_cast<Eigen::Index>(i)) = evaluate_sh(g, scene.sh_degree, g.mean - center).transpose();
    }
    return colors;
}

RenderOutput render_rgb(const GaussianScene &scene, const Camera &cam, const Eigen::Vector3d &background,
                        const RasterConfig &cfg)
{
    RenderOutput out = render(scene, cam, view_colors(scene, cam), cfg);
    for (std::size_t p = 0; p < out.alpha.size(); ++p) {
        const double rest = 1.0 - out.alpha[p];
        for (int k = 0; k < 3; ++k) {
            out.values[p * 3 + static_cast<std::size_t>(k)] += static_cast<float>(rest * background[k]);
        }
    }
    return out;
}

} // namespace splatlift
